//! Minimal SVG line charts and box plots.

use std::fmt::Write;

const W: f64 = 720.0;
const H: f64 = 420.0;
const PAD: f64 = 60.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

fn bounds(vals: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

fn header(title: &str) -> String {
    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">"#
    )
    .unwrap();
    writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#).unwrap();
    writeln!(
        s,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{title}</text>"#,
        W / 2.0
    )
    .unwrap();
    s
}

fn axes(s: &mut String, xlabel: &str, ylabel: &str, (ylo, yhi): (f64, f64)) {
    let (x0, y0, y1) = (PAD, H - PAD, PAD);
    writeln!(
        s,
        r#"<line x1="{x0}" y1="{y0}" x2="{}" y2="{y0}" stroke="black"/>"#,
        W - PAD
    )
    .unwrap();
    writeln!(s, r#"<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>"#).unwrap();
    writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">{xlabel}</text>"#,
        W / 2.0,
        H - 20.0
    )
    .unwrap();
    writeln!(
        s,
        r#"<text x="16" y="{}" transform="rotate(-90 16 {})" text-anchor="middle">{ylabel}</text>"#,
        H / 2.0,
        H / 2.0
    )
    .unwrap();
    writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="end">{ylo:.3}</text>"#,
        x0 - 4.0,
        y0
    )
    .unwrap();
    writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="end">{yhi:.3}</text>"#,
        x0 - 4.0,
        y1 + 4.0
    )
    .unwrap();
}

pub fn line_chart(title: &str, xlabel: &str, ylabel: &str, series: &[(String, Vec<(f64, f64)>)]) -> String {
    let xb = bounds(series.iter().flat_map(|(_, p)| p.iter().map(|q| q.0)));
    let yb = bounds(series.iter().flat_map(|(_, p)| p.iter().map(|q| q.1)));
    let sx = |x: f64| PAD + (x - xb.0) / (xb.1 - xb.0) * (W - 2.0 * PAD);
    let sy = |y: f64| H - PAD - (y - yb.0) / (yb.1 - yb.0) * (H - 2.0 * PAD);
    let mut s = header(title);
    axes(&mut s, xlabel, ylabel, yb);
    for (i, (name, pts)) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let path: Vec<String> = pts
            .iter()
            .map(|(x, y)| format!("{:.1},{:.1}", sx(*x), sy(*y)))
            .collect();
        writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            path.join(" ")
        )
        .unwrap();
        let ly = PAD + 16.0 * i as f64;
        writeln!(
            s,
            r#"<text x="{}" y="{ly}" fill="{color}">{name}</text>"#,
            W - PAD + 4.0
        )
        .unwrap();
    }
    s.push_str("</svg>\n");
    s
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (i, f) = (pos.floor() as usize, pos.fract());
    if i + 1 < sorted.len() {
        sorted[i] * (1.0 - f) + sorted[i + 1] * f
    } else {
        sorted[i]
    }
}

pub fn box_plot(title: &str, groups: &[(String, Vec<f64>)]) -> String {
    let yb = bounds(groups.iter().flat_map(|(_, v)| v.iter().copied()));
    let sy = |y: f64| H - PAD - (y - yb.0) / (yb.1 - yb.0) * (H - 2.0 * PAD);
    let mut s = header(title);
    axes(&mut s, "strategy", "value", yb);
    let slot = (W - 2.0 * PAD) / groups.len().max(1) as f64;
    for (i, (name, vals)) in groups.iter().enumerate() {
        if vals.is_empty() {
            continue;
        }
        let mut v = vals.clone();
        v.sort_by(f64::total_cmp);
        let [lo, q1, med, q3, hi] = [0.0, 0.25, 0.5, 0.75, 1.0].map(|q| sy(quantile(&v, q)));
        let cx = PAD + slot * (i as f64 + 0.5);
        let half = slot * 0.25;
        writeln!(
            s,
            r#"<line x1="{cx:.1}" y1="{lo:.1}" x2="{cx:.1}" y2="{hi:.1}" stroke="black"/>"#
        )
        .unwrap();
        writeln!(
            s,
            r#"<rect x="{:.1}" y="{q3:.1}" width="{:.1}" height="{:.1}" fill="{}" stroke="black"/>"#,
            cx - half,
            2.0 * half,
            (q1 - q3).max(0.5),
            PALETTE[i % PALETTE.len()]
        )
        .unwrap();
        writeln!(
            s,
            r#"<line x1="{:.1}" y1="{med:.1}" x2="{:.1}" y2="{med:.1}" stroke="black" stroke-width="2"/>"#,
            cx - half,
            cx + half
        )
        .unwrap();
        writeln!(
            s,
            r#"<text x="{cx:.1}" y="{}" text-anchor="middle">{name}</text>"#,
            H - PAD + 16.0
        )
        .unwrap();
    }
    s.push_str("</svg>\n");
    s
}
