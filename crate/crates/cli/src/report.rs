//! Report CSVs, the Table-2-style text table, and plots rendered from the CSVs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};

use futrl::evaluation::{ContractStats, HIGHER_IS_BETTER, METRIC_NAMES};

use crate::config::RunConfig;
use crate::pipeline::MetricsRow;
use crate::svg;

/// CSV headers of the nine metrics, in table order.
pub const METRIC_COLUMNS: [&str; 9] = [
    "expected_return",
    "std",
    "downside_deviation",
    "sharpe",
    "sortino",
    "max_drawdown",
    "calmar",
    "pct_positive",
    "avg_profit_over_loss",
];

/// Marker for statistics that are undefined (zero denominators).
pub const UNDEFINED: &str = "NA";

pub fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| UNDEFINED.to_string(), |x| x.to_string())
}

fn parse_opt(s: &str) -> Result<Option<f64>> {
    if s == UNDEFINED {
        Ok(None)
    } else {
        Ok(Some(s.parse().with_context(|| format!("bad number `{s}`"))?))
    }
}

pub fn write_metrics_csv(rows: &[MetricsRow], w: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(w);
    let mut header = vec!["scope", "strategy"];
    header.extend(METRIC_COLUMNS);
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![r.scope.clone(), r.strategy.clone()];
        rec.extend(r.metrics.values().iter().map(|v| fmt_opt(*v)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_per_contract_csv(rows: &[ContractStats], w: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(w);
    w.write_record([
        "strategy",
        "ticker",
        "asset_class",
        "sharpe",
        "turnover",
        "return_per_turnover",
    ])?;
    for r in rows {
        w.write_record([
            r.strategy.clone(),
            r.ticker.clone(),
            r.asset_class.as_str().to_string(),
            fmt_opt(r.sharpe),
            r.turnover.to_string(),
            fmt_opt(r.return_per_turnover),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// A parsed `metrics.csv` row.
#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub scope: String,
    pub strategy: String,
    pub values: [Option<f64>; 9],
}

pub fn read_metrics_csv(path: &Path) -> Result<Vec<TableRow>> {
    let mut rdr = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let mut values = [None; 9];
        for (k, v) in values.iter_mut().enumerate() {
            *v = parse_opt(rec.get(k + 2).context("short metrics row")?)?;
        }
        rows.push(TableRow {
            scope: rec[0].to_string(),
            strategy: rec[1].to_string(),
            values,
        });
    }
    Ok(rows)
}

/// Whether `rows[i]` holds the best value of column `k` within its scope.
fn is_best(rows: &[&TableRow], i: usize, k: usize) -> bool {
    let (Some(higher), Some(v)) = (HIGHER_IS_BETTER[k], rows[i].values[k]) else {
        return false;
    };
    rows.iter()
        .filter_map(|r| r.values[k])
        .all(|o| if higher { v >= o } else { v <= o })
}

/// Fixed-width table grouped by scope, best value per column marked with `*`.
pub fn format_table(title: &str, rows: &[TableRow]) -> String {
    let mut scopes: Vec<&str> = Vec::new();
    for r in rows {
        if !scopes.contains(&r.scope.as_str()) {
            scopes.push(&r.scope);
        }
    }
    let mut s = String::new();
    writeln!(s, "{title}").unwrap();
    writeln!(s, "Best value per column within each scope marked with *.").unwrap();
    writeln!(s).unwrap();
    write!(s, "{:<10}", "").unwrap();
    for name in METRIC_NAMES {
        write!(s, "{name:>17}").unwrap();
    }
    writeln!(s).unwrap();
    for scope in scopes {
        writeln!(s, "{scope}").unwrap();
        let group: Vec<&TableRow> = rows.iter().filter(|r| r.scope == scope).collect();
        for (i, r) in group.iter().enumerate() {
            write!(s, "  {:<8}", r.strategy).unwrap();
            for k in 0..9 {
                let cell = match r.values[k] {
                    Some(v) => format!("{v:.4}{}", if is_best(&group, i, k) { "*" } else { " " }),
                    None => format!("{UNDEFINED} "),
                };
                write!(s, "{cell:>17}").unwrap();
            }
            writeln!(s).unwrap();
        }
    }
    s
}

/// Render text tables and (optionally) SVG plots from the CSVs already under `out`.
pub fn render(out: &Path, cfg: &RunConfig) -> Result<()> {
    let rows = read_metrics_csv(&out.join("metrics.csv"))?;
    let title = format!(
        "Portfolio-level volatility targeting (sigma_tgt = {}), cost rate {}",
        cfg.reward.sigma_tgt, cfg.reward.bp
    );
    fs::write(out.join("table2.txt"), format_table(&title, &rows))?;
    let raw = out.join("metrics_raw.csv");
    if raw.exists() {
        let title = format!("Without portfolio volatility targeting, cost rate {}", cfg.reward.bp);
        fs::write(out.join("table3.txt"), format_table(&title, &read_metrics_csv(&raw)?))?;
    }
    if cfg.report.svg {
        render_plots(out)?;
    }
    Ok(())
}

fn render_plots(out: &Path) -> Result<()> {
    let equity = out.join("equity_curve.csv");
    if equity.exists() {
        let mut lines: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
        let mut rdr = csv::Reader::from_path(&equity)?;
        for rec in rdr.records() {
            let rec = rec?;
            let line = lines.entry(rec[1].to_string()).or_default();
            let x = line.len() as f64;
            line.push((x, rec[2].parse()?));
        }
        let series: Vec<(String, Vec<(f64, f64)>)> = lines.into_iter().collect();
        fs::write(
            out.join("equity_curve.svg"),
            svg::line_chart(
                "Cumulative return, all contracts",
                "trading day",
                "cumulative return",
                &series,
            ),
        )?;
    }
    let sweep = out.join("cost_sweep.csv");
    if sweep.exists() {
        let mut sharpe: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
        let mut cost: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
        let mut rdr = csv::Reader::from_path(&sweep)?;
        for rec in rdr.records() {
            let rec = rec?;
            let bp: f64 = rec[1].parse()?;
            if let Some(v) = parse_opt(&rec[2])? {
                sharpe.entry(rec[0].to_string()).or_default().push((bp, v));
            }
            if let Some(v) = parse_opt(&rec[3])? {
                cost.entry(rec[0].to_string()).or_default().push((bp, v));
            }
        }
        fs::write(
            out.join("cost_sweep_sharpe.svg"),
            svg::line_chart(
                "Sharpe ratio by cost rate",
                "cost rate (bp)",
                "Sharpe",
                &sharpe.into_iter().collect::<Vec<_>>(),
            ),
        )?;
        fs::write(
            out.join("cost_sweep_cost.svg"),
            svg::line_chart(
                "Average cost per contract",
                "cost rate (bp)",
                "cost per contract",
                &cost.into_iter().collect::<Vec<_>>(),
            ),
        )?;
    }
    let per = out.join("per_contract.csv");
    if per.exists() {
        let mut groups: Vec<(String, Vec<f64>)> = Vec::new();
        let mut rdr = csv::Reader::from_path(&per)?;
        for rec in rdr.records() {
            let rec = rec?;
            let Some(v) = parse_opt(&rec[3])? else { continue };
            match groups.iter_mut().find(|(g, _)| g == &rec[0]) {
                Some((_, vals)) => vals.push(v),
                None => groups.push((rec[0].to_string(), vec![v])),
            }
        }
        fs::write(
            out.join("per_contract_sharpe.svg"),
            svg::box_plot("Per-contract Sharpe ratio", &groups),
        )?;
    }
    Ok(())
}
