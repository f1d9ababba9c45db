//! Contract universes: the bundled synthetic one or CSV files on disk.

use std::path::Path;
use std::sync::Arc;

use anyhow::{bail, Context, Result};

use futrl::env::ContractData;
use futrl::market_data::{
    generate_synthetic, load_csv, write_csv, AssetClass, DriftRegime, InstrumentCatalog, PriceSeries, SyntheticSpec,
};

use crate::config::{DataSource, RunConfig, SyntheticConfig};

fn class_prefix(class: AssetClass) -> &'static str {
    match class {
        AssetClass::Commodity => "CMD",
        AssetClass::EquityIndex => "EQ",
        AssetClass::FixedIncome => "FI",
        AssetClass::FX => "FX",
    }
}

/// Regime lengths (days), drift magnitudes and vol differ by class so the
/// universe has persistent trends, drifting indices, slow rate cycles and
/// choppy currencies. `k` varies each contract within its class.
fn class_spec(class: AssetClass, k: usize) -> (Vec<DriftRegime>, f64) {
    let f = 1.0 + 0.25 * k as f64;
    let cycle = |len: f64, up: f64, down: f64| {
        vec![
            DriftRegime {
                length: len.round() as usize,
                drift: up,
            },
            DriftRegime {
                length: (len * 0.8).round() as usize,
                drift: down,
            },
        ]
    };
    match class {
        AssetClass::Commodity => (cycle(160.0 * f, 0.45, -0.40), 0.25),
        AssetClass::EquityIndex => (cycle(400.0 * f, 0.25, -0.20), 0.18),
        AssetClass::FixedIncome => (cycle(300.0 * f, 0.12, -0.10), 0.06),
        AssetClass::FX => (cycle(45.0 * f, 0.15, -0.15), 0.10),
    }
}

/// Specs of the synthetic universe: `contracts_per_class` contracts in each asset class.
pub fn synthetic_specs(cfg: &SyntheticConfig) -> Vec<(SyntheticSpec, u64)> {
    let mut out = Vec::new();
    for (ci, class) in AssetClass::ALL.iter().enumerate() {
        for k in 0..cfg.contracts_per_class {
            let (drift_regimes, annualized_vol) = class_spec(*class, k);
            let spec = SyntheticSpec {
                ticker: format!("{}{}", class_prefix(*class), k + 1),
                asset_class: *class,
                n_days: cfg.n_days,
                drift_regimes,
                annualized_vol,
                start_price: 50.0 * (1 + ci + k) as f64,
                start_date: cfg.start_date,
            };
            let seed = cfg.seed.wrapping_mul(1000).wrapping_add((ci * 100 + k) as u64);
            out.push((spec, seed));
        }
    }
    out
}

pub fn synthetic_series(cfg: &SyntheticConfig) -> Result<Vec<PriceSeries>> {
    synthetic_specs(cfg)
        .iter()
        .map(|(spec, seed)| generate_synthetic(spec, *seed).with_context(|| format!("generating {}", spec.ticker)))
        .collect()
}

/// Write the synthetic universe as `<TICKER>.csv` files plus `catalog.csv`.
pub fn write_universe(series: &[PriceSeries], dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut w = csv::Writer::from_path(dir.join("catalog.csv"))?;
    w.write_record(["ticker", "description", "asset_class"])?;
    for s in series {
        write_csv(s, dir.join(format!("{}.csv", s.ticker())))?;
        w.write_record([s.ticker(), "synthetic", s.asset_class().as_str()])?;
    }
    w.flush()?;
    Ok(())
}

fn load_dir(cfg: &RunConfig) -> Result<Vec<PriceSeries>> {
    let dir = &cfg.data.dir;
    let catalog = if cfg.data.catalog.as_os_str().is_empty() {
        let default = dir.join("catalog.csv");
        if default.exists() {
            InstrumentCatalog::load(&default)?
        } else {
            InstrumentCatalog::default()
        }
    } else {
        InstrumentCatalog::load(&cfg.data.catalog)?
    };
    let mut paths: Vec<_> = std::fs::read_dir(dir)
        .with_context(|| format!("reading data directory {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv") && p.file_name().is_some_and(|n| n != "catalog.csv"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        bail!("no price files in {}", dir.display());
    }
    paths
        .iter()
        .map(|p| load_csv(p, &catalog, None).with_context(|| format!("loading {}", p.display())))
        .collect()
}

/// All contracts of the configured universe, with features precomputed.
pub fn load_universe(cfg: &RunConfig) -> Result<Vec<Arc<ContractData>>> {
    let series = match cfg.data.source {
        DataSource::Synthetic => synthetic_series(&cfg.synthetic)?,
        DataSource::Csv => load_dir(cfg)?,
    };
    series
        .into_iter()
        .map(|s| {
            let t = s.ticker().to_string();
            ContractData::new(s)
                .map(Arc::new)
                .with_context(|| format!("computing features for {t}"))
        })
        .collect()
}
