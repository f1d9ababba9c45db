#![allow(dead_code)]

use std::sync::Arc;

use chrono::NaiveDate;
use futrl::env::ContractData;
use futrl::market_data::{generate_synthetic, AssetClass, DriftRegime, PriceSeries, SyntheticSpec};

pub fn start() -> NaiveDate {
    NaiveDate::from_ymd_opt(2005, 1, 3).unwrap()
}

/// Seeded random-walk contract with alternating drift regimes.
pub fn series(ticker: &str, n_days: usize, vol: f64, seed: u64) -> PriceSeries {
    let spec = SyntheticSpec {
        ticker: ticker.into(),
        asset_class: AssetClass::Commodity,
        n_days,
        drift_regimes: vec![
            DriftRegime { length: 90, drift: 0.3 },
            DriftRegime {
                length: 70,
                drift: -0.25,
            },
        ],
        annualized_vol: vol,
        start_price: 80.0,
        start_date: start(),
    };
    generate_synthetic(&spec, seed).unwrap()
}

pub fn contract(ticker: &str, n_days: usize, seed: u64) -> Arc<ContractData> {
    Arc::new(ContractData::new(series(ticker, n_days, 0.2, seed)).unwrap())
}
