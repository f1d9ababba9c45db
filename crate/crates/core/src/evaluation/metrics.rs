use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market_data::TRADING_DAYS;

/// Column labels of [`MetricsReport::values`], in reporting order.
pub const METRIC_NAMES: [&str; 9] = [
    "E(R)",
    "Std(R)",
    "DD",
    "Sharpe",
    "Sortino",
    "MDD",
    "Calmar",
    "% +ve Ret",
    "Ave. P / Ave. L",
];

/// Whether a larger value of each metric is better; `None` for Std(R), which is a target rather than a score.
pub const HIGHER_IS_BETTER: [Option<bool>; 9] = [
    Some(true),
    None,
    Some(false),
    Some(true),
    Some(true),
    Some(false),
    Some(true),
    Some(true),
    Some(true),
];

/// The nine portfolio statistics. Undefined ratios (zero denominators) are `None`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Annualised mean return.
    pub expected_return: f64,
    /// Annualised sample standard deviation.
    pub std: f64,
    /// Annualised sample standard deviation of the strictly negative returns.
    pub downside_deviation: Option<f64>,
    pub sharpe: Option<f64>,
    pub sortino: Option<f64>,
    /// Largest peak-to-trough loss of the compounded equity curve, as a fraction of the peak.
    pub max_drawdown: f64,
    pub calmar: Option<f64>,
    pub pct_positive: f64,
    /// Mean positive return over the magnitude of the mean negative return.
    pub avg_profit_over_loss: Option<f64>,
}

impl MetricsReport {
    pub fn values(&self) -> [Option<f64>; 9] {
        [
            Some(self.expected_return),
            Some(self.std),
            self.downside_deviation,
            self.sharpe,
            self.sortino,
            Some(self.max_drawdown),
            self.calmar,
            Some(self.pct_positive),
            self.avg_profit_over_loss,
        ]
    }
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Sample (n - 1) standard deviation; `None` below two observations.
fn sample_std(x: &[f64]) -> Option<f64> {
    if x.len() < 2 {
        return None;
    }
    let m = mean(x);
    Some((x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() - 1) as f64).sqrt())
}

/// Denominators at or below this are treated as zero.
const DEGENERATE_EPS: f64 = 1e-12;

fn positive_ratio(num: f64, den: Option<f64>) -> Option<f64> {
    den.filter(|d| *d > DEGENERATE_EPS).map(|d| num / d)
}

/// Maximum drawdown of an equity path, measured from the running peak.
pub fn max_drawdown(equity: &[f64]) -> f64 {
    let mut peak = f64::NEG_INFINITY;
    let mut worst = 0.0f64;
    for &e in equity {
        peak = peak.max(e);
        if peak > 0.0 {
            worst = worst.max(1.0 - e / peak);
        }
    }
    worst.clamp(0.0, 1.0)
}

/// Compounded equity path starting at 1.0 (length `returns.len() + 1`).
pub fn equity_curve(returns: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(returns.len() + 1);
    let mut e = 1.0;
    out.push(e);
    for r in returns {
        e *= 1.0 + r;
        out.push(e);
    }
    out
}

/// All nine statistics of a daily return series.
pub fn compute_metrics(returns: &[f64], periods_per_year: f64) -> Result<MetricsReport> {
    if returns.len() < 2 {
        return Err(Error::DegenerateSeries(format!(
            "{} observations, need at least 2",
            returns.len()
        )));
    }
    if returns.iter().any(|r| !r.is_finite()) {
        return Err(Error::NonFiniteInput);
    }
    let root = periods_per_year.sqrt();
    let expected_return = mean(returns) * periods_per_year;
    let std = sample_std(returns).expect("n >= 2") * root;
    let negatives: Vec<f64> = returns.iter().copied().filter(|r| *r < 0.0).collect();
    let positives: Vec<f64> = returns.iter().copied().filter(|r| *r > 0.0).collect();
    let downside_deviation = sample_std(&negatives).map(|s| s * root);
    let max_drawdown = max_drawdown(&equity_curve(returns));
    let avg_profit_over_loss = if positives.is_empty() || negatives.is_empty() {
        None
    } else {
        Some(mean(&positives) / mean(&negatives).abs())
    };
    Ok(MetricsReport {
        expected_return,
        std,
        downside_deviation,
        sharpe: positive_ratio(expected_return, Some(std)),
        sortino: positive_ratio(expected_return, downside_deviation),
        max_drawdown,
        calmar: positive_ratio(expected_return, Some(max_drawdown)),
        pct_positive: positives.len() as f64 / returns.len() as f64,
        avg_profit_over_loss,
    })
}

/// Convenience for daily data.
pub fn compute_daily_metrics(returns: &[f64]) -> Result<MetricsReport> {
    compute_metrics(returns, TRADING_DAYS)
}
