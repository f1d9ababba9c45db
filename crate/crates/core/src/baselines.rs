//! Classical time-series momentum strategies.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::indicators::{macd_combined, MACD_FIRST_VALID, MACD_SCALES};

/// Look-back of the sign-of-return rule, in trading days.
pub const SIGN_LOOKBACK: usize = 252;

/// Normaliser in the MACD response function.
pub const PHI_SCALE: f64 = 0.89;

/// Largest value of [`phi`], reached at `x = √2`.
pub const PHI_PEAK: f64 = 0.963_779_646_023_266_2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    Long,
    SignR,
    MacdSignal,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 3] = [BaselineKind::Long, BaselineKind::SignR, BaselineKind::MacdSignal];

    pub fn as_str(self) -> &'static str {
        match self {
            BaselineKind::Long => "Long",
            BaselineKind::SignR => "Sign(R)",
            BaselineKind::MacdSignal => "MACD",
        }
    }
}

impl fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BaselineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "long" | "long_only" => Ok(BaselineKind::Long),
            "sign" | "sign_r" | "signr" | "sign(r)" => Ok(BaselineKind::SignR),
            "macd" | "macd_signal" => Ok(BaselineKind::MacdSignal),
            _ => Err(Error::Config(format!("unknown baseline `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineSpec {
    pub kind: BaselineKind,
    /// (short, long) EWM scales of the MACD signal.
    pub macd_scales: Vec<(usize, usize)>,
    /// Average the per-scale MACDs (true) or add them (false).
    pub macd_average: bool,
}

impl BaselineSpec {
    pub fn new(kind: BaselineKind) -> BaselineSpec {
        BaselineSpec {
            kind,
            macd_scales: MACD_SCALES.to_vec(),
            macd_average: true,
        }
    }

    /// Earliest index with a defined position.
    pub fn first_valid_index(&self) -> usize {
        match self.kind {
            BaselineKind::Long => 0,
            BaselineKind::SignR => SIGN_LOOKBACK,
            BaselineKind::MacdSignal => MACD_FIRST_VALID,
        }
    }

    /// Position at the close of day `t`, using `prices[..=t]` only.
    pub fn position(&self, prices: &[f64], t: usize) -> Result<f64> {
        Ok(self.positions(prices, t, 1)?[0])
    }

    /// Positions for days `first..first + count`, using prices up to the last of them only.
    pub fn positions(&self, prices: &[f64], first: usize, count: usize) -> Result<Vec<f64>> {
        let end = first + count;
        if end > prices.len() {
            return Err(Error::OutOfRange {
                index: end,
                len: prices.len(),
            });
        }
        if first < self.first_valid_index() {
            return Err(Error::InsufficientHistory(format!(
                "{} needs index >= {}, got {first}",
                self.kind,
                self.first_valid_index()
            )));
        }
        let history = &prices[..end];
        Ok(match self.kind {
            BaselineKind::Long => vec![long_only(); count],
            BaselineKind::SignR => (first..end)
                .map(|t| sign_of(history[t] - history[t - SIGN_LOOKBACK]))
                .collect(),
            BaselineKind::MacdSignal => {
                let m = macd_combined(history, &self.macd_scales, self.macd_average)?;
                m[first..end].iter().map(|&x| phi(x)).collect()
            }
        })
    }
}

pub fn long_only() -> f64 {
    1.0
}

fn sign_of(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Sign of the trailing one-year price change; an exact tie is flat.
pub fn sign_momentum(prices: &[f64], t: usize) -> Result<f64> {
    BaselineSpec::new(BaselineKind::SignR).position(prices, t)
}

/// `φ(MACD)` of the combined multi-scale MACD at `t`.
pub fn macd_signal(prices: &[f64], t: usize, spec: &BaselineSpec) -> Result<f64> {
    let spec = BaselineSpec {
        kind: BaselineKind::MacdSignal,
        ..spec.clone()
    };
    spec.position(prices, t)
}

/// MACD response function `x · exp(-x²/4) / 0.89`.
pub fn phi(x: f64) -> f64 {
    x * (-x * x / 4.0).exp() / PHI_SCALE
}
