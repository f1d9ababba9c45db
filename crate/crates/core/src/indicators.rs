//! State-space features: normalized close, volatility-normalized returns over
//! four horizons, the Baz et al. MACD and Wilder's RSI, plus 60-row state windows.
//!
//! Series-level functions return one value per input index. Indices where a
//! value is not yet defined hold `NaN`; every index at or after the
//! documented first valid index is finite. Any zero denominator yields 0.

use std::path::Path;

use chrono::NaiveDate;

use crate::error::{Error, Result};
use crate::market_data::PriceSeries;

/// Span of the EWM volatility estimate.
pub const VOL_SPAN: usize = 60;
/// Horizons of the 1m/2m/3m/1y return features, in trading days.
pub const RETURN_HORIZONS: [usize; 4] = [21, 42, 63, 252];
/// Rolling price window normalizing the MACD numerator.
pub const MACD_PRICE_WINDOW: usize = 63;
/// Rolling window normalizing the raw MACD signal.
pub const MACD_SIGNAL_WINDOW: usize = 252;
/// Default (short, long) time-scale pairs.
pub const MACD_SCALES: [(usize, usize); 3] = [(8, 24), (16, 48), (32, 96)];
pub const RSI_WINDOW: usize = 30;
pub const ZSCORE_WINDOW: usize = 252;
/// Rows in a state window.
pub const WINDOW_LEN: usize = 60;
/// Features per row.
pub const FEATURE_COUNT: usize = 7;
pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = ["norm_close", "ret_1m", "ret_2m", "ret_3m", "ret_1y", "macd", "rsi"];
/// Column index of the RSI feature.
pub const RSI_COLUMN: usize = 6;
/// Network inputs are clipped to this magnitude.
pub const FEATURE_CLIP: f64 = 10.0;

/// Denominators at or below this (relative to the quantity's own scale) count as zero.
const DEGENERATE_EPS: f64 = 1e-12;

fn ratio_or_zero(num: f64, den: f64, scale: f64) -> f64 {
    if den <= DEGENERATE_EPS * scale.abs().max(1.0) {
        0.0
    } else {
        num / den
    }
}

/// Exponentially weighted standard deviation with weight `(1-α)^k` at lag `k`,
/// `α = 2/(span+1)`, weights renormalized over the available history
/// (population form). `out[0] = 0`.
pub fn ewm_std(x: &[f64], span: usize) -> Result<Vec<f64>> {
    if span < 2 {
        return Err(Error::BadSpan(span));
    }
    let decay = 1.0 - 2.0 / (span as f64 + 1.0);
    let mut weight = 0.0;
    let mut mean = 0.0;
    let mut m2 = 0.0;
    let mut out = Vec::with_capacity(x.len());
    for &v in x {
        // Weighted Welford update with exponential forgetting of old weights.
        weight = decay * weight + 1.0;
        m2 *= decay;
        let delta = v - mean;
        mean += delta / weight;
        m2 += delta * (v - mean);
        out.push((m2 / weight).max(0.0).sqrt());
    }
    Ok(out)
}

/// Exponentially weighted mean with smoothing `alpha`, weights renormalized over history.
pub fn ewm_mean(x: &[f64], alpha: f64) -> Vec<f64> {
    let decay = 1.0 - alpha;
    let mut num = 0.0;
    let mut den = 0.0;
    x.iter()
        .map(|&v| {
            num = decay * num + v;
            den = decay * den + 1.0;
            num / den
        })
        .collect()
}

/// Population mean and standard deviation of the trailing `window` values
/// ending at each index. `NaN` where fewer than `window` values exist.
pub fn rolling_mean_std(x: &[f64], window: usize) -> (Vec<f64>, Vec<f64>) {
    let n = x.len();
    let mut means = vec![f64::NAN; n];
    let mut stds = vec![f64::NAN; n];
    if window == 0 {
        return (means, stds);
    }
    for t in window.saturating_sub(1)..n {
        let w = &x[t + 1 - window..=t];
        let m = w.iter().sum::<f64>() / window as f64;
        let var = w.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / window as f64;
        means[t] = m;
        stds[t] = var.sqrt();
    }
    (means, stds)
}

/// Percentage close-to-close returns; `out[0] = 0`.
pub fn pct_returns(prices: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(prices.len());
    if !prices.is_empty() {
        out.push(0.0);
    }
    out.extend(prices.windows(2).map(|w| w[1] / w[0] - 1.0));
    out
}

/// Daily ex-ante volatility per price index: `daily[t]` is the EWM standard
/// deviation (span 60) of percentage returns `r_1..=r_t`. `daily[0] = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct VolEstimate {
    pub daily: Vec<f64>,
    pub span: usize,
}

impl VolEstimate {
    pub fn from_prices(prices: &[f64]) -> VolEstimate {
        Self::with_span(prices, VOL_SPAN).expect("VOL_SPAN >= 2")
    }

    pub fn with_span(prices: &[f64], span: usize) -> Result<VolEstimate> {
        let mut daily = vec![0.0; prices.len()];
        if prices.len() > 1 {
            let r = pct_returns(prices);
            let s = ewm_std(&r[1..], span)?;
            daily[1..].copy_from_slice(&s);
        }
        Ok(VolEstimate { daily, span })
    }
}

/// `(p_t/p_{t-h} - 1) / (σ_t √h)`, defined for `t >= h`.
pub fn vol_normalized_return(prices: &[f64], horizon: usize, vol: &VolEstimate) -> Result<Vec<f64>> {
    if horizon == 0 || prices.len() <= horizon {
        return Err(Error::InsufficientHistory(format!(
            "{} prices for a {horizon}-day return",
            prices.len()
        )));
    }
    if vol.daily.len() != prices.len() {
        return Err(Error::ShapeMismatch("volatility and price lengths differ".into()));
    }
    let root_h = (horizon as f64).sqrt();
    let mut out = vec![f64::NAN; prices.len()];
    for t in horizon..prices.len() {
        let ret = prices[t] / prices[t - horizon] - 1.0;
        out[t] = ratio_or_zero(ret, vol.daily[t] * root_h, 0.0);
    }
    Ok(out)
}

/// Index of the first defined MACD value.
pub const MACD_FIRST_VALID: usize = MACD_PRICE_WINDOW + MACD_SIGNAL_WINDOW - 2;

/// Raw MACD for one (short, long) pair:
/// `q_t = (m_S - m_L) / std(p over 63 days)`, `MACD_t = q_t / std(q over 252 days)`,
/// with `m_X` the EWM price average at `α = 1/X`.
pub fn macd_raw(prices: &[f64], short: usize, long: usize) -> Result<Vec<f64>> {
    if short == 0 || short >= long {
        return Err(Error::Config(format!(
            "MACD scales need 0 < S < L, got ({short}, {long})"
        )));
    }
    if prices.len() <= MACD_FIRST_VALID {
        return Err(Error::InsufficientHistory(format!(
            "{} prices, MACD needs more than {MACD_FIRST_VALID}",
            prices.len()
        )));
    }
    let fast = ewm_mean(prices, 1.0 / short as f64);
    let slow = ewm_mean(prices, 1.0 / long as f64);
    let (price_mean, price_std) = rolling_mean_std(prices, MACD_PRICE_WINDOW);
    let n = prices.len();
    let mut q = vec![f64::NAN; n];
    for t in MACD_PRICE_WINDOW - 1..n {
        q[t] = ratio_or_zero(fast[t] - slow[t], price_std[t], price_mean[t]);
    }
    let (_, q_std) = rolling_mean_std(&q, MACD_SIGNAL_WINDOW);
    let mut out = vec![f64::NAN; n];
    for t in MACD_FIRST_VALID..n {
        out[t] = ratio_or_zero(q[t], q_std[t], 0.0);
    }
    Ok(out)
}

/// Multi-scale MACD: the average (or literal sum) of `macd_raw` over `scales`.
pub fn macd_combined(prices: &[f64], scales: &[(usize, usize)], average: bool) -> Result<Vec<f64>> {
    if scales.is_empty() {
        return Err(Error::Config("no MACD scales".into()));
    }
    let mut acc = vec![0.0; prices.len()];
    for &(s, l) in scales {
        for (a, v) in acc.iter_mut().zip(macd_raw(prices, s, l)?) {
            *a += v;
        }
    }
    if average {
        let k = scales.len() as f64;
        acc.iter_mut().for_each(|a| *a /= k);
    }
    Ok(acc)
}

/// Wilder RSI. The first average gain/loss is the simple mean of the first
/// `window` changes; later values use `(prev·(N-1) + x)/N`. Defined for `t >= window`.
pub fn rsi(prices: &[f64], window: usize) -> Result<Vec<f64>> {
    if window == 0 || prices.len() <= window {
        return Err(Error::InsufficientHistory(format!(
            "{} prices for RSI({window})",
            prices.len()
        )));
    }
    let n = window as f64;
    let mut out = vec![f64::NAN; prices.len()];
    let (mut gain, mut loss) = (0.0, 0.0);
    for t in 1..prices.len() {
        let d = prices[t] - prices[t - 1];
        let (g, l) = (d.max(0.0), (-d).max(0.0));
        if t <= window {
            gain += g / n;
            loss += l / n;
        } else {
            gain = (gain * (n - 1.0) + g) / n;
            loss = (loss * (n - 1.0) + l) / n;
        }
        if t >= window {
            out[t] = if loss == 0.0 {
                if gain == 0.0 {
                    50.0
                } else {
                    100.0
                }
            } else {
                100.0 - 100.0 / (1.0 + gain / loss)
            };
        }
    }
    Ok(out)
}

/// Rolling 252-day z-score of the close. Defined for `t >= 251`.
pub fn normalized_close(prices: &[f64]) -> Result<Vec<f64>> {
    if prices.len() < ZSCORE_WINDOW {
        return Err(Error::InsufficientHistory(format!(
            "{} prices for a {ZSCORE_WINDOW}-day z-score",
            prices.len()
        )));
    }
    let (mean, std) = rolling_mean_std(prices, ZSCORE_WINDOW);
    Ok(prices
        .iter()
        .zip(mean.iter().zip(&std))
        .map(|(&p, (&m, &s))| {
            if m.is_nan() {
                f64::NAN
            } else {
                ratio_or_zero(p - m, s, m)
            }
        })
        .collect())
}

/// Per-day feature vectors for one contract.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub dates: Vec<NaiveDate>,
    /// `columns[k][t]` is feature `FEATURE_NAMES[k]` on day `t`.
    pub columns: [Vec<f64>; FEATURE_COUNT],
    pub first_valid_index: usize,
}

impl FeatureMatrix {
    pub fn compute(series: &PriceSeries) -> Result<FeatureMatrix> {
        let vol = VolEstimate::from_prices(series.closes());
        Self::compute_with_vol(series, &vol)
    }

    pub fn compute_with_vol(series: &PriceSeries, vol: &VolEstimate) -> Result<FeatureMatrix> {
        let p = series.closes();
        let columns = [
            normalized_close(p)?,
            vol_normalized_return(p, RETURN_HORIZONS[0], vol)?,
            vol_normalized_return(p, RETURN_HORIZONS[1], vol)?,
            vol_normalized_return(p, RETURN_HORIZONS[2], vol)?,
            vol_normalized_return(p, RETURN_HORIZONS[3], vol)?,
            macd_combined(p, &MACD_SCALES, true)?,
            rsi(p, RSI_WINDOW)?,
        ];
        let first_valid_index = (0..p.len())
            .find(|&t| columns.iter().all(|c| c[t..].iter().all(|v| v.is_finite())))
            .ok_or_else(|| Error::InsufficientHistory("no fully defined feature row".into()))?;
        Ok(FeatureMatrix {
            dates: series.dates().to_vec(),
            columns,
            first_valid_index,
        })
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn row(&self, t: usize) -> [f64; FEATURE_COUNT] {
        std::array::from_fn(|k| self.columns[k][t])
    }

    /// First index at which a full window exists.
    pub fn first_state_index(&self) -> usize {
        self.first_valid_index + WINDOW_LEN - 1
    }

    /// The state observed at the close of day `t`: rows `t-59..=t`.
    pub fn window(&self, t: usize) -> Result<StateWindow> {
        if t < self.first_state_index() || t >= self.len() {
            return Err(Error::InsufficientHistory(format!(
                "no full state window at index {t} (valid {}..{})",
                self.first_state_index(),
                self.len()
            )));
        }
        let mut values = Vec::with_capacity(WINDOW_LEN * FEATURE_COUNT);
        for r in t + 1 - WINDOW_LEN..=t {
            values.extend_from_slice(&self.row(r));
        }
        Ok(StateWindow {
            as_of: self.dates[t],
            index: t,
            values,
        })
    }

    /// Writes `date,norm_close,ret_1m,ret_2m,ret_3m,ret_1y,macd,rsi` for the defined rows.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["date"];
        header.extend(FEATURE_NAMES);
        w.write_record(&header)?;
        for t in self.first_valid_index..self.len() {
            let mut rec = vec![self.dates[t].format("%Y-%m-%d").to_string()];
            rec.extend(self.row(t).iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Sixty consecutive feature rows ending at `as_of` (row-major, oldest first).
#[derive(Debug, Clone, PartialEq)]
pub struct StateWindow {
    pub as_of: NaiveDate,
    /// Index of `as_of` in the contract's calendar.
    pub index: usize,
    pub values: Vec<f64>,
}

impl StateWindow {
    pub fn rows(&self) -> usize {
        self.values.len() / FEATURE_COUNT
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.values[r * FEATURE_COUNT..(r + 1) * FEATURE_COUNT]
    }

    /// Network input: RSI mapped from [0, 100] to [-1, 1], every other
    /// feature clipped to `±FEATURE_CLIP`.
    pub fn encoded(&self) -> Vec<f64> {
        self.values
            .iter()
            .enumerate()
            .map(|(i, &v)| encode_feature(i % FEATURE_COUNT, v))
            .collect()
    }
}

/// Network-input encoding of one feature value in column `column`.
pub fn encode_feature(column: usize, v: f64) -> f64 {
    if column == RSI_COLUMN {
        (v - 50.0) / 50.0
    } else {
        v.clamp(-FEATURE_CLIP, FEATURE_CLIP)
    }
}

/// One window per index from `first_valid_index + 59` to the end.
pub fn build_states(fm: &FeatureMatrix) -> Result<Vec<StateWindow>> {
    let start = fm.first_state_index();
    if start >= fm.len() {
        return Err(Error::InsufficientHistory(format!(
            "{} rows, first state needs index {start}",
            fm.len()
        )));
    }
    (start..fm.len()).map(|t| fm.window(t)).collect()
}
