//! Backtests, equal-weight portfolios, volatility targeting and summary statistics.

mod metrics;

use std::collections::BTreeMap;
use std::io::Write;
use std::sync::Arc;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

pub use metrics::{
    compute_daily_metrics, compute_metrics, equity_curve, max_drawdown, MetricsReport, HIGHER_IS_BETTER, METRIC_NAMES,
};

use crate::agents::PolicyCheckpoint;
use crate::baselines::BaselineSpec;
use crate::env::{ContractData, RewardConfig};
use crate::error::{Error, Result};
use crate::indicators::{ewm_std, VOL_SPAN};
use crate::market_data::{AssetClass, DateRange, TRADING_DAYS};

/// Anything that maps a contract's history to target positions.
pub trait PositionSource {
    /// Positions decided at closes `first..first + count`. Implementations may
    /// read `data` only up to index `first + count - 1`.
    fn positions(&self, data: &Arc<ContractData>, first: usize, count: usize) -> Result<Vec<f64>>;
}

impl PositionSource for BaselineSpec {
    fn positions(&self, data: &Arc<ContractData>, first: usize, count: usize) -> Result<Vec<f64>> {
        BaselineSpec::positions(self, data.series.closes(), first, count)
    }
}

impl PositionSource for PolicyCheckpoint {
    fn positions(&self, data: &Arc<ContractData>, first: usize, count: usize) -> Result<Vec<f64>> {
        self.greedy_positions(data, first, count)
    }
}

/// A sequence of checkpoints, each trading the dates of its own test window.
/// The decision at close `t` belongs to the checkpoint whose window holds day `t + 1`.
#[derive(Debug, Clone)]
pub struct WalkForwardPolicy {
    pub stages: Vec<(DateRange, PolicyCheckpoint)>,
}

impl PositionSource for WalkForwardPolicy {
    fn positions(&self, data: &Arc<ContractData>, first: usize, count: usize) -> Result<Vec<f64>> {
        let dates = data.series.dates();
        let mut out = Vec::with_capacity(count);
        let end = first + count;
        let mut t = first;
        while t < end {
            let day = *dates.get(t + 1).ok_or(Error::OutOfRange {
                index: t + 1,
                len: dates.len(),
            })?;
            let (range, ckpt) = self
                .stages
                .iter()
                .find(|(r, _)| r.contains(day))
                .ok_or_else(|| Error::InsufficientHistory(format!("no checkpoint trades {day}")))?;
            let mut stop = t + 1;
            while stop < end && stop + 1 < dates.len() && range.contains(dates[stop + 1]) {
                stop += 1;
            }
            out.extend(ckpt.greedy_positions(data, t, stop - t)?);
            t = stop;
        }
        Ok(out)
    }
}

/// Daily trade returns of one strategy on one contract.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeReturnSeries {
    pub strategy: String,
    pub ticker: String,
    pub asset_class: AssetClass,
    /// Date each return is realised (the day after its decision).
    pub dates: Vec<NaiveDate>,
    pub returns: Vec<f64>,
    /// Raw target positions in `[-1, 1]`.
    pub positions: Vec<f64>,
    /// Volatility-scaled positions actually held.
    pub scaled_positions: Vec<f64>,
    pub costs: Vec<f64>,
    /// `|Δ scaled position|` per day, including the trade out of flat.
    pub turnover: Vec<f64>,
    /// Close at each decision, for monetary cost accounting.
    pub decision_prices: Vec<f64>,
}

impl TradeReturnSeries {
    pub fn len(&self) -> usize {
        self.returns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.returns.is_empty()
    }

    /// Per-step trace: `date,action,scaled_position,reward,cost`.
    pub fn write_trace_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["date", "action", "scaled_position", "reward", "cost"])?;
        for i in 0..self.len() {
            w.write_record([
                self.dates[i].to_string(),
                self.positions[i].to_string(),
                self.scaled_positions[i].to_string(),
                self.returns[i].to_string(),
                self.costs[i].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Raw positions as `date,position`, dated by the day they are held.
    pub fn write_positions_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["date", "position"])?;
        for (d, p) in self.dates.iter().zip(&self.positions) {
            w.write_record([d.to_string(), p.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Decision indices whose realisation date falls in `range`, as `(first, count)`.
pub fn decision_span(data: &ContractData, range: &DateRange) -> Result<(usize, usize)> {
    let dates = data.series.dates();
    // decision t realises on dates[t + 1]
    let first = dates.partition_point(|d| *d < range.start).max(1) - 1;
    let stop = dates.partition_point(|d| *d <= range.end).saturating_sub(1);
    if stop <= first {
        return Err(Error::InsufficientHistory(format!(
            "{}: no trading days in {}..={}",
            data.series.ticker(),
            range.start,
            range.end
        )));
    }
    if first < data.first_state_index() {
        return Err(Error::InsufficientHistory(format!(
            "{}: evaluation starts at index {first}, features need {}",
            data.series.ticker(),
            data.first_state_index()
        )));
    }
    Ok((first, stop - first))
}

/// Positions a strategy chose over a contract's evaluation window, before any cost accounting.
#[derive(Debug, Clone)]
pub struct DecidedPositions {
    pub data: Arc<ContractData>,
    /// Index of the first decision.
    pub first: usize,
    pub positions: Vec<f64>,
}

impl DecidedPositions {
    /// Query `source` once for every decision whose return falls in `range`.
    pub fn decide(
        source: &dyn PositionSource,
        data: &Arc<ContractData>,
        range: &DateRange,
    ) -> Result<DecidedPositions> {
        let (first, count) = decision_span(data, range)?;
        Ok(DecidedPositions {
            data: data.clone(),
            first,
            positions: source.positions(data, first, count)?,
        })
    }

    /// Net trade returns at cost rate `eval_bp`, starting flat.
    pub fn account(&self, strategy: &str, reward: &RewardConfig, eval_bp: f64) -> Result<TradeReturnSeries> {
        let cfg = reward.with_bp(eval_bp);
        cfg.validate()?;
        let data = &self.data;
        let first = self.first;
        let count = self.positions.len();
        let rows = data.account(&cfg, first, &self.positions)?;
        let mut prev = 0.0;
        let turnover = rows
            .iter()
            .map(|b| {
                let d = (b.position - prev).abs();
                prev = b.position;
                d
            })
            .collect();
        Ok(TradeReturnSeries {
            strategy: strategy.to_string(),
            ticker: data.series.ticker().to_string(),
            asset_class: data.series.asset_class(),
            dates: data.series.dates()[first + 1..first + 1 + count].to_vec(),
            returns: rows.iter().map(|b| b.reward).collect(),
            positions: self.positions.clone(),
            scaled_positions: rows.iter().map(|b| b.position).collect(),
            costs: rows.iter().map(|b| b.cost).collect(),
            turnover,
            decision_prices: data.series.closes()[first..first + count].to_vec(),
        })
    }
}

/// Trade a contract over `range` at cost rate `eval_bp`, starting flat. The
/// source is queried in its deterministic (greedy) mode and never updated.
pub fn backtest_contract(
    strategy: &str,
    source: &dyn PositionSource,
    data: &Arc<ContractData>,
    reward: &RewardConfig,
    eval_bp: f64,
    range: &DateRange,
) -> Result<TradeReturnSeries> {
    DecidedPositions::decide(source, data, range)?.account(strategy, reward, eval_bp)
}

/// How member calendars are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Calendar {
    /// Only dates every member trades.
    #[default]
    Intersection,
    /// Every date any member trades; absent members contribute a zero return.
    UnionZeroFill,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortfolioSeries {
    pub dates: Vec<NaiveDate>,
    pub returns: Vec<f64>,
    /// Member tickers, sorted.
    pub members: Vec<String>,
    pub vol_overlay_applied: bool,
}

/// Equal-weight daily mean of member returns. The result does not depend on member order.
pub fn portfolio_returns(members: &[&TradeReturnSeries], calendar: Calendar) -> Result<PortfolioSeries> {
    if members.is_empty() {
        return Err(Error::EmptyPortfolio);
    }
    let mut by_date: BTreeMap<NaiveDate, Vec<f64>> = BTreeMap::new();
    for m in members {
        for (d, r) in m.dates.iter().zip(&m.returns) {
            by_date.entry(*d).or_default().push(*r);
        }
    }
    let n = members.len();
    let mut dates = Vec::with_capacity(by_date.len());
    let mut returns = Vec::with_capacity(by_date.len());
    for (d, mut rs) in by_date {
        if calendar == Calendar::Intersection && rs.len() < n {
            continue;
        }
        // Sorting fixes the summation order, so the mean is bit-identical under
        // member permutation. Absent members (zero-fill) count as zeros.
        rs.resize(n, 0.0);
        rs.sort_by(f64::total_cmp);
        dates.push(d);
        returns.push(anchored_mean(&rs));
    }
    let mut tickers: Vec<String> = members.iter().map(|m| m.ticker.clone()).collect();
    tickers.sort();
    Ok(PortfolioSeries {
        dates,
        returns,
        members: tickers,
        vol_overlay_applied: false,
    })
}

/// Mean as `x_0 + mean(x_i - x_0)`: exact when all values are equal.
fn anchored_mean(sorted: &[f64]) -> f64 {
    let x0 = sorted[0];
    x0 + sorted.iter().map(|x| x - x0).sum::<f64>() / sorted.len() as f64
}

/// Rescale a portfolio to an annualised volatility target using the ex-ante
/// EWM volatility of its own returns. The first [`VOL_SPAN`] days only warm up
/// the estimate and are dropped.
pub fn vol_target_overlay(port: &PortfolioSeries, sigma_tgt: f64, vol_floor: f64) -> Result<PortfolioSeries> {
    let n = port.returns.len();
    if n <= VOL_SPAN {
        return Err(Error::InsufficientHistory(format!(
            "vol overlay needs more than {VOL_SPAN} portfolio days, got {n}"
        )));
    }
    let sigma = ewm_std(&port.returns, VOL_SPAN)?;
    let target = sigma_tgt / TRADING_DAYS.sqrt();
    let returns = (VOL_SPAN..n)
        .map(|t| port.returns[t] * target / sigma[t - 1].max(vol_floor))
        .collect();
    Ok(PortfolioSeries {
        dates: port.dates[VOL_SPAN..].to_vec(),
        returns,
        members: port.members.clone(),
        vol_overlay_applied: true,
    })
}

/// Cumulative compounded return per date.
pub fn cumulative_returns(returns: &[f64]) -> Vec<f64> {
    equity_curve(returns)[1..].iter().map(|e| e - 1.0).collect()
}

/// One point of a transaction-cost sensitivity curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostSweepRow {
    /// Cost rate in basis points.
    pub bp: f64,
    /// Sharpe of the equal-weight portfolio of all contracts, before the volatility overlay.
    pub sharpe: Option<f64>,
    /// Average monetary cost per contract traded: `Σ bp·p·|Δpos| / Σ|Δpos|`.
    pub avg_cost_per_contract: Option<f64>,
}

/// Evaluate one strategy at several cost rates (given in basis points).
/// A frozen strategy's positions do not depend on the cost rate, so they are
/// decided once and only the accounting is repeated.
pub fn cost_sweep(
    source: &dyn PositionSource,
    contracts: &[Arc<ContractData>],
    reward: &RewardConfig,
    rates_bp: &[f64],
    range: &DateRange,
    calendar: Calendar,
) -> Result<Vec<CostSweepRow>> {
    let decided = contracts
        .iter()
        .map(|c| DecidedPositions::decide(source, c, range))
        .collect::<Result<Vec<_>>>()?;
    sweep_decided(&decided, reward, rates_bp, calendar)
}

/// [`cost_sweep`] over positions that were already decided.
pub fn sweep_decided(
    decided: &[DecidedPositions],
    reward: &RewardConfig,
    rates_bp: &[f64],
    calendar: Calendar,
) -> Result<Vec<CostSweepRow>> {
    let mut rows = Vec::with_capacity(rates_bp.len());
    for &bp in rates_bp {
        if !(bp >= 0.0 && bp.is_finite()) {
            return Err(Error::Config(format!("cost rate must be >= 0, got {bp}")));
        }
        let rate = bp * 1e-4;
        let series = decided
            .iter()
            .map(|d| d.account("sweep", reward, rate))
            .collect::<Result<Vec<_>>>()?;
        let refs: Vec<&TradeReturnSeries> = series.iter().collect();
        let port = portfolio_returns(&refs, calendar)?;
        let sharpe = compute_daily_metrics(&port.returns).ok().and_then(|m| m.sharpe);
        rows.push(CostSweepRow {
            bp,
            sharpe,
            avg_cost_per_contract: average_cost_per_contract(&series, rate),
        });
    }
    Ok(rows)
}

fn average_cost_per_contract(series: &[TradeReturnSeries], rate: f64) -> Option<f64> {
    let (mut cost, mut traded) = (0.0, 0.0);
    for s in series {
        for (p, d) in s.decision_prices.iter().zip(&s.turnover) {
            cost += rate * p * d;
            traded += d;
        }
    }
    (traded > 0.0).then(|| cost / traded)
}

/// Per-contract performance of one strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractStats {
    pub strategy: String,
    pub ticker: String,
    pub asset_class: AssetClass,
    pub sharpe: Option<f64>,
    /// Total `|Δ scaled position|`, including the opening trade.
    pub turnover: f64,
    /// Total return divided by turnover; `None` for a strategy that never trades.
    pub return_per_turnover: Option<f64>,
}

pub fn per_contract_stats(series: &TradeReturnSeries) -> ContractStats {
    let turnover: f64 = series.turnover.iter().sum();
    let total: f64 = series.returns.iter().sum();
    ContractStats {
        strategy: series.strategy.clone(),
        ticker: series.ticker.clone(),
        asset_class: series.asset_class,
        sharpe: compute_daily_metrics(&series.returns).ok().and_then(|m| m.sharpe),
        turnover,
        return_per_turnover: (turnover > 0.0).then(|| total / turnover),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::BaselineKind;
    use crate::market_data::PriceSeries;

    fn contract(ticker: &str, n: usize, f: impl Fn(usize) -> f64) -> Arc<ContractData> {
        let dates = crate::market_data::business_days(NaiveDate::from_ymd_opt(2000, 1, 3).unwrap(), n);
        let closes = (0..n).map(f).collect();
        Arc::new(ContractData::new(PriceSeries::new(ticker, AssetClass::EquityIndex, dates, closes).unwrap()).unwrap())
    }

    fn series(ticker: &str, dates: &[NaiveDate], returns: &[f64]) -> TradeReturnSeries {
        let n = returns.len();
        TradeReturnSeries {
            strategy: "x".into(),
            ticker: ticker.into(),
            asset_class: AssetClass::EquityIndex,
            dates: dates.to_vec(),
            returns: returns.to_vec(),
            positions: vec![0.0; n],
            scaled_positions: vec![0.0; n],
            costs: vec![0.0; n],
            turnover: vec![0.0; n],
            decision_prices: vec![1.0; n],
        }
    }

    #[test]
    fn portfolio_calendars() {
        let d = crate::market_data::business_days(NaiveDate::from_ymd_opt(2010, 1, 4).unwrap(), 4);
        let a = series("A", &d[..3], &[0.1, 0.2, 0.3]);
        let b = series("B", &d[1..], &[0.4, 0.6, 0.8]);
        let p = portfolio_returns(&[&a, &b], Calendar::Intersection).unwrap();
        assert_eq!(p.dates, d[1..3].to_vec());
        let close = |a: &[f64], b: &[f64]| a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-15);
        assert!(close(&p.returns, &[0.3, 0.45]));
        let u = portfolio_returns(&[&b, &a], Calendar::UnionZeroFill).unwrap();
        assert!(close(&u.returns, &[0.05, 0.3, 0.45, 0.4]));
        assert_eq!(u.members, vec!["A", "B"]);
        assert!(matches!(
            portfolio_returns(&[], Calendar::Intersection),
            Err(Error::EmptyPortfolio)
        ));
    }

    #[test]
    fn overlay_is_ex_ante() {
        let d = crate::market_data::business_days(NaiveDate::from_ymd_opt(2010, 1, 4).unwrap(), 100);
        let r: Vec<f64> = (0..100).map(|i| 0.01 * ((i * 7 % 11) as f64 - 5.0)).collect();
        let p = portfolio_returns(&[&series("A", &d, &r)], Calendar::Intersection).unwrap();
        let o = vol_target_overlay(&p, 0.15, 1e-4).unwrap();
        assert_eq!(o.returns.len(), 40);
        assert_eq!(o.dates[0], d[60]);
        let sigma = ewm_std(&r, 60).unwrap();
        let expect = r[60] * 0.15 / 252f64.sqrt() / sigma[59];
        assert!((o.returns[0] - expect).abs() < 1e-15);
        // changing day 60 changes nothing dated before it
        let mut r2 = r.clone();
        r2[62] = 5.0;
        let o2 = vol_target_overlay(
            &portfolio_returns(&[&series("A", &d, &r2)], Calendar::Intersection).unwrap(),
            0.15,
            1e-4,
        )
        .unwrap();
        assert_eq!(o.returns[..2], o2.returns[..2]);
        assert!(vol_target_overlay(
            &PortfolioSeries {
                dates: d[..60].to_vec(),
                returns: r[..60].to_vec(),
                members: vec![],
                vol_overlay_applied: false
            },
            0.15,
            1e-4
        )
        .is_err());
    }

    #[test]
    fn backtest_dates_and_flat_start() {
        let c = contract("UP", 600, |i| 100.0 * 1.0005f64.powi(i as i32));
        let dates = c.series.dates();
        let range = DateRange {
            start: dates[400],
            end: dates[450],
        };
        let s = backtest_contract(
            "Long",
            &BaselineSpec::new(BaselineKind::Long),
            &c,
            &RewardConfig::default(),
            0.002,
            &range,
        )
        .unwrap();
        assert_eq!(s.dates.first(), Some(&dates[400]));
        assert_eq!(s.dates.last(), Some(&dates[450]));
        assert_eq!(s.len(), 51);
        assert!(s.costs[0] > 0.0);
        assert_eq!(s.turnover[0], s.scaled_positions[0].abs());
        let early = DateRange {
            start: dates[10],
            end: dates[450],
        };
        assert!(matches!(
            backtest_contract(
                "Long",
                &BaselineSpec::new(BaselineKind::Long),
                &c,
                &RewardConfig::default(),
                0.0,
                &early
            ),
            Err(Error::InsufficientHistory(_))
        ));
    }

    #[test]
    fn per_contract_hand_accounting() {
        let d = crate::market_data::business_days(NaiveDate::from_ymd_opt(2010, 1, 4).unwrap(), 10);
        let mut s = series("A", &d, &[0.01, -0.02, 0.03, 0.0, 0.01, 0.02, -0.01, 0.0, 0.01, 0.02]);
        s.turnover = vec![0.5, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.5, 0.0, 0.0];
        let st = per_contract_stats(&s);
        assert!((st.turnover - 2.0).abs() < 1e-15);
        assert!((st.return_per_turnover.unwrap() - 0.07 / 2.0).abs() < 1e-15);
        s.turnover = vec![0.0; 10];
        assert_eq!(per_contract_stats(&s).return_per_turnover, None);
    }

    #[test]
    fn sweep_costs_are_monotone() {
        let c = contract("W", 900, |i| 100.0 + 10.0 * (i as f64 / 30.0).sin());
        let dates = c.series.dates().to_vec();
        let range = DateRange {
            start: dates[500],
            end: dates[880],
        };
        let rows = cost_sweep(
            &BaselineSpec::new(BaselineKind::MacdSignal),
            &[c],
            &RewardConfig::default(),
            &[0.0, 1.0, 5.0, 25.0],
            &range,
            Calendar::Intersection,
        )
        .unwrap();
        for w in rows.windows(2) {
            assert!(w[1].sharpe.unwrap() <= w[0].sharpe.unwrap());
            assert!(w[1].avg_cost_per_contract.unwrap() >= w[0].avg_cost_per_contract.unwrap());
        }
        assert_eq!(rows[0].avg_cost_per_contract, Some(0.0));
    }
}
