//! Subcommand implementations. Every command writes `manifest.json` next to its outputs.

use std::collections::BTreeSet;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use chrono::NaiveDate;
use serde::Serialize;

use futrl::agents::{self, write_curve_csv, Algo, PolicyCheckpoint};
use futrl::baselines::BaselineSpec;
use futrl::env::ContractData;
use futrl::evaluation::{
    compute_daily_metrics, cumulative_returns, per_contract_stats, portfolio_returns, sweep_decided,
    vol_target_overlay, DecidedPositions, MetricsReport, PositionSource, TradeReturnSeries, WalkForwardPolicy,
};
use futrl::market_data::{walk_forward_splits, AssetClass, DateRange, WalkForwardSplit};

use crate::config::{algo_key, DataSource, RunConfig};
use crate::report;
use crate::universe;

/// Name of the all-contracts portfolio scope.
pub const ALL_SCOPE: &str = "All";

pub struct Ctx {
    pub cfg: RunConfig,
    pub out: PathBuf,
    pub command: String,
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    version: &'a str,
    config_sha256: String,
    synthetic_seed: Option<u64>,
    agent_seed: u64,
    config: String,
}

impl Ctx {
    fn path(&self, rel: impl AsRef<Path>) -> PathBuf {
        self.out.join(rel)
    }

    fn create(&self, rel: impl AsRef<Path>) -> Result<BufWriter<File>> {
        let p = self.path(rel);
        if let Some(dir) = p.parent() {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        }
        Ok(BufWriter::new(
            File::create(&p).with_context(|| format!("writing {}", p.display()))?,
        ))
    }

    fn write_manifest(&self) -> Result<()> {
        let m = Manifest {
            command: &self.command,
            version: env!("CARGO_PKG_VERSION"),
            config_sha256: self.cfg.sha256(),
            synthetic_seed: (self.cfg.data.source == DataSource::Synthetic).then_some(self.cfg.synthetic.seed),
            agent_seed: self.cfg.agents.seed,
            config: self.cfg.to_toml(),
        };
        let mut w = self.create("manifest.json")?;
        serde_json::to_writer_pretty(&mut w, &m)?;
        writeln!(w)?;
        w.flush()?;
        Ok(())
    }
}

pub fn synth(ctx: &Ctx) -> Result<()> {
    ctx.write_manifest()?;
    let series = universe::synthetic_series(&ctx.cfg.synthetic)?;
    universe::write_universe(&series, &ctx.path("data"))?;
    eprintln!(
        "wrote {} synthetic contracts to {}",
        series.len(),
        ctx.path("data").display()
    );
    Ok(())
}

pub fn features(ctx: &Ctx) -> Result<()> {
    ctx.write_manifest()?;
    let contracts = universe::load_universe(&ctx.cfg)?;
    fs::create_dir_all(ctx.path("features"))?;
    for c in &contracts {
        c.features
            .write_csv(ctx.path(format!("features/{}.csv", c.series.ticker())))?;
    }
    eprintln!("wrote features for {} contracts", contracts.len());
    Ok(())
}

fn classes(contracts: &[Arc<ContractData>]) -> Vec<AssetClass> {
    let set: BTreeSet<AssetClass> = contracts.iter().map(|c| c.series.asset_class()).collect();
    set.into_iter().collect()
}

fn of_class(contracts: &[Arc<ContractData>], class: AssetClass) -> Vec<Arc<ContractData>> {
    contracts
        .iter()
        .filter(|c| c.series.asset_class() == class)
        .cloned()
        .collect()
}

/// Walk-forward schedule over the union of all contract calendars.
pub fn splits(cfg: &RunConfig, contracts: &[Arc<ContractData>]) -> Result<Vec<WalkForwardSplit>> {
    let dates: BTreeSet<NaiveDate> = contracts
        .iter()
        .flat_map(|c| c.series.dates().iter().copied())
        .collect();
    let dates: Vec<NaiveDate> = dates.into_iter().collect();
    Ok(walk_forward_splits(
        &dates,
        cfg.split.retrain_interval_years,
        cfg.split.first_test_year,
    )?)
}

fn stage_name(algo: Algo, class: AssetClass, split: &WalkForwardSplit) -> String {
    format!(
        "{}_{}_{}",
        algo_key(algo),
        class.as_str(),
        split.test.start.format("%Y")
    )
}

fn run_seed(base: u64, algo: Algo, class_idx: usize, split_idx: usize) -> u64 {
    let algo_idx = Algo::ALL.iter().position(|a| *a == algo).expect("known algo") as u64;
    base.wrapping_mul(1_000_003)
        .wrapping_add(algo_idx * 10_000 + class_idx as u64 * 100 + split_idx as u64)
}

pub fn train(ctx: &Ctx) -> Result<()> {
    ctx.write_manifest()?;
    let cfg = &ctx.cfg;
    let contracts = universe::load_universe(cfg)?;
    let splits = splits(cfg, &contracts)?;
    for &algo in &cfg.agents.algos {
        let agent = cfg.agents.get(algo);
        for class in classes(&contracts) {
            let members = of_class(&contracts, class);
            let class_idx = AssetClass::ALL.iter().position(|c| *c == class).expect("known class");
            for (si, split) in splits.iter().enumerate() {
                let name = stage_name(algo, class, split);
                let seed = run_seed(cfg.agents.seed, algo, class_idx, si);
                let started = Instant::now();
                let outcome = agents::train(&members, split, agent, &cfg.reward, seed)
                    .with_context(|| format!("training {name}"))?;
                outcome
                    .checkpoint
                    .save(ensure_parent(&ctx.path(format!("checkpoints/{name}.json")))?)?;
                write_curve_csv(&outcome.curve, ctx.create(format!("curves/{name}.csv"))?)?;
                eprintln!(
                    "trained {name}: {} steps, {} updates in {:.1}s",
                    outcome.checkpoint.meta.stats.env_steps,
                    outcome.checkpoint.meta.stats.updates,
                    started.elapsed().as_secs_f64()
                );
            }
        }
    }
    Ok(())
}

fn ensure_parent(p: &Path) -> Result<&Path> {
    if let Some(dir) = p.parent() {
        fs::create_dir_all(dir)?;
    }
    Ok(p)
}

/// One strategy's positions over every contract, in universe order.
pub struct StrategyDecisions {
    pub name: String,
    pub decided: Vec<DecidedPositions>,
}

/// Trading window shared by all strategies: the first test day through the data end.
fn evaluation_range(splits: &[WalkForwardSplit]) -> DateRange {
    DateRange {
        start: splits[0].test.start,
        end: splits[splits.len() - 1].test.end,
    }
}

fn load_policy(ctx: &Ctx, algo: Algo, class: AssetClass, splits: &[WalkForwardSplit]) -> Result<WalkForwardPolicy> {
    let mut stages = Vec::with_capacity(splits.len());
    for split in splits {
        let name = stage_name(algo, class, split);
        let path = ctx.path(format!("checkpoints/{name}.json"));
        if !path.exists() {
            bail!("missing checkpoint {}; run `futrl train` first", path.display());
        }
        let ckpt = PolicyCheckpoint::load(&path).with_context(|| format!("loading {}", path.display()))?;
        if ckpt.meta.train != split.train || ckpt.algo() != algo {
            bail!(
                "checkpoint {} was trained for a different schedule; retrain",
                path.display()
            );
        }
        stages.push((split.test, ckpt));
    }
    Ok(WalkForwardPolicy { stages })
}

/// Query every configured strategy once per contract over the evaluation window.
pub fn decide_all(ctx: &Ctx, contracts: &[Arc<ContractData>]) -> Result<Vec<StrategyDecisions>> {
    let cfg = &ctx.cfg;
    let splits = splits(cfg, contracts)?;
    let range = evaluation_range(&splits);
    let mut out = Vec::new();
    for kind in &cfg.baselines.kinds {
        let spec = BaselineSpec {
            macd_average: cfg.baselines.macd_average,
            ..BaselineSpec::new(*kind)
        };
        let decided = contracts
            .iter()
            .map(|c| DecidedPositions::decide(&spec, c, &range))
            .collect::<futrl::Result<Vec<_>>>()
            .with_context(|| format!("backtesting {kind}"))?;
        out.push(StrategyDecisions {
            name: kind.as_str().to_string(),
            decided,
        });
    }
    for &algo in &cfg.agents.algos {
        let mut policies = Vec::new();
        for class in classes(contracts) {
            policies.push((class, load_policy(ctx, algo, class, &splits)?));
        }
        let started = Instant::now();
        let decided = contracts
            .iter()
            .map(|c| {
                let policy = &policies
                    .iter()
                    .find(|(k, _)| *k == c.series.asset_class())
                    .expect("every class has a policy")
                    .1;
                DecidedPositions::decide(policy as &dyn PositionSource, c, &range)
            })
            .collect::<futrl::Result<Vec<_>>>()
            .with_context(|| format!("backtesting {}", algo.as_str()))?;
        eprintln!("evaluated {} in {:.1}s", algo.as_str(), started.elapsed().as_secs_f64());
        out.push(StrategyDecisions {
            name: algo.as_str().to_string(),
            decided,
        });
    }
    Ok(out)
}

/// Portfolio scopes in report order: each asset class present, then all contracts.
pub fn scopes(contracts: &[Arc<ContractData>]) -> Vec<(String, Option<AssetClass>)> {
    let mut s: Vec<(String, Option<AssetClass>)> = classes(contracts)
        .into_iter()
        .map(|c| (c.as_str().to_string(), Some(c)))
        .collect();
    s.push((ALL_SCOPE.to_string(), None));
    s
}

pub struct MetricsRow {
    pub scope: String,
    pub strategy: String,
    pub metrics: MetricsReport,
}

pub fn backtest_outputs(ctx: &Ctx, contracts: &[Arc<ContractData>], decisions: &[StrategyDecisions]) -> Result<()> {
    let cfg = &ctx.cfg;
    let mut overlay_rows = Vec::new();
    let mut raw_rows = Vec::new();
    let mut per_contract = Vec::new();
    let mut equity: Vec<(String, Vec<NaiveDate>, Vec<f64>)> = Vec::new();
    for strat in decisions {
        let series = strat
            .decided
            .iter()
            .map(|d| d.account(&strat.name, &cfg.reward, cfg.reward.bp))
            .collect::<futrl::Result<Vec<TradeReturnSeries>>>()?;
        if cfg.evaluation.dump_traces {
            for s in &series {
                let safe = strat.name.replace(['(', ')'], "");
                s.write_trace_csv(ctx.create(format!("traces/{safe}/{}.csv", s.ticker))?)?;
                s.write_positions_csv(ctx.create(format!("positions/{safe}/{}.csv", s.ticker))?)?;
            }
        }
        per_contract.extend(series.iter().map(per_contract_stats));
        for (scope, class) in scopes(contracts) {
            let members: Vec<&TradeReturnSeries> = series
                .iter()
                .filter(|s| class.is_none_or(|c| s.asset_class == c))
                .collect();
            let port = portfolio_returns(&members, cfg.evaluation.calendar)?;
            let overlaid = vol_target_overlay(&port, cfg.reward.sigma_tgt, cfg.reward.vol_floor)
                .with_context(|| format!("{} {scope}", strat.name))?;
            raw_rows.push(MetricsRow {
                scope: scope.clone(),
                strategy: strat.name.clone(),
                metrics: compute_daily_metrics(&port.returns).with_context(|| format!("{} {scope}", strat.name))?,
            });
            overlay_rows.push(MetricsRow {
                scope: scope.clone(),
                strategy: strat.name.clone(),
                metrics: compute_daily_metrics(&overlaid.returns).with_context(|| format!("{} {scope}", strat.name))?,
            });
            if class.is_none() {
                equity.push((
                    strat.name.clone(),
                    overlaid.dates,
                    cumulative_returns(&overlaid.returns),
                ));
            }
        }
    }
    report::write_metrics_csv(&overlay_rows, ctx.create("metrics.csv")?)?;
    report::write_metrics_csv(&raw_rows, ctx.create("metrics_raw.csv")?)?;
    report::write_per_contract_csv(&per_contract, ctx.create("per_contract.csv")?)?;
    let mut w = csv::Writer::from_writer(ctx.create("equity_curve.csv")?);
    w.write_record(["date", "strategy", "cum_return"])?;
    for (name, dates, cum) in &equity {
        for (d, c) in dates.iter().zip(cum) {
            w.write_record([d.to_string(), name.clone(), c.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn sweep_outputs(ctx: &Ctx, decisions: &[StrategyDecisions]) -> Result<()> {
    let cfg = &ctx.cfg;
    let mut w = csv::Writer::from_writer(ctx.create("cost_sweep.csv")?);
    w.write_record(["strategy", "bp", "sharpe", "avg_cost_per_contract"])?;
    for strat in decisions {
        let rows = sweep_decided(
            &strat.decided,
            &cfg.reward,
            &cfg.evaluation.sweep_bp,
            cfg.evaluation.calendar,
        )?;
        for r in rows {
            w.write_record([
                strat.name.clone(),
                r.bp.to_string(),
                report::fmt_opt(r.sharpe),
                report::fmt_opt(r.avg_cost_per_contract),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn backtest(ctx: &Ctx) -> Result<()> {
    ctx.write_manifest()?;
    let contracts = universe::load_universe(&ctx.cfg)?;
    let decisions = decide_all(ctx, &contracts)?;
    backtest_outputs(ctx, &contracts, &decisions)
}

pub fn sweep(ctx: &Ctx) -> Result<()> {
    ctx.write_manifest()?;
    let contracts = universe::load_universe(&ctx.cfg)?;
    let decisions = decide_all(ctx, &contracts)?;
    sweep_outputs(ctx, &decisions)
}

pub fn render(ctx: &Ctx) -> Result<()> {
    ctx.write_manifest()?;
    report::render(&ctx.out, &ctx.cfg)
}

/// The whole experiment: data, training, backtests, cost sweep and report.
pub fn run_all(ctx: &Ctx) -> Result<()> {
    if ctx.cfg.data.source == DataSource::Synthetic {
        synth(ctx)?;
    }
    if !ctx.cfg.agents.algos.is_empty() {
        train(ctx)?;
    }
    ctx.write_manifest()?;
    let contracts = universe::load_universe(&ctx.cfg)?;
    let decisions = decide_all(ctx, &contracts)?;
    backtest_outputs(ctx, &contracts, &decisions)?;
    sweep_outputs(ctx, &decisions)?;
    report::render(&ctx.out, &ctx.cfg)
}
