//! Deep RL agents over the LSTM network: DQN (double, dueling, fixed
//! targets, replay), REINFORCE policy gradients and synchronous A2C.

mod a2c;
mod dqn;
mod pg;
mod replay;

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use a2c::{a2c_actor_loss, a2c_update, advantages, critic_loss, gaussian_log_prob, A2cBatch, A2cLearner};
pub use dqn::{double_dqn_targets, dqn_loss, dqn_select, dqn_train_step, target_sync, DqnBatch};
pub use pg::{pg_loss, pg_update, PgEpisode};
pub use replay::ReplayBuffer;

use crate::env::{ActionSpace, ContractData, RewardConfig, DISCRETE_ACTIONS};
use crate::error::{Error, Result};
use crate::indicators::{FEATURE_COUNT, WINDOW_LEN};
use crate::market_data::{AssetClass, DateRange, WalkForwardSplit};
use crate::nn::{HeadSpec, NetSpec, Network, ParamStore, SeqBatch};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algo {
    Dqn,
    Pg,
    A2c,
}

impl Algo {
    pub const ALL: [Algo; 3] = [Algo::Dqn, Algo::Pg, Algo::A2c];

    pub fn as_str(self) -> &'static str {
        match self {
            Algo::Dqn => "DQN",
            Algo::Pg => "PG",
            Algo::A2c => "A2C",
        }
    }

    pub fn action_space(self) -> ActionSpace {
        match self {
            Algo::A2c => ActionSpace::Continuous,
            Algo::Dqn | Algo::Pg => ActionSpace::Discrete3,
        }
    }
}

impl fmt::Display for Algo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algo {
    type Err = Error;

    fn from_str(s: &str) -> Result<Algo> {
        match s.to_ascii_lowercase().as_str() {
            "dqn" => Ok(Algo::Dqn),
            "pg" => Ok(Algo::Pg),
            "a2c" => Ok(Algo::A2c),
            _ => Err(Error::Config(format!("unknown algorithm `{s}`"))),
        }
    }
}

/// Linear exploration decay from `start` to `end` over the first
/// `decay_fraction` of the step budget, constant afterwards.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub decay_fraction: f64,
}

impl Default for EpsilonSchedule {
    fn default() -> Self {
        EpsilonSchedule {
            start: 1.0,
            end: 0.1,
            decay_fraction: 0.3,
        }
    }
}

impl EpsilonSchedule {
    pub fn value(&self, step: u64, budget: u64) -> f64 {
        let decay_steps = self.decay_fraction * budget as f64;
        if decay_steps <= 0.0 || step as f64 >= decay_steps {
            return self.end;
        }
        self.start + (self.end - self.start) * step as f64 / decay_steps
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    pub algo: Algo,
    pub gamma: f64,
    pub lr_actor: f64,
    pub lr_critic: f64,
    pub batch_size: usize,
    /// Cost rate used in the training reward.
    pub bp_train: f64,
    pub memory_size: usize,
    /// Env steps between hard target-network copies.
    pub target_sync_tau: u64,
    pub epsilon: EpsilonSchedule,
    pub n_envs: usize,
    pub entropy_coef: f64,
    /// Maximum global gradient norm.
    pub grad_clip: f64,
    /// Env steps per training run.
    pub step_budget: u64,
    pub episode_len: usize,
    /// Env steps between DQN gradient steps.
    pub train_every: u64,
    /// Replay warm-up as a multiple of `batch_size`.
    pub warmup_batches: usize,
    pub hidden: [usize; 2],
}

impl AgentConfig {
    pub fn for_algo(algo: Algo) -> AgentConfig {
        let base = AgentConfig {
            algo,
            gamma: 0.3,
            lr_actor: 1e-4,
            lr_critic: 1e-4,
            batch_size: 64,
            bp_train: 0.0020,
            memory_size: 5000,
            target_sync_tau: 1000,
            epsilon: EpsilonSchedule::default(),
            n_envs: 4,
            entropy_coef: 0.0,
            grad_clip: 1.0,
            step_budget: 100_000,
            episode_len: 252,
            train_every: 4,
            warmup_batches: 4,
            hidden: [64, 32],
        };
        match algo {
            Algo::Dqn | Algo::Pg => base,
            Algo::A2c => AgentConfig {
                lr_critic: 1e-3,
                batch_size: 128,
                ..base
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if !(0.0..=1.0).contains(&self.gamma) {
            return fail(format!("gamma {} outside [0, 1]", self.gamma));
        }
        if !(self.lr_actor > 0.0 && self.lr_critic > 0.0) {
            return fail("learning rates must be positive".into());
        }
        if self.batch_size == 0 || self.memory_size == 0 || self.episode_len == 0 {
            return fail("batch_size, memory_size and episode_len must be positive".into());
        }
        if self.target_sync_tau == 0 || self.train_every == 0 {
            return fail("target_sync_tau and train_every must be >= 1".into());
        }
        if !(self.bp_train >= 0.0 && self.entropy_coef >= 0.0 && self.grad_clip >= 0.0) {
            return fail("bp_train, entropy_coef and grad_clip must be non-negative".into());
        }
        let e = &self.epsilon;
        if !((0.0..=1.0).contains(&e.start)
            && (0.0..=1.0).contains(&e.end)
            && e.end <= e.start
            && e.decay_fraction >= 0.0)
        {
            return fail(format!("bad epsilon schedule {e:?}"));
        }
        if self.hidden.contains(&0) {
            return fail("hidden sizes must be positive".into());
        }
        if self.algo == Algo::A2c && (self.n_envs == 0 || self.batch_size < self.n_envs) {
            return fail(format!("A2C needs 1 <= n_envs <= batch_size, got {}", self.n_envs));
        }
        if self.algo == Algo::Dqn && self.warmup_batches * self.batch_size > self.memory_size {
            return fail("replay warm-up exceeds memory size".into());
        }
        Ok(())
    }

    /// Network layout of the policy (DQN: online Q network).
    pub fn policy_net(&self) -> NetSpec {
        let head = match self.algo {
            Algo::Dqn => HeadSpec::Q {
                actions: 3,
                dueling: true,
            },
            Algo::Pg => HeadSpec::Softmax { actions: 3 },
            Algo::A2c => HeadSpec::Gaussian,
        };
        NetSpec::new(FEATURE_COUNT, head).with_hidden(self.hidden)
    }

    /// Layout of the auxiliary network: DQN target or A2C critic.
    pub fn aux_net(&self) -> Option<NetSpec> {
        match self.algo {
            Algo::Dqn => Some(self.policy_net()),
            Algo::Pg => None,
            Algo::A2c => Some(NetSpec::new(FEATURE_COUNT, HeadSpec::Value).with_hidden(self.hidden)),
        }
    }
}

/// Discounted returns `G_t = R_{t+1} + γ G_{t+1}`, where `rewards[t]` is `R_{t+1}`.
pub fn compute_returns(rewards: &[f64], gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut g = 0.0;
    for (o, r) in out.iter_mut().zip(rewards).rev() {
        g = r + gamma * g;
        *o = g;
    }
    out
}

/// Contract/day pairs naming a state.
pub type StateRef = (usize, usize);

/// Training contracts with the decision indices that keep every reward inside the training range.
pub(crate) struct TrainingSet<'a> {
    pub contracts: &'a [Arc<ContractData>],
    ranges: Vec<Option<(usize, usize)>>,
    eligible: Vec<usize>,
}

impl<'a> TrainingSet<'a> {
    pub fn new(contracts: &'a [Arc<ContractData>], train: &DateRange) -> Result<TrainingSet<'a>> {
        let ranges: Vec<Option<(usize, usize)>> = contracts
            .iter()
            .map(|c| {
                let dates = c.series.dates();
                let lo = (c.first_state_index()..dates.len()).find(|&t| dates[t] >= train.start)?;
                let in_range = dates.partition_point(|d| *d <= train.end);
                let hi = in_range.checked_sub(2)?;
                (lo <= hi).then_some((lo, hi))
            })
            .collect();
        let eligible: Vec<usize> = (0..contracts.len()).filter(|&i| ranges[i].is_some()).collect();
        if eligible.is_empty() {
            return Err(Error::InsufficientHistory(format!(
                "no contract has a full state window and a reward inside {} ..= {}",
                train.start, train.end
            )));
        }
        Ok(TrainingSet {
            contracts,
            ranges,
            eligible,
        })
    }

    /// Random (contract, start, length) episode.
    pub fn sample_episode<R: Rng + ?Sized>(&self, rng: &mut R, episode_len: usize) -> (usize, usize, usize) {
        let ci = self.eligible[rng.random_range(0..self.eligible.len())];
        let (lo, hi) = self.ranges[ci].expect("eligible");
        let len = episode_len.min(hi - lo + 1);
        let start = rng.random_range(lo..=hi + 1 - len);
        (ci, start, len)
    }

    pub fn batch(&self, refs: &[StateRef]) -> Result<SeqBatch> {
        states_batch(self.contracts, refs)
    }
}

pub(crate) fn states_batch(contracts: &[Arc<ContractData>], refs: &[StateRef]) -> Result<SeqBatch> {
    let seqs = refs
        .iter()
        .map(|&(c, t)| contracts[c].input_window(t))
        .collect::<Result<Vec<&[f64]>>>()?;
    SeqBatch::from_sequences(&seqs, WINDOW_LEN, FEATURE_COUNT)
}

/// One row of the training curve, written after each completed episode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub step: u64,
    /// Mean loss of the updates made during the episode, if any.
    pub loss: Option<f64>,
    /// Mean per-step reward of the episode.
    pub mean_episode_reward: f64,
    pub epsilon: f64,
}

pub fn write_curve_csv(rows: &[CurveRow], w: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(w);
    w.write_record(["step", "loss", "mean_episode_reward", "epsilon"])?;
    for r in rows {
        w.write_record([
            r.step.to_string(),
            r.loss.map(|l| l.to_string()).unwrap_or_default(),
            r.mean_episode_reward.to_string(),
            r.epsilon.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainStats {
    pub env_steps: u64,
    pub episodes: u64,
    pub updates: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainMeta {
    pub asset_class: Option<AssetClass>,
    pub tickers: Vec<String>,
    pub seed: u64,
    pub train: DateRange,
    pub stats: TrainStats,
}

/// A frozen trained policy. DQN keeps its target network and A2C its critic in `aux`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyCheckpoint {
    pub config: AgentConfig,
    pub reward: RewardConfig,
    pub policy: ParamStore,
    pub aux: Option<ParamStore>,
    pub meta: TrainMeta,
}

/// Windows per batched forward pass during evaluation.
const EVAL_CHUNK: usize = 256;

impl PolicyCheckpoint {
    pub fn algo(&self) -> Algo {
        self.config.algo
    }

    /// Deterministic positions for the states at `first..first + count`:
    /// argmax action for DQN and PG, the squashed Gaussian mean for A2C.
    pub fn greedy_positions(&self, data: &Arc<ContractData>, first: usize, count: usize) -> Result<Vec<f64>> {
        let net = Network::new(self.config.policy_net());
        let contracts = std::slice::from_ref(data);
        let mut out = Vec::with_capacity(count);
        let idx: Vec<usize> = (first..first + count).collect();
        for chunk in idx.chunks(EVAL_CHUNK) {
            let refs: Vec<StateRef> = chunk.iter().map(|&t| (0, t)).collect();
            let y = net.predict(&self.policy, &states_batch(contracts, &refs)?)?;
            for r in 0..y.rows {
                out.push(match self.config.algo {
                    Algo::A2c => y.get(r, 0),
                    Algo::Dqn | Algo::Pg => DISCRETE_ACTIONS[argmax(y.row(r))],
                });
            }
        }
        Ok(out)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer(&mut f, self)?;
        f.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<PolicyCheckpoint> {
        let f = std::io::BufReader::new(std::fs::File::open(path)?);
        Ok(serde_json::from_reader(f)?)
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate().skip(1) {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: PolicyCheckpoint,
    pub curve: Vec<CurveRow>,
}

/// Trains one agent on the training range of `split`, sampling episodes
/// uniformly across `contracts`. Deterministic for a given seed.
pub fn train(
    contracts: &[Arc<ContractData>],
    split: &WalkForwardSplit,
    cfg: &AgentConfig,
    reward: &RewardConfig,
    seed: u64,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let reward = reward.with_bp(cfg.bp_train);
    reward.validate()?;
    let set = TrainingSet::new(contracts, &split.train)?;
    let run = match cfg.algo {
        Algo::Dqn => dqn::train_dqn(&set, cfg, &reward, seed)?,
        Algo::Pg => pg::train_pg(&set, cfg, &reward, seed)?,
        Algo::A2c => a2c::train_a2c(&set, cfg, &reward, seed)?,
    };
    let classes: Vec<AssetClass> = contracts.iter().map(|c| c.series.asset_class()).collect();
    let asset_class = classes.first().copied().filter(|c| classes.iter().all(|x| x == c));
    Ok(TrainOutcome {
        checkpoint: PolicyCheckpoint {
            config: cfg.clone(),
            reward,
            policy: run.policy,
            aux: run.aux,
            meta: TrainMeta {
                asset_class,
                tickers: contracts.iter().map(|c| c.series.ticker().to_string()).collect(),
                seed,
                train: split.train,
                stats: run.stats,
            },
        },
        curve: run.curve,
    })
}

/// What an algorithm's training loop hands back.
pub(crate) struct RunResult {
    pub policy: ParamStore,
    pub aux: Option<ParamStore>,
    pub stats: TrainStats,
    pub curve: Vec<CurveRow>,
}

/// Per-seed initial parameters: policy from `seed`, auxiliary network from `seed + 1`.
pub fn initial_params(cfg: &AgentConfig, seed: u64) -> (ParamStore, Option<ParamStore>) {
    let policy = Network::new(cfg.policy_net()).init_params(seed);
    let aux = match cfg.algo {
        Algo::Dqn => Some(policy.clone()),
        Algo::Pg => None,
        Algo::A2c => cfg.aux_net().map(|s| Network::new(s).init_params(seed.wrapping_add(1))),
    };
    (policy, aux)
}

pub(crate) fn check_loss(loss: f64, step: u64) -> Result<f64> {
    if loss.is_finite() {
        Ok(loss)
    } else {
        Err(Error::DivergedLoss { step, loss })
    }
}

/// Mean of the losses recorded since the last curve row.
pub(crate) fn drain_mean(losses: &mut Vec<f64>) -> Option<f64> {
    if losses.is_empty() {
        return None;
    }
    let m = losses.iter().sum::<f64>() / losses.len() as f64;
    losses.clear();
    Some(m)
}
