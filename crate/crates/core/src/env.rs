//! Single-contract trading MDP. Actions are target positions; the reward is
//! the volatility-scaled position times the next return, minus a cost
//! proportional to the change in scaled position.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::indicators::{encode_feature, FeatureMatrix, StateWindow, VolEstimate, FEATURE_COUNT, WINDOW_LEN};
use crate::market_data::{PriceSeries, TRADING_DAYS};

/// Target positions of the discrete action space, by action index.
pub const DISCRETE_ACTIONS: [f64; 3] = [-1.0, 0.0, 1.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ActionSpace {
    Discrete3,
    Continuous,
}

impl ActionSpace {
    /// Validates (discrete) or clamps (continuous) a target position.
    pub fn admit(self, action: f64) -> Result<f64> {
        match self {
            ActionSpace::Discrete3 if DISCRETE_ACTIONS.contains(&action) => Ok(action),
            ActionSpace::Discrete3 => Err(Error::Config(format!("{action} is not a discrete action"))),
            ActionSpace::Continuous if action.is_finite() => Ok(action.clamp(-1.0, 1.0)),
            ActionSpace::Continuous => Err(Error::NonFiniteInput),
        }
    }
}

/// Which price change multiplies the scaled position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReturnConvention {
    /// `r_t = p_t/p_{t-1} - 1`; cost is `bp · |Δ scaled position|`.
    #[default]
    Percentage,
    /// `r_t = p_t - p_{t-1}`; cost is `bp · p_{t-1} · |Δ scaled position|`.
    Additive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardConfig {
    /// Contracts per trade.
    pub mu: f64,
    /// Annualized volatility target.
    pub sigma_tgt: f64,
    /// Cost rate as a fraction of traded value (1bp = 0.0001).
    pub bp: f64,
    /// Floor on the daily volatility estimate.
    pub vol_floor: f64,
    pub convention: ReturnConvention,
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig {
            mu: 1.0,
            sigma_tgt: 0.15,
            bp: 0.0020,
            vol_floor: 1e-4,
            convention: ReturnConvention::Percentage,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.mu > 0.0 && self.sigma_tgt > 0.0 && self.bp >= 0.0 && self.vol_floor > 0.0;
        if ok
            && [self.mu, self.sigma_tgt, self.bp, self.vol_floor]
                .iter()
                .all(|v| v.is_finite())
        {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid reward config {self:?}")))
        }
    }

    pub fn with_bp(mut self, bp: f64) -> Self {
        self.bp = bp;
        self
    }

    pub fn sigma_tgt_daily(&self) -> f64 {
        self.sigma_tgt / TRADING_DAYS.sqrt()
    }
}

/// `A · σ_tgt_daily / σ_daily`; the vol floor is applied by the caller.
pub fn scaled_position(action: f64, sigma_daily: f64, cfg: &RewardConfig) -> f64 {
    if action == 0.0 {
        return 0.0;
    }
    action * cfg.sigma_tgt_daily() / sigma_daily
}

/// Components of one reward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    /// Scaled position held over the period.
    pub position: f64,
    pub pnl: f64,
    pub cost: f64,
    pub reward: f64,
}

/// Reward earned over `(t-1, t]` by the position set at `t-1`.
///
/// `sigma_prev`/`sigma_prev2` are the ex-ante daily volatilities at `t-1` and
/// `t-2`; `a_prev`/`a_prev2` the target positions set at those closes.
#[allow(clippy::too_many_arguments)]
pub fn reward(
    cfg: &RewardConfig,
    p_prev: f64,
    p_now: f64,
    sigma_prev: f64,
    sigma_prev2: f64,
    a_prev: f64,
    a_prev2: f64,
) -> RewardBreakdown {
    let pos = scaled_position(a_prev, sigma_prev.max(cfg.vol_floor), cfg);
    let pos2 = scaled_position(a_prev2, sigma_prev2.max(cfg.vol_floor), cfg);
    let (r, traded_value) = match cfg.convention {
        ReturnConvention::Percentage => (p_now / p_prev - 1.0, 1.0),
        ReturnConvention::Additive => (p_now - p_prev, p_prev),
    };
    let pnl = cfg.mu * pos * r;
    let cost = cfg.mu * cfg.bp * traded_value * (pos - pos2).abs();
    RewardBreakdown {
        position: pos,
        pnl,
        cost,
        reward: pnl - cost,
    }
}

/// A contract's prices with its precomputed features and ex-ante volatility.
#[derive(Debug, Clone)]
pub struct ContractData {
    pub series: PriceSeries,
    pub features: FeatureMatrix,
    pub vol: VolEstimate,
    /// Encoded feature rows, row-major; rows before the first valid index are zero.
    inputs: Vec<f64>,
}

impl ContractData {
    pub fn new(series: PriceSeries) -> Result<ContractData> {
        let vol = VolEstimate::from_prices(series.closes());
        let features = FeatureMatrix::compute_with_vol(&series, &vol)?;
        let mut inputs = vec![0.0; features.len() * FEATURE_COUNT];
        for t in features.first_valid_index..features.len() {
            for (k, v) in features.row(t).into_iter().enumerate() {
                inputs[t * FEATURE_COUNT + k] = encode_feature(k, v);
            }
        }
        Ok(ContractData {
            series,
            features,
            vol,
            inputs,
        })
    }

    /// Encoded network input for the state at `t` (equal to `features.window(t)?.encoded()`).
    pub fn input_window(&self, t: usize) -> Result<&[f64]> {
        if t < self.first_state_index() || t >= self.len() {
            return Err(Error::InsufficientHistory(format!("no full state window at index {t}")));
        }
        Ok(&self.inputs[(t + 1 - WINDOW_LEN) * FEATURE_COUNT..(t + 1) * FEATURE_COUNT])
    }

    pub fn len(&self) -> usize {
        self.series.len()
    }

    pub fn is_empty(&self) -> bool {
        self.series.is_empty()
    }

    pub fn first_state_index(&self) -> usize {
        self.features.first_state_index()
    }

    /// Rewards for target positions decided at consecutive closes starting at
    /// `first_decision`. Element `k` is the reward dated `first_decision + k + 1`.
    /// The position before `first_decision` is flat.
    pub fn account(
        &self,
        cfg: &RewardConfig,
        first_decision: usize,
        positions: &[f64],
    ) -> Result<Vec<RewardBreakdown>> {
        if first_decision == 0 || first_decision + positions.len() > self.len() - 1 {
            return Err(Error::OutOfRange {
                index: first_decision + positions.len(),
                len: self.len(),
            });
        }
        let p = self.series.closes();
        let sigma = &self.vol.daily;
        let mut prev = 0.0;
        Ok(positions
            .iter()
            .enumerate()
            .map(|(k, &a)| {
                let t = first_decision + k;
                let b = reward(cfg, p[t], p[t + 1], sigma[t], sigma[t - 1], a, prev);
                prev = a;
                b
            })
            .collect())
    }
}

/// Position bookkeeping for one episode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvCursor {
    pub t: usize,
    pub start: usize,
    pub episode_len: usize,
    pub a_prev: f64,
    pub a_prev2: f64,
    pub done: bool,
}

#[derive(Debug, Clone)]
pub struct Step {
    pub state: StateWindow,
    pub reward: f64,
    pub breakdown: RewardBreakdown,
    pub done: bool,
}

/// Episodic environment over one contract.
#[derive(Debug, Clone)]
pub struct TradingEnv {
    data: Arc<ContractData>,
    cfg: RewardConfig,
    space: ActionSpace,
    cursor: Option<EnvCursor>,
}

impl TradingEnv {
    pub fn new(data: Arc<ContractData>, cfg: RewardConfig, space: ActionSpace) -> Result<TradingEnv> {
        cfg.validate()?;
        Ok(TradingEnv {
            data,
            cfg,
            space,
            cursor: None,
        })
    }

    pub fn data(&self) -> &Arc<ContractData> {
        &self.data
    }

    pub fn config(&self) -> &RewardConfig {
        &self.cfg
    }

    pub fn space(&self) -> ActionSpace {
        self.space
    }

    pub fn cursor(&self) -> Option<&EnvCursor> {
        self.cursor.as_ref()
    }

    /// Largest episode length that can start at `start`.
    pub fn max_episode_len(&self, start: usize) -> usize {
        (self.data.len() - 1).saturating_sub(start)
    }

    /// Starts a flat episode at `start_index` and returns its first state.
    pub fn reset(&mut self, start_index: usize, episode_len: usize) -> Result<StateWindow> {
        if start_index < self.data.first_state_index()
            || episode_len == 0
            || start_index + episode_len > self.data.len() - 1
        {
            return Err(Error::OutOfRange {
                index: start_index + episode_len,
                len: self.data.len(),
            });
        }
        self.cursor = Some(EnvCursor {
            t: start_index,
            start: start_index,
            episode_len,
            a_prev: 0.0,
            a_prev2: 0.0,
            done: false,
        });
        self.data.features.window(start_index)
    }

    /// Applies the target position chosen at the current close and advances one day.
    pub fn step(&mut self, action: f64) -> Result<Step> {
        let action = self.space.admit(action)?;
        let cur = self.cursor.as_mut().ok_or(Error::EpisodeDone)?;
        if cur.done {
            return Err(Error::EpisodeDone);
        }
        cur.a_prev2 = cur.a_prev;
        cur.a_prev = action;
        let t = cur.t;
        let p = self.data.series.closes();
        let sigma = &self.data.vol.daily;
        let breakdown = reward(
            &self.cfg,
            p[t],
            p[t + 1],
            sigma[t],
            sigma[t - 1],
            cur.a_prev,
            cur.a_prev2,
        );
        cur.t += 1;
        cur.done = cur.t >= cur.start + cur.episode_len;
        let done = cur.done;
        let next = cur.t;
        Ok(Step {
            state: self.data.features.window(next)?,
            reward: breakdown.reward,
            breakdown,
            done,
        })
    }

    /// Discrete-action convenience: steps with `DISCRETE_ACTIONS[index]`.
    pub fn step_index(&mut self, index: usize) -> Result<Step> {
        let a = *DISCRETE_ACTIONS
            .get(index)
            .ok_or_else(|| Error::Config(format!("action index {index} out of range")))?;
        self.step(a)
    }
}
