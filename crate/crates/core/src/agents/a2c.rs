use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{check_loss, drain_mean, initial_params, AgentConfig, CurveRow, RunResult, TrainStats, TrainingSet};
use crate::env::{ActionSpace, RewardConfig, TradingEnv};
use crate::error::{Error, Result};
use crate::nn::{clip_global_norm, AdamState, Matrix, Network, ParamStore, SeqBatch, Tape, Var};

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// One-step advantages `r + γ V(s') - V(s)`, without bootstrapping on terminal transitions.
pub fn advantages(rewards: &[f64], v_next: &[f64], v: &[f64], dones: &[bool], gamma: f64) -> Vec<f64> {
    (0..rewards.len())
        .map(|i| td_target(rewards[i], v_next[i], dones[i], gamma) - v[i])
        .collect()
}

fn td_target(r: f64, v_next: f64, done: bool, gamma: f64) -> f64 {
    if done {
        r
    } else {
        r + gamma * v_next
    }
}

/// Per-row Gaussian log density of the raw (pre-clamp) actions `u`, as an `n×1` column.
pub fn gaussian_log_prob(tape: &mut Tape, mean: Var, log_std: Var, u: &[f64]) -> Var {
    let uv = tape.constant(Matrix::from_vec(u.len(), 1, u.to_vec()));
    let diff = tape.sub(uv, mean);
    let neg_ls = tape.scale(log_std, -1.0);
    let inv_std = tape.exp(neg_ls);
    let z = tape.mul(diff, inv_std);
    let z2 = tape.square(z);
    let quad = tape.scale(z2, -0.5);
    let lp = tape.sub(quad, log_std);
    tape.offset(lp, -HALF_LN_2PI)
}

/// `-Σ log π(u|s) · adv - entropy_coef · Σ H`, with `adv` a constant.
pub fn a2c_actor_loss(tape: &mut Tape, mean: Var, log_std: Var, u: &[f64], adv: &[f64], entropy_coef: f64) -> Var {
    let lp = gaussian_log_prob(tape, mean, log_std, u);
    let a = tape.constant(Matrix::from_vec(adv.len(), 1, adv.to_vec()));
    let weighted = tape.mul(lp, a);
    let total = tape.sum(weighted);
    let pg = tape.scale(total, -1.0);
    if entropy_coef == 0.0 {
        return pg;
    }
    let h = tape.offset(log_std, 0.5 + HALF_LN_2PI);
    let h_sum = tape.sum(h);
    let bonus = tape.scale(h_sum, -entropy_coef);
    tape.add(pg, bonus)
}

/// `Σ (y - V(s))²` against constant TD targets `y`.
pub fn critic_loss(tape: &mut Tape, v: Var, targets: &[f64]) -> Var {
    let y = tape.constant(Matrix::from_vec(targets.len(), 1, targets.to_vec()));
    let err = tape.sub(y, v);
    let sq = tape.square(err);
    tape.sum(sq)
}

/// Synchronised one-step transitions from `n_envs` environments, tick-major.
#[derive(Debug, Clone)]
pub struct A2cBatch {
    pub n_envs: usize,
    pub states: SeqBatch,
    pub next_states: SeqBatch,
    /// Sampled actions before clamping.
    pub raw_actions: Vec<f64>,
    pub rewards: Vec<f64>,
    pub dones: Vec<bool>,
}

/// Actor and critic networks with their optimisers.
#[derive(Debug, Clone)]
pub struct A2cLearner {
    pub actor_net: Network,
    pub critic_net: Network,
    pub actor: ParamStore,
    pub critic: ParamStore,
    pub actor_adam: AdamState,
    pub critic_adam: AdamState,
}

impl A2cLearner {
    pub fn new(actor_net: Network, critic_net: Network, actor: ParamStore, critic: ParamStore) -> A2cLearner {
        A2cLearner {
            actor_adam: AdamState::new(&actor),
            critic_adam: AdamState::new(&critic),
            actor_net,
            critic_net,
            actor,
            critic,
        }
    }
}

/// Separate Adam steps for actor and critic. Returns `(actor_loss, critic_loss)`.
pub fn a2c_update(learner: &mut A2cLearner, batch: &A2cBatch, cfg: &AgentConfig) -> Result<(f64, f64)> {
    let n = batch.states.n;
    if batch.n_envs != cfg.n_envs || !n.is_multiple_of(cfg.n_envs) {
        return Err(Error::EnvCountMismatch {
            expected: cfg.n_envs,
            got: batch.n_envs,
        });
    }
    if batch.raw_actions.len() != n || batch.rewards.len() != n || batch.dones.len() != n || batch.next_states.n != n {
        return Err(Error::ShapeMismatch("A2C batch fields differ in length".into()));
    }
    let v_next = learner.critic_net.predict(&learner.critic, &batch.next_states)?.data;

    let mut ctape = Tape::new();
    let v = learner
        .critic_net
        .forward(&learner.critic, &mut ctape, &batch.states)?
        .primary();
    let targets: Vec<f64> = (0..n)
        .map(|i| td_target(batch.rewards[i], v_next[i], batch.dones[i], cfg.gamma))
        .collect();
    let adv = advantages(&batch.rewards, &v_next, &ctape.value(v).data, &batch.dones, cfg.gamma);
    let closs = critic_loss(&mut ctape, v, &targets);

    let mut atape = Tape::new();
    let (mean, log_std) = match learner.actor_net.forward(&learner.actor, &mut atape, &batch.states)? {
        crate::nn::HeadOut::Gaussian { mean, log_std } => (mean, log_std),
        _ => return Err(Error::Config("A2C actor needs a Gaussian head".into())),
    };
    let aloss = a2c_actor_loss(&mut atape, mean, log_std, &batch.raw_actions, &adv, cfg.entropy_coef);

    let mut ag = atape.backward(aloss, &learner.actor)?;
    clip_global_norm(&mut ag, cfg.grad_clip);
    learner.actor_adam.step(&mut learner.actor, &ag, cfg.lr_actor)?;
    let mut cg = ctape.backward(closs, &learner.critic)?;
    clip_global_norm(&mut cg, cfg.grad_clip);
    learner.critic_adam.step(&mut learner.critic, &cg, cfg.lr_critic)?;
    Ok((atape.scalar(aloss), ctape.scalar(closs)))
}

struct Slot {
    env: TradingEnv,
    contract: usize,
    t: usize,
    rewards: Vec<f64>,
}

pub(crate) fn train_a2c(set: &TrainingSet, cfg: &AgentConfig, reward: &RewardConfig, seed: u64) -> Result<RunResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (actor, critic) = initial_params(cfg, seed);
    let critic_spec = cfg.aux_net().expect("A2C has a critic");
    let mut learner = A2cLearner::new(
        Network::new(cfg.policy_net()),
        Network::new(critic_spec),
        actor,
        critic.expect("A2C has a critic"),
    );
    let log_std_id = learner
        .actor
        .id("head.log_std")
        .ok_or_else(|| Error::Config("actor has no log_std".into()))?;
    let ticks_per_update = (cfg.batch_size / cfg.n_envs).max(1);

    let mut slots: Vec<Option<Slot>> = (0..cfg.n_envs).map(|_| None).collect();
    let mut stats = TrainStats::default();
    let mut curve = Vec::new();
    let mut losses = Vec::new();

    while stats.env_steps < cfg.step_budget {
        let mut states = Vec::new();
        let mut next = Vec::new();
        let mut raw_actions = Vec::new();
        let mut rewards = Vec::new();
        let mut dones = Vec::new();
        for _ in 0..ticks_per_update {
            if stats.env_steps + cfg.n_envs as u64 > cfg.step_budget {
                break;
            }
            for slot in slots.iter_mut() {
                if slot.is_none() {
                    let (ci, start, len) = set.sample_episode(&mut rng, cfg.episode_len);
                    let mut env = TradingEnv::new(set.contracts[ci].clone(), *reward, ActionSpace::Continuous)?;
                    env.reset(start, len)?;
                    *slot = Some(Slot {
                        env,
                        contract: ci,
                        t: start,
                        rewards: Vec::new(),
                    });
                }
            }
            let refs: Vec<(usize, usize)> = slots.iter().flatten().map(|s| (s.contract, s.t)).collect();
            let means = learner.actor_net.predict(&learner.actor, &set.batch(&refs)?)?;
            let std = learner.actor.values(log_std_id)[0].exp();
            for (k, slot) in slots.iter_mut().enumerate() {
                let s = slot.as_mut().expect("filled above");
                let z: f64 = StandardNormal.sample(&mut rng);
                let u = means.get(k, 0) + std * z;
                let step = s.env.step(u.clamp(-1.0, 1.0))?;
                stats.env_steps += 1;
                states.push((s.contract, s.t));
                next.push((s.contract, s.t + 1));
                raw_actions.push(u);
                rewards.push(step.reward);
                dones.push(step.done);
                s.rewards.push(step.reward);
                s.t += 1;
                if step.done {
                    stats.episodes += 1;
                    curve.push(CurveRow {
                        step: stats.env_steps,
                        loss: drain_mean(&mut losses),
                        mean_episode_reward: s.rewards.iter().sum::<f64>() / s.rewards.len() as f64,
                        epsilon: 0.0,
                    });
                    *slot = None;
                }
            }
        }
        if states.is_empty() {
            break;
        }
        let batch = A2cBatch {
            n_envs: cfg.n_envs,
            states: set.batch(&states)?,
            next_states: set.batch(&next)?,
            raw_actions,
            rewards,
            dones,
        };
        let (al, cl) = a2c_update(&mut learner, &batch, cfg)?;
        check_loss(al, stats.env_steps)?;
        losses.push(check_loss(cl, stats.env_steps)?);
        stats.updates += 1;
    }
    Ok(RunResult {
        policy: learner.actor,
        aux: Some(learner.critic),
        stats,
        curve,
    })
}
