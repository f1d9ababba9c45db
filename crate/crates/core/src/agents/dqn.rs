use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::AgentConfig;
use super::{
    argmax, check_loss, drain_mean, initial_params, CurveRow, ReplayBuffer, RunResult, TrainStats, TrainingSet,
};
use crate::env::{ActionSpace, RewardConfig, TradingEnv};
use crate::error::{Error, Result};
use crate::nn::{clip_global_norm, AdamState, Matrix, Network, ParamStore, SeqBatch, Tape, Var};

/// ε-greedy choice among the actions. `q` is only evaluated on the greedy branch.
pub fn dqn_select<R: Rng + ?Sized>(eps: f64, rng: &mut R, q: impl FnOnce() -> Result<Vec<f64>>) -> Result<usize> {
    if rng.random::<f64>() < eps {
        return Ok(rng.random_range(0..3));
    }
    let q = q()?;
    Ok(argmax(&q))
}

/// `y = r + γ · Q_target(s', argmax_a Q_online(s', a))`, or `y = r` on terminal transitions.
pub fn double_dqn_targets(
    q_online_next: &Matrix,
    q_target_next: &Matrix,
    rewards: &[f64],
    dones: &[bool],
    gamma: f64,
) -> Vec<f64> {
    rewards
        .iter()
        .zip(dones)
        .enumerate()
        .map(|(i, (&r, &done))| {
            if done {
                r
            } else {
                let a = argmax(q_online_next.row(i));
                r + gamma * q_target_next.get(i, a)
            }
        })
        .collect()
}

/// Mean squared error between the chosen actions' Q-values and the targets.
pub fn dqn_loss(tape: &mut Tape, q: Var, actions: &[usize], targets: &[f64]) -> Var {
    let chosen = tape.pick(q, actions);
    let y = tape.constant(Matrix::from_vec(targets.len(), 1, targets.to_vec()));
    let err = tape.sub(chosen, y);
    let sq = tape.square(err);
    tape.mean(sq)
}

#[derive(Debug, Clone)]
pub struct DqnBatch {
    pub states: SeqBatch,
    pub next_states: SeqBatch,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
    pub dones: Vec<bool>,
}

/// One Adam step on the online network toward double-DQN targets. Returns the loss.
#[allow(clippy::too_many_arguments)]
pub fn dqn_train_step(
    net: &Network,
    online: &mut ParamStore,
    target: &ParamStore,
    adam: &mut AdamState,
    batch: &DqnBatch,
    gamma: f64,
    lr: f64,
    grad_clip: f64,
) -> Result<f64> {
    if batch.actions.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let q_online_next = net.predict(online, &batch.next_states)?;
    let q_target_next = net.predict(target, &batch.next_states)?;
    let y = double_dqn_targets(&q_online_next, &q_target_next, &batch.rewards, &batch.dones, gamma);
    let mut tape = Tape::new();
    let q = net.forward(online, &mut tape, &batch.states)?.primary();
    let loss = dqn_loss(&mut tape, q, &batch.actions, &y);
    let mut grads = tape.backward(loss, online)?;
    clip_global_norm(&mut grads, grad_clip);
    adam.step(online, &grads, lr)?;
    Ok(tape.scalar(loss))
}

/// Hard-copies `online` into `target` when `step` is a positive multiple of `tau`.
pub fn target_sync(online: &ParamStore, target: &mut ParamStore, step: u64, tau: u64) -> bool {
    if tau > 0 && step > 0 && step.is_multiple_of(tau) {
        target.clone_from(online);
        true
    } else {
        false
    }
}

#[derive(Debug, Clone, Copy)]
struct Transition {
    contract: usize,
    t: usize,
    action: usize,
    reward: f64,
    done: bool,
}

pub(crate) fn train_dqn(set: &TrainingSet, cfg: &AgentConfig, reward: &RewardConfig, seed: u64) -> Result<RunResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let net = Network::new(cfg.policy_net());
    let (mut online, target) = initial_params(cfg, seed);
    let mut target = target.expect("DQN has a target network");
    let mut adam = AdamState::new(&online);
    let mut envs = set
        .contracts
        .iter()
        .map(|c| TradingEnv::new(c.clone(), *reward, ActionSpace::Discrete3))
        .collect::<Result<Vec<_>>>()?;
    let mut memory = ReplayBuffer::new(cfg.memory_size)?;
    let warmup = cfg.batch_size * cfg.warmup_batches.max(1);

    let mut stats = TrainStats::default();
    let mut curve = Vec::new();
    let mut losses = Vec::new();
    let mut episode_rewards = Vec::new();
    let mut current: Option<(usize, usize)> = None;

    while stats.env_steps < cfg.step_budget {
        let (ci, t) = match current {
            Some(s) => s,
            None => {
                let (ci, start, len) = set.sample_episode(&mut rng, cfg.episode_len);
                envs[ci].reset(start, len)?;
                (ci, start)
            }
        };
        let eps = cfg.epsilon.value(stats.env_steps, cfg.step_budget);
        let action = dqn_select(eps, &mut rng, || {
            Ok(net.predict(&online, &set.batch(&[(ci, t)])?)?.data)
        })?;
        let step = envs[ci].step_index(action)?;
        stats.env_steps += 1;
        memory.push(Transition {
            contract: ci,
            t,
            action,
            reward: step.reward,
            done: step.done,
        });
        episode_rewards.push(step.reward);
        current = (!step.done).then_some((ci, t + 1));

        if memory.len() >= warmup && stats.env_steps % cfg.train_every == 0 {
            let sample = memory.sample(cfg.batch_size, &mut rng)?;
            let states: Vec<(usize, usize)> = sample.iter().map(|s| (s.contract, s.t)).collect();
            let next: Vec<(usize, usize)> = sample.iter().map(|s| (s.contract, s.t + 1)).collect();
            let batch = DqnBatch {
                states: set.batch(&states)?,
                next_states: set.batch(&next)?,
                actions: sample.iter().map(|s| s.action).collect(),
                rewards: sample.iter().map(|s| s.reward).collect(),
                dones: sample.iter().map(|s| s.done).collect(),
            };
            let loss = dqn_train_step(
                &net,
                &mut online,
                &target,
                &mut adam,
                &batch,
                cfg.gamma,
                cfg.lr_critic,
                cfg.grad_clip,
            )?;
            losses.push(check_loss(loss, stats.env_steps)?);
            stats.updates += 1;
        }
        target_sync(&online, &mut target, stats.env_steps, cfg.target_sync_tau);

        if step.done {
            stats.episodes += 1;
            curve.push(CurveRow {
                step: stats.env_steps,
                loss: drain_mean(&mut losses),
                mean_episode_reward: episode_rewards.iter().sum::<f64>() / episode_rewards.len() as f64,
                epsilon: eps,
            });
            episode_rewards.clear();
        }
    }
    Ok(RunResult {
        policy: online,
        aux: Some(target),
        stats,
        curve,
    })
}
