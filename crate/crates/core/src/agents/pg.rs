use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{check_loss, compute_returns, initial_params, AgentConfig, CurveRow, RunResult, TrainStats, TrainingSet};
use crate::env::{ActionSpace, RewardConfig, TradingEnv};
use crate::error::{Error, Result};
use crate::nn::{clip_global_norm, AdamState, Matrix, Network, ParamStore, SeqBatch, Tape, Var};

/// `-Σ_t log π(a_t | s_t) · G_t` for a softmax policy over `logits`.
pub fn pg_loss(tape: &mut Tape, logits: Var, actions: &[usize], returns: &[f64]) -> Var {
    let logp = tape.log_softmax(logits);
    let chosen = tape.pick(logp, actions);
    let g = tape.constant(Matrix::from_vec(returns.len(), 1, returns.to_vec()));
    let weighted = tape.mul(chosen, g);
    let total = tape.sum(weighted);
    tape.scale(total, -1.0)
}

/// A finished episode: states in order, sampled actions and the rewards that followed.
#[derive(Debug, Clone)]
pub struct PgEpisode {
    pub states: SeqBatch,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
    pub complete: bool,
}

/// One Adam step on the REINFORCE loss of a whole episode. Returns the loss.
pub fn pg_update(
    net: &Network,
    params: &mut ParamStore,
    adam: &mut AdamState,
    episode: &PgEpisode,
    gamma: f64,
    lr: f64,
    grad_clip: f64,
) -> Result<f64> {
    let n = episode.states.n;
    if !episode.complete || episode.actions.len() != n || episode.rewards.len() != n {
        return Err(Error::IncompleteEpisode(format!(
            "{} states, {} actions, {} rewards, complete = {}",
            n,
            episode.actions.len(),
            episode.rewards.len(),
            episode.complete
        )));
    }
    let returns = compute_returns(&episode.rewards, gamma);
    let mut tape = Tape::new();
    let logits = net.forward(params, &mut tape, &episode.states)?.primary();
    let loss = pg_loss(&mut tape, logits, &episode.actions, &returns);
    let mut grads = tape.backward(loss, params)?;
    clip_global_norm(&mut grads, grad_clip);
    adam.step(params, &grads, lr)?;
    Ok(tape.scalar(loss))
}

fn sample_categorical<R: Rng + ?Sized>(logits: &[f64], rng: &mut R) -> usize {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let mut u = rng.random::<f64>() * w.iter().sum::<f64>();
    for (i, wi) in w.iter().enumerate() {
        if u < *wi {
            return i;
        }
        u -= wi;
    }
    w.len() - 1
}

pub(crate) fn train_pg(set: &TrainingSet, cfg: &AgentConfig, reward: &RewardConfig, seed: u64) -> Result<RunResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let net = Network::new(cfg.policy_net());
    let (mut params, _) = initial_params(cfg, seed);
    let mut adam = AdamState::new(&params);
    let mut stats = TrainStats::default();
    let mut curve = Vec::new();

    while stats.env_steps < cfg.step_budget {
        let remaining = (cfg.step_budget - stats.env_steps) as usize;
        let (ci, start, len) = set.sample_episode(&mut rng, cfg.episode_len.min(remaining));
        let mut env = TradingEnv::new(set.contracts[ci].clone(), *reward, ActionSpace::Discrete3)?;
        env.reset(start, len)?;
        let refs: Vec<(usize, usize)> = (start..start + len).map(|t| (ci, t)).collect();
        let states = set.batch(&refs)?;
        // The policy is frozen within an episode and states do not depend on
        // actions, so every step's logits come from one batched pass.
        let logits = net.predict(&params, &states)?;
        let mut actions = Vec::with_capacity(len);
        let mut rewards = Vec::with_capacity(len);
        let mut complete = false;
        for r in 0..len {
            let a = sample_categorical(logits.row(r), &mut rng);
            let step = env.step_index(a)?;
            actions.push(a);
            rewards.push(step.reward);
            complete = step.done;
        }
        stats.env_steps += len as u64;
        let episode = PgEpisode {
            states,
            actions,
            rewards,
            complete,
        };
        let loss = pg_update(
            &net,
            &mut params,
            &mut adam,
            &episode,
            cfg.gamma,
            cfg.lr_actor,
            cfg.grad_clip,
        )?;
        check_loss(loss, stats.env_steps)?;
        stats.updates += 1;
        stats.episodes += 1;
        curve.push(CurveRow {
            step: stats.env_steps,
            loss: Some(loss),
            mean_episode_reward: episode.rewards.iter().sum::<f64>() / len as f64,
            epsilon: 0.0,
        });
    }
    Ok(RunResult {
        policy: params,
        aux: None,
        stats,
        curve,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{HeadSpec, NetSpec, ParamId};

    fn toy_episode(rewards: Vec<f64>, actions: Vec<usize>) -> (Network, ParamStore, PgEpisode) {
        let net = Network::new(NetSpec::new(2, HeadSpec::Softmax { actions: 3 }).with_hidden([4, 3]));
        let params = net.init_params(9);
        let seqs: Vec<Vec<f64>> = (0..rewards.len())
            .map(|k| (0..10).map(|i| ((i + 3 * k) as f64 * 0.41).cos()).collect())
            .collect();
        let refs: Vec<&[f64]> = seqs.iter().map(|s| s.as_slice()).collect();
        let states = SeqBatch::from_sequences(&refs, 5, 2).unwrap();
        (
            net,
            params,
            PgEpisode {
                states,
                actions,
                rewards,
                complete: true,
            },
        )
    }

    #[test]
    fn zero_returns_leave_params() {
        let (net, mut params, ep) = toy_episode(vec![0.0; 3], vec![0, 1, 2]);
        let before = params.clone();
        let mut adam = AdamState::new(&params);
        pg_update(&net, &mut params, &mut adam, &ep, 0.3, 1e-2, 1.0).unwrap();
        assert_eq!(params, before);
    }

    #[test]
    fn incomplete_episode_rejected() {
        let (net, mut params, mut ep) = toy_episode(vec![1.0; 3], vec![0, 1, 2]);
        let mut adam = AdamState::new(&params);
        ep.complete = false;
        assert!(matches!(
            pg_update(&net, &mut params, &mut adam, &ep, 0.3, 1e-2, 1.0),
            Err(Error::IncompleteEpisode(_))
        ));
        ep.complete = true;
        ep.actions.pop();
        assert!(pg_update(&net, &mut params, &mut adam, &ep, 0.3, 1e-2, 1.0).is_err());
    }

    #[test]
    fn linear_policy_gradient_matches_analytic() {
        // logits = W x with W: 3×2, single step, G = 1.7, action 2.
        let x = [0.4, -1.1];
        let w = [0.3, -0.2, 0.5, 0.1, -0.7, 0.8];
        let mut store = ParamStore::new();
        let wid = store.push("w", Matrix::from_vec(3, 2, w.to_vec()));
        let mut tape = Tape::new();
        let xv = tape.constant(Matrix::from_vec(1, 2, x.to_vec()));
        let wv = tape.param(&store, wid);
        let logits = tape.affine(xv, wv, None);
        let loss = pg_loss(&mut tape, logits, &[2], &[1.7]);
        let g = tape.backward(loss, &store).unwrap();

        let z: Vec<f64> = (0..3).map(|k| w[2 * k] * x[0] + w[2 * k + 1] * x[1]).collect();
        let s: f64 = z.iter().map(|v| v.exp()).sum();
        for (k, zk) in z.iter().enumerate() {
            let p = zk.exp() / s;
            let ind = if k == 2 { 1.0 } else { 0.0 };
            for (j, xj) in x.iter().enumerate() {
                // d/dW_kj of -G log π(2) = -G (1[k=2] - p_k) x_j
                let expect = -1.7 * (ind - p) * xj;
                assert!((g.values(ParamId(0))[2 * k + j] - expect).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn positive_return_raises_probability() {
        let (net, mut params, ep) = toy_episode(vec![1.0], vec![2]);
        let prob = |p: &ParamStore| {
            let l = net.predict(p, &ep.states).unwrap();
            let row = l.row(0);
            let s: f64 = row.iter().map(|v| v.exp()).sum();
            row[2].exp() / s
        };
        let before = prob(&params);
        let mut adam = AdamState::new(&params);
        pg_update(&net, &mut params, &mut adam, &ep, 0.3, 1e-2, 1.0).unwrap();
        assert!(prob(&params) > before);
    }
}
