//! Two-layer LSTM encoder with a Leaky-ReLU dense head.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use super::params::{ParamId, ParamStore};
use super::tape::{Tape, Var};
use crate::error::{Error, Result};

pub const LEAKY_SLOPE: f64 = 0.01;
pub const LOG_STD_INIT: f64 = -0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HeadSpec {
    /// One Q-value per action; `dueling` splits into value and advantage streams.
    Q { actions: usize, dueling: bool },
    /// Action logits of a softmax policy.
    Softmax { actions: usize },
    /// Scalar state value.
    Value,
    /// Squashed Gaussian mean plus a state-independent log standard deviation.
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetSpec {
    pub features: usize,
    pub hidden: [usize; 2],
    pub head: HeadSpec,
}

impl NetSpec {
    pub fn new(features: usize, head: HeadSpec) -> NetSpec {
        NetSpec {
            features,
            hidden: [64, 32],
            head,
        }
    }

    pub fn with_hidden(mut self, hidden: [usize; 2]) -> NetSpec {
        self.hidden = hidden;
        self
    }
}

/// `n` sequences of `steps` rows with `features` columns, stored per step so
/// that `step(t)` is the `n×features` input at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct SeqBatch {
    pub n: usize,
    pub steps: usize,
    pub features: usize,
    by_step: Vec<Matrix>,
}

impl SeqBatch {
    /// Builds from per-sequence row-major `steps×features` buffers.
    pub fn from_sequences(seqs: &[&[f64]], steps: usize, features: usize) -> Result<SeqBatch> {
        if seqs.is_empty() {
            return Err(Error::EmptyBatch);
        }
        let n = seqs.len();
        let mut by_step = vec![Matrix::zeros(n, features); steps];
        for (i, s) in seqs.iter().enumerate() {
            if s.len() != steps * features {
                return Err(Error::ShapeMismatch(format!(
                    "sequence {i} has {} values, expected {}",
                    s.len(),
                    steps * features
                )));
            }
            if s.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteInput);
            }
            for (t, m) in by_step.iter_mut().enumerate() {
                m.data[i * features..(i + 1) * features].copy_from_slice(&s[t * features..(t + 1) * features]);
            }
        }
        Ok(SeqBatch {
            n,
            steps,
            features,
            by_step,
        })
    }

    pub fn step(&self, t: usize) -> &Matrix {
        &self.by_step[t]
    }
}

/// Head outputs recorded on a tape. Every variant has one row per sequence.
#[derive(Debug, Clone, Copy)]
pub enum HeadOut {
    Q(Var),
    Logits(Var),
    Value(Var),
    /// `mean` is already squashed through tanh; `log_std` is `n×1`.
    Gaussian {
        mean: Var,
        log_std: Var,
    },
}

impl HeadOut {
    pub fn primary(&self) -> Var {
        match *self {
            HeadOut::Q(v) | HeadOut::Logits(v) | HeadOut::Value(v) => v,
            HeadOut::Gaussian { mean, .. } => mean,
        }
    }
}

struct LstmIds {
    w_ih: ParamId,
    w_hh: ParamId,
    b: ParamId,
    hidden: usize,
}

/// The network definition: parameter layout plus the forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Network {
    pub spec: NetSpec,
}

impl Network {
    pub fn new(spec: NetSpec) -> Network {
        Network { spec }
    }

    /// Uniform(±1/√fan_in) weights, zero biases, forget-gate bias 1.
    pub fn init_params(&self, seed: u64) -> ParamStore {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let uniform = |rows: usize, cols: usize, rng: &mut ChaCha8Rng| {
            let bound = 1.0 / (cols as f64).sqrt();
            Matrix::from_vec(
                rows,
                cols,
                (0..rows * cols).map(|_| rng.random_range(-bound..=bound)).collect(),
            )
        };
        let mut input = self.spec.features;
        for (l, &h) in self.spec.hidden.iter().enumerate() {
            store.push(format!("lstm{}.w_ih", l + 1), uniform(4 * h, input, &mut rng));
            store.push(format!("lstm{}.w_hh", l + 1), uniform(4 * h, h, &mut rng));
            let mut b = Matrix::zeros(1, 4 * h);
            b.data[h..2 * h].fill(1.0);
            store.push(format!("lstm{}.b", l + 1), b);
            input = h;
        }
        let dense = |store: &mut ParamStore, name: &str, out: usize, rng: &mut ChaCha8Rng| {
            store.push(format!("head.{name}.w"), uniform(out, input, rng));
            store.push(format!("head.{name}.b"), Matrix::zeros(1, out));
        };
        match self.spec.head {
            HeadSpec::Q { actions, dueling: true } => {
                dense(&mut store, "value", 1, &mut rng);
                dense(&mut store, "adv", actions, &mut rng);
            }
            HeadSpec::Q {
                actions,
                dueling: false,
            } => dense(&mut store, "q", actions, &mut rng),
            HeadSpec::Softmax { actions } => dense(&mut store, "logits", actions, &mut rng),
            HeadSpec::Value => dense(&mut store, "value", 1, &mut rng),
            HeadSpec::Gaussian => {
                dense(&mut store, "mean", 1, &mut rng);
                store.push("head.log_std", Matrix::scalar(LOG_STD_INIT));
            }
        }
        store
    }

    fn id(store: &ParamStore, name: &str) -> Result<ParamId> {
        store
            .id(name)
            .ok_or_else(|| Error::ShapeMismatch(format!("parameter `{name}` missing from store")))
    }

    fn lstm_ids(store: &ParamStore, layer: usize, hidden: usize) -> Result<LstmIds> {
        Ok(LstmIds {
            w_ih: Self::id(store, &format!("lstm{layer}.w_ih"))?,
            w_hh: Self::id(store, &format!("lstm{layer}.w_hh"))?,
            b: Self::id(store, &format!("lstm{layer}.b"))?,
            hidden,
        })
    }

    /// Runs one LSTM layer over `inputs`, returning the hidden state at every step.
    fn lstm_layer(tape: &mut Tape, store: &ParamStore, ids: &LstmIds, inputs: &[Var], n: usize) -> Vec<Var> {
        let h = ids.hidden;
        let w_ih = tape.param(store, ids.w_ih);
        let w_hh = tape.param(store, ids.w_hh);
        let b = tape.param(store, ids.b);
        let mut hs = Vec::with_capacity(inputs.len());
        let mut prev: Option<(Var, Var)> = None;
        for &x in inputs {
            let (h_t, c) = match prev {
                Some((h_prev, c_prev)) => {
                    let gates = tape.affine2(x, w_ih, h_prev, w_hh, Some(b));
                    tape.lstm_cell(gates, Some(c_prev))
                }
                None => {
                    let gates = tape.affine(x, w_ih, Some(b));
                    tape.lstm_cell(gates, None)
                }
            };
            debug_assert_eq!(tape.value(h_t).shape(), (n, h));
            hs.push(h_t);
            prev = Some((h_t, c));
        }
        hs
    }

    /// Hidden states of the top LSTM layer at every step.
    pub fn encode(&self, store: &ParamStore, tape: &mut Tape, batch: &SeqBatch) -> Result<Vec<Var>> {
        if batch.features != self.spec.features {
            return Err(Error::ShapeMismatch(format!(
                "network expects {} features, batch has {}",
                self.spec.features, batch.features
            )));
        }
        if batch.steps == 0 {
            return Err(Error::ShapeMismatch("empty sequence".into()));
        }
        let mut seq: Vec<Var> = (0..batch.steps).map(|t| tape.constant(batch.step(t).clone())).collect();
        for (l, &h) in self.spec.hidden.iter().enumerate() {
            let ids = Self::lstm_ids(store, l + 1, h)?;
            seq = Self::lstm_layer(tape, store, &ids, &seq, batch.n);
        }
        Ok(seq)
    }

    fn dense(tape: &mut Tape, store: &ParamStore, x: Var, name: &str) -> Result<Var> {
        let w = tape.param(store, Self::id(store, &format!("head.{name}.w"))?);
        let b = tape.param(store, Self::id(store, &format!("head.{name}.b"))?);
        Ok(tape.affine(x, w, Some(b)))
    }

    /// Full forward pass: LSTM stack, Leaky-ReLU on the final hidden state, dense head.
    pub fn forward(&self, store: &ParamStore, tape: &mut Tape, batch: &SeqBatch) -> Result<HeadOut> {
        let hs = self.encode(store, tape, batch)?;
        let last = *hs.last().expect("non-empty sequence");
        let z = tape.leaky_relu(last, LEAKY_SLOPE);
        Ok(match self.spec.head {
            HeadSpec::Q { actions, dueling: true } => {
                let v = Self::dense(tape, store, z, "value")?;
                let a = Self::dense(tape, store, z, "adv")?;
                HeadOut::Q(dueling_combine(tape, v, a, actions))
            }
            HeadSpec::Q { dueling: false, .. } => HeadOut::Q(Self::dense(tape, store, z, "q")?),
            HeadSpec::Softmax { .. } => HeadOut::Logits(Self::dense(tape, store, z, "logits")?),
            HeadSpec::Value => HeadOut::Value(Self::dense(tape, store, z, "value")?),
            HeadSpec::Gaussian => {
                let raw = Self::dense(tape, store, z, "mean")?;
                let mean = tape.tanh(raw);
                let ls = tape.param(store, Self::id(store, "head.log_std")?);
                let log_std = tape.broadcast_rows(ls, batch.n);
                HeadOut::Gaussian { mean, log_std }
            }
        })
    }

    /// Forward pass without keeping the tape; returns the primary head output.
    pub fn predict(&self, store: &ParamStore, batch: &SeqBatch) -> Result<Matrix> {
        let mut tape = Tape::new();
        let out = self.forward(store, &mut tape, batch)?;
        Ok(tape.value(out.primary()).clone())
    }
}

/// `Q(s,a) = V(s) + A(s,a) - mean_a A(s,a)`.
pub fn dueling_combine(tape: &mut Tape, value: Var, adv: Var, actions: usize) -> Var {
    let mean_a = tape.row_mean(adv);
    let centred_v = tape.sub(value, mean_a);
    let vb = tape.broadcast_cols(centred_v, actions);
    tape.add(vb, adv)
}
