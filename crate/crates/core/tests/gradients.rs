use futrl::agents::{a2c_actor_loss, critic_loss, dqn_loss, pg_loss};
use futrl::nn::{finite_difference_check, HeadOut, HeadSpec, NetSpec, Network, SeqBatch};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const FEATURES: usize = 3;
const STEPS: usize = 60;
const STEP: f64 = 1e-5;
const TOL: f64 = 1e-4;

fn batch(n: usize, seed: u64) -> SeqBatch {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let seqs: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..STEPS * FEATURES).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let refs: Vec<&[f64]> = seqs.iter().map(|s| s.as_slice()).collect();
    SeqBatch::from_sequences(&refs, STEPS, FEATURES).unwrap()
}

fn check(head: HeadSpec) -> f64 {
    let net = Network::new(NetSpec::new(FEATURES, head).with_hidden([8, 4]));
    let params = net.init_params(11);
    let x = batch(3, 5);
    let report = finite_difference_check(&params, STEP, |p, tape| {
        let out = net.forward(p, tape, &x)?;
        Ok(match out {
            HeadOut::Q(q) => dqn_loss(tape, q, &[0, 2, 1], &[0.3, -0.7, 1.1]),
            HeadOut::Logits(l) => pg_loss(tape, l, &[2, 0, 1], &[1.75, 1.5, -1.0]),
            HeadOut::Value(v) => critic_loss(tape, v, &[0.2, -0.4, 0.9]),
            HeadOut::Gaussian { mean, log_std } => {
                a2c_actor_loss(tape, mean, log_std, &[0.4, -1.3, 0.05], &[0.8, -0.6, 1.2], 0.01)
            }
        })
    })
    .unwrap();
    assert!(report.checked > 500, "only {} parameters checked", report.checked);
    assert!(
        report.max_relative_error < TOL,
        "{head:?}: relative error {:e} in {}",
        report.max_relative_error,
        report.worst_array
    );
    report.max_relative_error
}

#[test]
fn dueling_q_head_gradients() {
    check(HeadSpec::Q {
        actions: 3,
        dueling: true,
    });
}

#[test]
fn plain_q_head_gradients() {
    check(HeadSpec::Q {
        actions: 3,
        dueling: false,
    });
}

#[test]
fn softmax_head_gradients() {
    check(HeadSpec::Softmax { actions: 3 });
}

#[test]
fn value_head_gradients() {
    check(HeadSpec::Value);
}

#[test]
fn gaussian_head_gradients() {
    check(HeadSpec::Gaussian);
}
