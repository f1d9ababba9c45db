use super::params::ParamStore;
use super::tape::{Tape, Var};
use crate::error::Result;

/// Outcome of [`finite_difference_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    /// Largest per-array relative error `‖g - ĝ‖ / max(‖g‖, ‖ĝ‖)`.
    pub max_relative_error: f64,
    /// Array where the largest error occurred.
    pub worst_array: String,
    /// Number of scalar parameters perturbed.
    pub checked: usize,
}

/// Compare the tape gradient of a scalar loss against central differences
/// with step `h`, perturbing every parameter in `store`. `loss` must build
/// the loss on the given tape from the given parameters.
pub fn finite_difference_check(
    store: &ParamStore,
    h: f64,
    loss: impl Fn(&ParamStore, &mut Tape) -> Result<Var>,
) -> Result<GradCheck> {
    let mut tape = Tape::new();
    let l = loss(store, &mut tape)?;
    let grads = tape.backward(l, store)?;
    let eval = |p: &ParamStore| -> Result<f64> {
        let mut t = Tape::new();
        let v = loss(p, &mut t)?;
        Ok(t.scalar(v))
    };

    let mut probe = store.clone();
    let mut report = GradCheck {
        max_relative_error: 0.0,
        worst_array: String::new(),
        checked: 0,
    };
    for (id, arr) in store.arrays().iter().enumerate() {
        let id = super::params::ParamId(id);
        let (mut diff2, mut an2, mut fd2) = (0.0, 0.0, 0.0);
        for k in 0..arr.values.len() {
            let orig = arr.values[k];
            probe.values_mut(id)[k] = orig + h;
            let up = eval(&probe)?;
            probe.values_mut(id)[k] = orig - h;
            let down = eval(&probe)?;
            probe.values_mut(id)[k] = orig;
            let fd = (up - down) / (2.0 * h);
            let an = grads.values(id)[k];
            diff2 += (an - fd) * (an - fd);
            an2 += an * an;
            fd2 += fd * fd;
            report.checked += 1;
        }
        let scale = an2.max(fd2).sqrt();
        let rel = if scale > 0.0 { diff2.sqrt() / scale } else { 0.0 };
        if rel > report.max_relative_error || report.worst_array.is_empty() {
            report.max_relative_error = rel;
            report.worst_array = arr.name.clone();
        }
    }
    Ok(report)
}
