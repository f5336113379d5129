use rand::seq::index::sample;

use super::params::ParamStore;
use super::tape::{Tape, Var};
use crate::error::{Error, Result};
use crate::rng;

/// Coordinates probed per parameter tensor.
pub const MAX_COORDS_PER_PARAM: usize = 200;

/// Denominator floor for the relative error, so coordinates whose true
/// gradient vanishes are judged on absolute error instead.
const REL_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_param: String,
    pub coords_checked: usize,
}

/// Compares tape gradients with central differences
/// `(f(θ+ε) - f(θ-ε)) / 2ε` on a seeded subsample of coordinates.
///
/// `forward` must be deterministic and return a scalar node.
pub fn grad_check<F>(forward: F, store: &mut ParamStore, eps: f64, seed: u64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &ParamStore) -> Result<Var>,
{
    let mut tape = Tape::new();
    let loss = forward(&mut tape, store)?;
    store.zero_grad();
    tape.backward_into(loss, store)?;

    let eval = |store: &ParamStore| -> Result<f64> {
        let mut tape = Tape::new();
        let loss = forward(&mut tape, store)?;
        Ok(tape.value(loss).data()[0])
    };

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_param: String::new(),
        coords_checked: 0,
    };
    let ids: Vec<_> = store.iter().map(|(id, _)| id).collect();
    for id in ids {
        let len = store.value(id).len();
        let mut r = rng::stream(seed, &[id.index() as u64]);
        let coords: Vec<usize> = if len <= MAX_COORDS_PER_PARAM {
            (0..len).collect()
        } else {
            sample(&mut r, len, MAX_COORDS_PER_PARAM).into_vec()
        };
        for k in coords {
            let analytic = store.grad(id).data()[k];
            let orig = store.value(id).data()[k];
            store.value_mut(id).data_mut()[k] = orig + eps;
            let plus = eval(store)?;
            store.value_mut(id).data_mut()[k] = orig - eps;
            let minus = eval(store)?;
            store.value_mut(id).data_mut()[k] = orig;
            let numeric = (plus - minus) / (2.0 * eps);
            if !numeric.is_finite() || !analytic.is_finite() {
                return Err(Error::NonFiniteGradient(store.get(id).name().to_string()));
            }
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR);
            report.coords_checked += 1;
            if rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst_param = store.get(id).name().to_string();
            }
        }
    }
    store.zero_grad();
    Ok(report)
}
