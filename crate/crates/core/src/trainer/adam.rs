use serde::{Deserialize, Serialize};

use crate::diffcore::ParamStore;
use crate::error::{Error, Result};

/// Adam coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One bias-corrected Adam update from the gradients held in `store`.
///
/// Gradients are checked before anything moves; a non-finite entry aborts
/// the step with the parameter's name and leaves the store untouched.
pub fn adam_step(store: &mut ParamStore, lr: f64, cfg: AdamConfig) -> Result<()> {
    if let Some((_, p)) = store.iter().find(|(_, p)| !p.grad().is_finite()) {
        return Err(Error::NonFiniteGradient(p.name().to_string()));
    }
    store.step += 1;
    let t = store.step as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for p in store.params_mut() {
        let g = p.grad.data();
        let m = p.first_moment.data_mut();
        for (m, g) in m.iter_mut().zip(g) {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
        }
        let v = p.second_moment.data_mut();
        for (v, g) in v.iter_mut().zip(g) {
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
        }
        let (m, v) = (p.first_moment.data(), p.second_moment.data());
        for ((w, m), v) in p.value.data_mut().iter_mut().zip(m).zip(v) {
            *w -= lr * (m / c1) / ((v / c2).sqrt() + cfg.eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::Tensor;

    fn store(g: f64) -> ParamStore {
        let mut s = ParamStore::new();
        let id = s.insert("w", Tensor::matrix(1, 2, vec![1.0, -2.0]).unwrap()).unwrap();
        s.accumulate_grad(id, &Tensor::matrix(1, 2, vec![g, -g]).unwrap());
        s
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut s = store(0.0);
        adam_step(&mut s, 0.1, AdamConfig::default()).unwrap();
        assert_eq!(s.iter().next().unwrap().1.value().data(), &[1.0, -2.0]);
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let mut s = store(0.37);
        adam_step(&mut s, 0.01, AdamConfig::default()).unwrap();
        let w = s.iter().next().unwrap().1.value().data().to_vec();
        // m_hat = g, v_hat = g^2
        let step = 0.01 * 0.37 / (0.37 + 1e-8);
        assert!((w[0] - (1.0 - step)).abs() < 1e-15);
        assert!((w[1] - (-2.0 + step)).abs() < 1e-15);
        assert_eq!(s.step(), 1);
    }

    #[test]
    fn non_finite_gradient_names_the_parameter() {
        let mut s = store(f64::NAN);
        let before = s.snapshot();
        match adam_step(&mut s, 0.1, AdamConfig::default()) {
            Err(Error::NonFiniteGradient(name)) => assert_eq!(name, "w"),
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(s.iter().next().unwrap().1.value(), before.iter().next().unwrap().1.value());
        assert_eq!(s.step(), 0);
    }
}
