use std::sync::Arc;

use approx::assert_abs_diff_eq;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::manifold::radial::RadialMap;

fn random(rows: usize, cols: usize, scale: f64, rng: &mut ChaCha8Rng) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.random_range(-scale..scale)).collect();
    Tensor::matrix(rows, cols, data).unwrap()
}

/// Central-difference check of `build` with respect to every input
/// coordinate. The scalar objective is `sum(out * probe)` with a fixed
/// random probe so every output entry matters.
fn check_op(inputs: Vec<Tensor>, tol: f64, build: impl Fn(&mut Tape, &[Var]) -> Var) {
    let objective = |tape: &mut Tape, vars: &[Var], probe: Option<&Tensor>| -> (Var, Tensor) {
        let out = build(tape, vars);
        let shape = tape.value(out).shape().to_vec();
        let probe = probe.cloned().unwrap_or_else(|| {
            let mut r = ChaCha8Rng::seed_from_u64(7);
            Tensor::new(shape.clone(), (0..shape.iter().product()).map(|_| r.random_range(-1.0..1.0)).collect()).unwrap()
        });
        let p = tape.constant(probe.clone());
        let prod = if shape.last() == Some(&1) && shape[0] > 0 {
            tape.mul_rows(out, p).unwrap()
        } else {
            // elementwise product through a diagonal-free route
            let cols = shape[1];
            let mut acc = None;
            for j in 0..cols {
                let mut e = Tensor::zeros(&[cols, 1]);
                e.data_mut()[j] = 1.0;
                let ej = tape.constant(e);
                let col = tape.matmul(out, ej).unwrap();
                let pc = Tensor::new(vec![shape[0], 1], (0..shape[0]).map(|i| probe.get(i, j)).collect()).unwrap();
                let pcv = tape.constant(pc);
                let term = tape.mul_rows(col, pcv).unwrap();
                acc = Some(match acc {
                    None => term,
                    Some(a) => tape.add(a, term).unwrap(),
                });
            }
            acc.unwrap()
        };
        (tape.sum(prod), probe)
    };
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let (loss, probe) = objective(&mut tape, &vars, None);
    let grads = tape.backward(loss).unwrap();
    let eps = 1e-6;
    for (k, input) in inputs.iter().enumerate() {
        let analytic = grads.get(vars[k]).cloned().unwrap_or_else(|| Tensor::zeros(input.shape()));
        for c in 0..input.len() {
            let eval = |delta: f64| {
                let mut t = Tape::new();
                let vs: Vec<Var> = inputs
                    .iter()
                    .enumerate()
                    .map(|(j, x)| {
                        let mut x = x.clone();
                        if j == k {
                            x.data_mut()[c] += delta;
                        }
                        t.leaf(x)
                    })
                    .collect();
                let (l, _) = objective(&mut t, &vs, Some(&probe));
                t.value(l).data()[0]
            };
            let numeric = (eval(eps) - eval(-eps)) / (2.0 * eps);
            let a = analytic.data()[c];
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
            assert!(err <= tol, "input {k} coord {c}: analytic {a} numeric {numeric}");
        }
    }
}

#[test]
fn relu_forward() {
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::matrix(1, 3, vec![-1.0, 0.0, 2.0]).unwrap());
    let y = tape.relu(x);
    assert_eq!(tape.value(y).data(), &[0.0, 0.0, 2.0]);
}

#[test]
fn uniform_segment_softmax() {
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::matrix(3, 1, vec![0.7, 0.7, 0.7]).unwrap());
    let seg = Arc::new(Segments::new(vec![0, 0, 0], 1).unwrap());
    let y = tape.segment_softmax(x, &seg).unwrap();
    for v in tape.value(y).data() {
        assert_abs_diff_eq!(*v, 1.0 / 3.0, epsilon = 1e-15);
    }
}

#[test]
fn segment_softmax_rows_sum_to_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let ids: Vec<usize> = (0..40).map(|_| rng.random_range(0..6)).collect();
    let seg = Arc::new(Segments::new(ids.clone(), 6).unwrap());
    let mut tape = Tape::new();
    let x = tape.constant(random(40, 2, 30.0, &mut rng));
    let y = tape.segment_softmax(x, &seg).unwrap();
    let mut sums = vec![0.0; 12];
    for (i, &s) in ids.iter().enumerate() {
        for j in 0..2 {
            sums[s * 2 + j] += tape.value(y).get(i, j);
        }
    }
    for (s, size) in seg.sizes().iter().enumerate() {
        if *size > 0 {
            assert!((sums[2 * s] - 1.0).abs() <= 1e-9);
            assert!((sums[2 * s + 1] - 1.0).abs() <= 1e-9);
        }
    }
}

#[test]
fn matmul_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let a = random(3, 4, 1.0, &mut rng);
    let b = random(4, 2, 1.0, &mut rng);
    // oracle: dL/dA = G B^T with L = sum(G * (A B)); probe G drawn independently
    let g = random(3, 2, 1.0, &mut rng);
    let loss = |a: &Tensor| -> f64 {
        let c = a.matmul(&b).unwrap();
        c.data().iter().zip(g.data()).map(|(x, y)| x * y).sum()
    };
    let mut tape = Tape::new();
    let av = tape.leaf(a.clone());
    let bv = tape.constant(b.clone());
    let cv = tape.matmul(av, bv).unwrap();
    let e0 = tape.constant(Tensor::matrix(2, 1, vec![1.0, 0.0]).unwrap());
    let e1 = tape.constant(Tensor::matrix(2, 1, vec![0.0, 1.0]).unwrap());
    let c0 = tape.matmul(cv, e0).unwrap();
    let c1 = tape.matmul(cv, e1).unwrap();
    let g0 = tape.constant(Tensor::matrix(3, 1, (0..3).map(|i| g.get(i, 0)).collect()).unwrap());
    let g1 = tape.constant(Tensor::matrix(3, 1, (0..3).map(|i| g.get(i, 1)).collect()).unwrap());
    let t0 = tape.mul_rows(c0, g0).unwrap();
    let t1 = tape.mul_rows(c1, g1).unwrap();
    let s = tape.add(t0, t1).unwrap();
    let l = tape.sum(s);
    let grads = tape.backward(l).unwrap();
    let ga = grads.get(av).unwrap();
    let eps = 1e-5;
    let mut worst: f64 = 0.0;
    for k in 0..a.len() {
        let mut p = a.clone();
        p.data_mut()[k] += eps;
        let mut m = a.clone();
        m.data_mut()[k] -= eps;
        let fd = (loss(&p) - loss(&m)) / (2.0 * eps);
        worst = worst.max((fd - ga.data()[k]).abs() / fd.abs().max(1e-12));
    }
    assert!(worst <= 1e-6, "max relative error {worst}");
}

#[test]
fn primitive_adjoints() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let x = random(5, 3, 1.0, &mut rng);
    let w = random(3, 4, 1.0, &mut rng);
    check_op(vec![x.clone(), w.clone()], 1e-6, |t, v| t.matmul(v[0], v[1]).unwrap());
    check_op(vec![x.clone(), x.map(|v| v * 0.3)], 1e-6, |t, v| t.add(v[0], v[1]).unwrap());
    check_op(vec![x.clone()], 1e-6, |t, v| t.scale(v[0], -2.5));
    check_op(vec![x.clone()], 1e-6, |t, v| t.relu(v[0]));
    check_op(vec![x.clone()], 1e-6, |t, v| t.leaky_relu(v[0], 0.2));
    check_op(vec![x.clone()], 1e-6, |t, v| t.tanh(v[0]));
    check_op(vec![x.map(|v| v * 0.9)], 1e-6, |t, v| t.atanh_clamped(v[0]));
    check_op(vec![x.clone()], 1e-6, |t, v| t.row_norm(v[0]));
    let seg = Arc::new(Segments::new(vec![0, 1, 0, 2, 1], 4).unwrap());
    check_op(vec![x.clone()], 1e-6, |t, v| t.segment_softmax(v[0], &seg).unwrap());
    check_op(vec![x.clone()], 1e-6, |t, v| t.segment_sum(v[0], &seg).unwrap());
    check_op(vec![x.clone()], 1e-6, |t, v| t.segment_mean(v[0], &seg).unwrap());
    let idx = Arc::new(vec![4, 0, 0, 2]);
    check_op(vec![x.clone()], 1e-6, |t, v| t.gather_rows(v[0], &idx).unwrap());
    check_op(vec![x.clone(), random(5, 2, 1.0, &mut rng)], 1e-6, |t, v| {
        t.concat_cols(&[v[0], v[1]]).unwrap()
    });
    check_op(vec![x.clone(), random(5, 1, 1.0, &mut rng)], 1e-6, |t, v| {
        t.mul_rows(v[0], v[1]).unwrap()
    });
    let labels = Arc::new(vec![0, 2, 1, 1, 0]);
    check_op(vec![x.clone()], 1e-6, |t, v| t.cross_entropy(v[0], &labels).unwrap());
}

#[test]
fn radial_and_distance_adjoints() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = random(4, 3, 0.5, &mut rng);
    let y = random(4, 3, 0.5, &mut rng);
    for c in [0.1, 1.0, 1.5] {
        for map in [
            RadialMap::Exp0 { c },
            RadialMap::Log0 { c },
            RadialMap::PoincareToKlein { c },
            RadialMap::KleinToPoincare { c },
        ] {
            check_op(vec![x.clone()], 1e-5, |t, v| t.radial(v[0], map));
        }
        check_op(vec![x.clone(), y.clone()], 1e-5, |t, v| {
            t.poincare_distance(v[0], v[1], c).unwrap()
        });
    }
    // outside the projection threshold the map rescales
    check_op(vec![x.map(|v| v * 6.0)], 1e-5, |t, v| t.radial(v[0], RadialMap::Project { c: 1.0 }));
}

#[test]
fn linear_sum_gradient() {
    // L = sum(x W) with x fixed => dL/dW[i][j] = x[i]
    let mut store = ParamStore::new();
    let w = store
        .insert("w", Tensor::matrix(3, 2, vec![0.1, -0.2, 0.3, 0.4, -0.5, 0.6]).unwrap())
        .unwrap();
    let unused = store.insert("unused", Tensor::full(&[2, 2], 1.0)).unwrap();
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::matrix(1, 3, vec![1.0, 2.0, 3.0]).unwrap());
    let wv = tape.param(&store, w);
    let _ = tape.param(&store, unused);
    let y = tape.matmul(x, wv).unwrap();
    let l = tape.sum(y);
    tape.backward_into(l, &mut store).unwrap();
    assert_eq!(store.grad(w).data(), &[1.0, 1.0, 2.0, 2.0, 3.0, 3.0]);
    assert_eq!(store.grad(unused).data(), &[0.0; 4]);
}

#[test]
fn backward_rejects_non_scalar() {
    let mut tape = Tape::new();
    let x = tape.leaf(Tensor::zeros(&[2, 2]));
    assert!(matches!(tape.backward(x), Err(crate::Error::InvalidInput(_))));
}

#[test]
fn shape_errors() {
    let mut tape = Tape::new();
    let a = tape.leaf(Tensor::zeros(&[2, 3]));
    let b = tape.leaf(Tensor::zeros(&[2, 3]));
    assert!(tape.matmul(a, b).is_err());
    let c = tape.leaf(Tensor::zeros(&[3, 2]));
    assert!(tape.add(a, c).is_err());
    let seg = Arc::new(Segments::new(vec![0], 1).unwrap());
    assert!(tape.segment_sum(a, &seg).is_err());
    assert!(Segments::new(vec![3], 2).is_err());
}

#[test]
fn dropout_eval_is_identity_and_train_is_unbiased() {
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::full(&[1, 50], 1.0));
    let y = tape.dropout(x, 0.1, None).unwrap();
    assert_eq!(x, y);

    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut acc = vec![0.0; 50];
    let trials = 10_000;
    for _ in 0..trials {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::full(&[1, 50], 1.0));
        let y = tape.dropout(x, 0.1, Some(&mut rng)).unwrap();
        for (a, v) in acc.iter_mut().zip(tape.value(y).data()) {
            *a += v;
        }
    }
    for a in acc {
        assert!((a / trials as f64 - 1.0).abs() <= 0.01);
    }
}

#[test]
fn forward_and_backward_are_deterministic() {
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut store = ParamStore::new();
        let w = store.insert_glorot("w", 4, 3, &mut rng).unwrap();
        let mut tape = Tape::new();
        let x = tape.constant(random(6, 4, 1.0, &mut rng));
        let wv = tape.param(&store, w);
        let h = tape.matmul(x, wv).unwrap();
        let h = tape.tanh(h);
        let h = tape.dropout(h, 0.1, Some(&mut rng)).unwrap();
        let l = tape.sum(h);
        tape.backward_into(l, &mut store).unwrap();
        (tape.value(l).clone(), store.grad(w).clone())
    };
    assert_eq!(run(), run());
}

#[test]
fn grad_check_linear_model_is_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut store = ParamStore::new();
    store.insert_glorot("w", 4, 2, &mut rng).unwrap();
    let x = random(5, 4, 1.0, &mut rng);
    let report = grad_check(
        |tape, store| {
            let xv = tape.constant(x.clone());
            let w = tape.param(store, store.id("w").unwrap());
            let y = tape.matmul(xv, w)?;
            Ok(tape.sum(y))
        },
        &mut store,
        1e-5,
        0,
    )
    .unwrap();
    assert_eq!(report.coords_checked, 8);
    assert!(report.max_rel_error <= 1e-9, "{report:?}");
}
