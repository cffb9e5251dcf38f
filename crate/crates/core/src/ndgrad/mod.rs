//! Dense tensors, a reverse-mode tape, Adam and a finite-difference checker.

mod check;
mod optim;
mod tape;
mod tensor;

use thiserror::Error;

pub use check::grad_check;
pub use optim::{adam_step, AdamState};
pub use tape::{Tape, Var, BCE_EPS};
pub use tensor::{ParamStore, Tensor, CHECKPOINT_VERSION};

#[derive(Debug, Error)]
pub enum NdError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("backward needs a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("backward on an empty tape")]
    EmptyTape,
    #[error("parameter `{0}` has no gradient")]
    MissingGrad(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("{0}: {1}")]
    Io(String, #[source] std::io::Error),
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn rand_tensor(shape: &[usize], r: &mut ChaCha8Rng) -> Tensor {
        Tensor::randn(shape, 1.0, r)
    }

    /// Pushes values at least `gap` away from zero so relu/maxpool stay smooth.
    fn nudge(mut t: Tensor, gap: f64) -> Tensor {
        for v in &mut t.values {
            if v.abs() < gap {
                *v = if *v < 0.0 { -gap } else { gap };
            }
        }
        t
    }

    /// A fixed projection turning any tensor into a scalar with nonzero
    /// gradient everywhere.
    fn weighted_sum(tape: &mut Tape, y: Var, seed: u64) -> Result<Var, NdError> {
        let n = tape.value(y).len();
        let shape = tape.shape(y).to_vec();
        let mut r = rng(seed);
        let w = tape.constant(shape, (0..n).map(|_| r.random_range(-1.0..1.0)).collect())?;
        let p = tape.mul(y, w)?;
        Ok(tape.sum(p))
    }

    #[test]
    fn softmax_uniform_and_sums() {
        let mut t = Tape::new();
        let x = t.constant(vec![3], vec![0.0; 3]).unwrap();
        let s = t.softmax(x).unwrap();
        for v in t.value(s) {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        let mut r = rng(1);
        for _ in 0..50 {
            let len = r.random_range(1..20);
            let vals: Vec<f64> = (0..len).map(|_| r.random_range(-30.0..30.0)).collect();
            let shift = r.random_range(-100.0..100.0);
            let a = t.constant(vec![len], vals.clone()).unwrap();
            let b = t.constant(vec![len], vals.iter().map(|v| v + shift).collect()).unwrap();
            let (sa, sb) = (t.softmax(a).unwrap(), t.softmax(b).unwrap());
            assert!((t.value(sa).iter().sum::<f64>() - 1.0).abs() < 1e-9);
            for (x, y) in t.value(sa).iter().zip(t.value(sb)) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn maxpool_and_conv_shapes() {
        let mut t = Tape::new();
        let x = t.constant(vec![1, 4], vec![1.0, 3.0, 2.0, 5.0]).unwrap();
        let p = t.maxpool1d(x, 2).unwrap();
        assert_eq!(t.value(p), &[3.0, 5.0]);

        let x = t.constant(vec![1, 1, 5], vec![1.0; 5]).unwrap();
        let k = t.constant(vec![1, 1, 3], vec![1.0; 3]).unwrap();
        let b = t.constant(vec![1], vec![0.0]).unwrap();
        let y = t.conv1d(x, k, b, 1).unwrap();
        assert_eq!(t.shape(y), &[1, 1, 5]);
        assert_eq!(t.value(y), &[2.0, 3.0, 3.0, 3.0, 2.0]);
    }

    #[test]
    fn shape_errors_name_both_shapes() {
        let mut t = Tape::new();
        let x = t.constant(vec![2, 3], vec![0.0; 6]).unwrap();
        let w = t.constant(vec![4, 5], vec![0.0; 20]).unwrap();
        let b = t.constant(vec![4], vec![0.0; 4]).unwrap();
        let msg = t.dense(x, w, b).unwrap_err().to_string();
        assert!(msg.contains("[2, 3]") && msg.contains("[4, 5]"), "{msg}");
    }

    #[test]
    fn backward_trivial_cases() {
        // sigmoid(w·x) with x = 0 leaves w without gradient
        let mut t = Tape::new();
        let x = t.constant(vec![1, 2], vec![0.0, 0.0]).unwrap();
        let w = t.leaf(&Tensor::new(vec![1, 2], vec![0.7, -0.3]).unwrap().with_grad());
        let b = t.constant(vec![1], vec![0.0]).unwrap();
        let z = t.dense(x, w, b).unwrap();
        let s = t.sigmoid(z);
        let l = t.sum(s);
        t.backward(l).unwrap();
        assert_eq!(t.grad(w).unwrap(), &[0.0, 0.0]);

        let mut t = Tape::new();
        let a = t.leaf(&Tensor::new(vec![2], vec![1.0, 2.0]).unwrap().with_grad());
        let b = t.leaf(&Tensor::new(vec![3], vec![3.0, 4.0, 5.0]).unwrap().with_grad());
        let c = t.concat(&[a, b]).unwrap();
        let l = t.sum(c);
        t.backward(l).unwrap();
        assert_eq!(t.grad(a).unwrap(), &[1.0, 1.0]);
        assert_eq!(t.grad(b).unwrap(), &[1.0, 1.0, 1.0]);

        let err = t.backward(c).unwrap_err();
        assert!(matches!(err, NdError::NonScalarLoss(_)));
    }

    #[test]
    fn fan_out_accumulates() {
        let mut t = Tape::new();
        let a = t.leaf(&Tensor::new(vec![2], vec![1.5, -2.0]).unwrap().with_grad());
        let sq = t.mul(a, a).unwrap();
        let l = t.sum(sq);
        t.backward(l).unwrap();
        assert_eq!(t.grad(a).unwrap(), &[3.0, -4.0]);
    }

    #[test]
    fn grad_check_sum_of_squares() {
        let mut r = rng(2);
        let p = rand_tensor(&[7], &mut r);
        let err = grad_check(
            |t, x| {
                let s = t.mul(x, x)?;
                Ok(t.sum(s))
            },
            &p,
            1e-4,
        )
        .unwrap();
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn grad_check_elementwise_primitives() {
        let mut r = rng(3);
        for trial in 0..20 {
            let shape = [r.random_range(1..4), r.random_range(1..6)];
            let p = nudge(rand_tensor(&shape, &mut r), 1e-2);
            let seed = 100 + trial;
            let cases: [(&str, f64, Box<dyn Fn(&mut Tape, Var) -> Result<Var, NdError>>); 5] = [
                ("relu", 1e-4, Box::new(move |t, x| {
                    let y = t.relu(x);
                    weighted_sum(t, y, seed)
                })),
                ("sigmoid", 1e-6, Box::new(move |t, x| {
                    let y = t.sigmoid(x);
                    weighted_sum(t, y, seed)
                })),
                ("tanh", 1e-6, Box::new(move |t, x| {
                    let y = t.tanh(x);
                    weighted_sum(t, y, seed)
                })),
                ("softmax", 1e-6, Box::new(move |t, x| {
                    let y = t.softmax(x)?;
                    weighted_sum(t, y, seed)
                })),
                ("transpose", 1e-6, Box::new(move |t, x| {
                    let s = t.shape(x).to_vec();
                    let y = t.reshape(x, &[1, s[0], s[1]])?;
                    let y = t.transpose_last2(y)?;
                    weighted_sum(t, y, seed)
                })),
            ];
            for (name, tol, f) in &cases {
                let err = grad_check(f, &p, 1e-5).unwrap();
                assert!(err < *tol, "{name} trial {trial}: {err}");
            }
        }
    }

    #[test]
    fn grad_check_structured_primitives() {
        let mut r = rng(4);
        for trial in 0..20 {
            let seed = 200 + trial;
            let (n, din, dout) = (r.random_range(1..4), r.random_range(1..6), r.random_range(1..5));
            let w = rand_tensor(&[dout, din], &mut r);
            let b = rand_tensor(&[dout], &mut r);
            let x = rand_tensor(&[n, din], &mut r);
            let (wc, bc) = (w.clone(), b.clone());
            let err = grad_check(
                |t, xv| {
                    let (wv, bv) = (t.leaf(&wc), t.leaf(&bc));
                    let y = t.dense(xv, wv, bv)?;
                    weighted_sum(t, y, seed)
                },
                &x,
                1e-5,
            )
            .unwrap();
            assert!(err < 1e-6, "dense/x {trial}: {err}");
            let xc = x.clone();
            let err = grad_check(
                |t, wv| {
                    let (xv, bv) = (t.leaf(&xc), t.leaf(&bc));
                    let y = t.dense(xv, wv, bv)?;
                    weighted_sum(t, y, seed)
                },
                &w,
                1e-5,
            )
            .unwrap();
            assert!(err < 1e-6, "dense/w {trial}: {err}");

            let (cin, cout, len, kw) = (r.random_range(1..3), r.random_range(1..3), r.random_range(3..8), [1, 3][trial as usize % 2]);
            let stride = 1 + trial as usize % 2;
            let k = rand_tensor(&[cout, cin, kw], &mut r);
            let kb = rand_tensor(&[cout], &mut r);
            let cx = rand_tensor(&[2, cin, len], &mut r);
            let (kc, kbc) = (k.clone(), kb.clone());
            let err = grad_check(
                |t, xv| {
                    let (kv, bv) = (t.leaf(&kc), t.leaf(&kbc));
                    let y = t.conv1d(xv, kv, bv, stride)?;
                    weighted_sum(t, y, seed)
                },
                &cx,
                1e-5,
            )
            .unwrap();
            assert!(err < 1e-6, "conv/x {trial}: {err}");
            let cxc = cx.clone();
            let err = grad_check(
                |t, kv| {
                    let (xv, bv) = (t.leaf(&cxc), t.leaf(&kbc));
                    let y = t.conv1d(xv, kv, bv, stride)?;
                    weighted_sum(t, y, seed)
                },
                &k,
                1e-5,
            )
            .unwrap();
            assert!(err < 1e-6, "conv/k {trial}: {err}");
            let err = grad_check(
                |t, bv| {
                    let (xv, kv) = (t.leaf(&cxc), t.leaf(&kc));
                    let y = t.conv1d(xv, kv, bv, stride)?;
                    weighted_sum(t, y, seed)
                },
                &kb,
                1e-5,
            )
            .unwrap();
            assert!(err < 1e-6, "conv/b {trial}: {err}");

            let mx = rand_tensor(&[2, 3, r.random_range(2..9)], &mut r);
            let window = r.random_range(1..3);
            let err = grad_check(
                |t, xv| {
                    let y = t.maxpool1d(xv, window)?;
                    weighted_sum(t, y, seed)
                },
                &mx,
                1e-6,
            )
            .unwrap();
            assert!(err < 1e-4, "maxpool {trial}: {err}");

            let (bn, bk, bm) = (r.random_range(1..4), r.random_range(1..4), r.random_range(1..4));
            let a = rand_tensor(&[2, bn, bk], &mut r);
            let bb = rand_tensor(&[2, bk, bm], &mut r);
            let bbc = bb.clone();
            let err = grad_check(
                |t, av| {
                    let bv = t.leaf(&bbc);
                    let y = t.bmm(av, bv)?;
                    weighted_sum(t, y, seed)
                },
                &a,
                1e-5,
            )
            .unwrap();
            assert!(err < 1e-6, "bmm/a {trial}: {err}");
            let ac = a.clone();
            let err = grad_check(
                |t, bv| {
                    let av = t.leaf(&ac);
                    let y = t.bmm(av, bv)?;
                    weighted_sum(t, y, seed)
                },
                &bb,
                1e-5,
            )
            .unwrap();
            assert!(err < 1e-6, "bmm/b {trial}: {err}");

            let other = rand_tensor(&[n, 2], &mut r);
            let err = grad_check(
                |t, xv| {
                    let ov = t.leaf(&other);
                    let y = t.concat(&[ov, xv, ov])?;
                    weighted_sum(t, y, seed)
                },
                &x,
                1e-5,
            )
            .unwrap();
            assert!(err < 1e-6, "concat {trial}: {err}");

            let mut dr = rng(seed);
            let mask_seed: u64 = dr.random();
            let err = grad_check(
                |t, xv| {
                    let mut local = rng(mask_seed);
                    let y = t.dropout(xv, 0.3, true, &mut local)?;
                    weighted_sum(t, y, seed)
                },
                &x,
                1e-5,
            )
            .unwrap();
            assert!(err < 1e-6, "dropout {trial}: {err}");

            let labels: Vec<f64> = (0..n * din).map(|i| (i % 2) as f64).collect();
            let err = grad_check(
                |t, xv| {
                    let p = t.sigmoid(xv);
                    t.bce_loss(p, &labels)
                },
                &x,
                1e-5,
            )
            .unwrap();
            assert!(err < 1e-6, "bce {trial}: {err}");
            let target: Vec<f64> = (0..n * din).map(|i| i as f64 * 0.1).collect();
            let err = grad_check(|t, xv| t.mse_loss(xv, &target), &x, 1e-5).unwrap();
            assert!(err < 1e-6, "mse {trial}: {err}");
        }
    }

    #[test]
    fn grad_check_three_layer_net() {
        let mut r = rng(5);
        let layout: [&[usize]; 6] = [&[5, 6], &[5], &[4, 5], &[4], &[1, 4], &[1]];
        let n_params: usize = layout.iter().map(|s| s.iter().product::<usize>()).sum();
        assert_eq!(n_params, 64);
        for trial in 0..20 {
            let x = rand_tensor(&[8, 6], &mut r);
            let point = rand_tensor(&[n_params], &mut r);
            let labels: Vec<f64> = (0..8).map(|i| (i % 2) as f64).collect();
            let err = grad_check(
                |t, theta| {
                    let mut off = 0;
                    let mut vars = Vec::new();
                    for shape in layout {
                        let n: usize = shape.iter().product();
                        vars.push(slice(t, theta, off, n, shape)?);
                        off += n;
                    }
                    let xv = t.leaf(&x);
                    let h = t.dense(xv, vars[0], vars[1])?;
                    let h = t.tanh(h);
                    let h = t.dense(h, vars[2], vars[3])?;
                    let h = t.sigmoid(h);
                    let z = t.dense(h, vars[4], vars[5])?;
                    let z = t.reshape(z, &[8])?;
                    let p = t.sigmoid(z);
                    t.bce_loss(p, &labels)
                },
                &point,
                1e-4,
            )
            .unwrap();
            assert!(err < 1e-4, "trial {trial}: {err}");
        }
    }

    /// Differentiable slice of a flat vector via a constant selection matmul.
    fn slice(t: &mut Tape, flat: Var, off: usize, n: usize, shape: &[usize]) -> Result<Var, NdError> {
        let total = t.value(flat).len();
        let mut sel = vec![0.0; n * total];
        for i in 0..n {
            sel[i * total + off + i] = 1.0;
        }
        let sel = t.constant(vec![n, total], sel)?;
        let row = t.reshape(flat, &[1, total])?;
        let zero = t.constant(vec![n], vec![0.0; n])?;
        let picked = t.dense(row, sel, zero)?;
        t.reshape(picked, shape)
    }

    #[test]
    fn dropout_properties() {
        let mut t = Tape::new();
        let mut r = rng(6);
        let x = t.leaf(&rand_tensor(&[1000], &mut r));
        assert_eq!(t.dropout(x, 0.0, true, &mut r).unwrap(), x);
        assert_eq!(t.dropout(x, 0.7, false, &mut r).unwrap(), x);
        assert!(t.dropout(x, 1.0, true, &mut r).is_err());

        let ones = t.constant(vec![200_000], vec![1.0; 200_000]).unwrap();
        let rate = 0.2;
        let d = t.dropout(ones, rate, true, &mut r).unwrap();
        let vals = t.value(d);
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        // each entry is 0 or 1/(1-rate): variance rate / (1 - rate)
        let sd = (rate / (1.0 - rate) / vals.len() as f64).sqrt();
        assert!((mean - 1.0).abs() < 3.0 * sd, "mean {mean}");
        assert!(vals.iter().all(|&v| v == 0.0 || (v - 1.25).abs() < 1e-12));

        let masks: Vec<Vec<f64>> = (0..2)
            .map(|_| {
                let mut local = rng(99);
                let d = t.dropout(ones, 0.5, true, &mut local).unwrap();
                t.value(d).to_vec()
            })
            .collect();
        assert_eq!(masks[0], masks[1]);
    }

    #[test]
    fn bce_nonnegative_and_zero_only_at_labels() {
        let mut t = Tape::new();
        let mut r = rng(7);
        for _ in 0..200 {
            let p: f64 = r.random_range(0.0..1.0);
            let y = if r.random::<bool>() { 1.0 } else { 0.0 };
            let pv = t.constant(vec![1], vec![p]).unwrap();
            let l = t.bce_loss(pv, &[y]).unwrap();
            assert!(t.value(l)[0] > 0.0);
        }
        let pv = t.constant(vec![2], vec![1.0, 0.0]).unwrap();
        let l = t.bce_loss(pv, &[1.0, 0.0]).unwrap();
        // clamped at 1 - 1e-7: loss is -ln(1 - 1e-7), tiny but finite
        assert!(t.value(l)[0] >= 0.0 && t.value(l)[0] < 1.1e-7);
    }

    #[test]
    fn adam_behaviour() {
        let mut store = ParamStore::new();
        store.insert("w", Tensor::new(vec![2], vec![1.0, -1.0]).unwrap().with_grad());
        let mut state = AdamState::new(0.001);
        assert!(matches!(adam_step(&mut store, &mut state), Err(NdError::MissingGrad(_))));

        store.get_mut("w").unwrap().accumulate_grad(&[0.0, 0.0]).unwrap();
        adam_step(&mut store, &mut state).unwrap();
        assert_eq!(store.get("w").unwrap().values, vec![1.0, -1.0]);
        assert_eq!(state.step, 1);
        assert!(store.get("w").unwrap().grad.is_none());

        let mut store = ParamStore::new();
        store.insert("w", Tensor::new(vec![1], vec![1.0]).unwrap().with_grad());
        let mut state = AdamState::new(0.001);
        store.get_mut("w").unwrap().accumulate_grad(&[2.0]).unwrap();
        adam_step(&mut store, &mut state).unwrap();
        assert!(store.get("w").unwrap().values[0] < 1.0);
    }

    #[test]
    fn adam_converges_on_quadratic() {
        // f(w) = (w0 - 3)^2 + 10 (w1 + 2)^2
        let mut store = ParamStore::new();
        store.insert("w", Tensor::new(vec![2], vec![0.0, 0.0]).unwrap().with_grad());
        let mut state = AdamState::new(0.05);
        let target = [3.0, -2.0];
        let scale = [1.0, 10.0];
        for _ in 0..2000 {
            let mut tape = Tape::new();
            let w = tape.leaf(store.get("w").unwrap());
            let tv = tape.constant(vec![2], target.to_vec()).unwrap();
            let neg = tape.constant(vec![2], vec![-1.0, -1.0]).unwrap();
            let s = tape.constant(vec![2], scale.to_vec()).unwrap();
            let nt = tape.mul(tv, neg).unwrap();
            let diff = tape.add(w, nt).unwrap();
            let sq = tape.mul(diff, diff).unwrap();
            let weighted = tape.mul(sq, s).unwrap();
            let loss = tape.sum(weighted);
            tape.backward(loss).unwrap();
            tape.accumulate_into(w, store.get_mut("w").unwrap()).unwrap();
            adam_step(&mut store, &mut state).unwrap();
        }
        let w = &store.get("w").unwrap().values;
        assert!((w[0] - 3.0).abs() < 1e-3 && (w[1] + 2.0).abs() < 1e-3, "{w:?}");
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let mut r = rng(8);
        let mut store = ParamStore::new();
        store.insert("layer.w", Tensor::glorot(&[3, 4], 4, 3, &mut r));
        store.insert("layer.b", rand_tensor(&[3], &mut r).with_grad());
        store.insert("tiny", Tensor::new(vec![2], vec![1e-300, -std::f64::consts::PI / 7.0]).unwrap());
        let back = ParamStore::from_json(&store.to_json()).unwrap();
        for (name, t) in store.iter() {
            let b = back.get(name).unwrap();
            assert_eq!(b.shape, t.shape);
            assert_eq!(
                b.values.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                t.values.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
            );
        }
        let bad = store.to_json().replace("\"version\":1", "\"version\":99");
        assert!(matches!(ParamStore::from_json(&bad), Err(NdError::Checkpoint(_))));
    }
}
