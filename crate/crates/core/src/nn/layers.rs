//! Forward and backward rules of the stateless building blocks.

use super::tensor::{gemm, Tensor2};
use super::{ParamId, ParameterStore};
use crate::error::{Error, Result};

/// Row-wise `x·W + b` with `W: D×K`, `b: 1×K`.
pub fn linear(x: &Tensor2, store: &ParameterStore, w: ParamId, b: ParamId) -> Result<Tensor2> {
    let (wv, bv) = (store.value(w), store.value(b));
    if x.cols() != wv.rows() || bv.shape() != (1, wv.cols()) {
        return Err(Error::shape(
            "linear",
            format!("x {:?}, W {:?}, b {:?}", x.shape(), wv.shape(), bv.shape()),
        ));
    }
    let mut out = Tensor2::zeros(x.rows(), wv.cols());
    for i in 0..x.rows() {
        out.row_mut(i).copy_from_slice(bv.data());
    }
    gemm(1.0, x.view(), wv.view(), 1.0, out.view_mut());
    Ok(out)
}

/// Accumulates `∂L/∂W = xᵀg` and `∂L/∂b = Σ_rows g`; returns `∂L/∂x = g·Wᵀ`.
pub fn linear_backward(store: &mut ParameterStore, w: ParamId, b: ParamId, x: &Tensor2, g: &Tensor2) -> Tensor2 {
    let mut dx = Tensor2::zeros(x.rows(), x.cols());
    gemm(1.0, g.view(), store.value(w).view().t(), 0.0, dx.view_mut());
    gemm(1.0, x.view().t(), g.view(), 1.0, store.grad_mut(w).view_mut());
    let db = store.grad_mut(b);
    for i in 0..g.rows() {
        for (d, v) in db.data_mut().iter_mut().zip(g.row(i)) {
            *d += v;
        }
    }
    dx
}

pub fn relu(x: &Tensor2) -> Tensor2 {
    let mut y = x.clone();
    y.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
    y
}

/// Gradient through a rectifier given its pre-activation.
pub fn relu_backward(pre: &Tensor2, g: &Tensor2) -> Tensor2 {
    let mut d = g.clone();
    for (dv, p) in d.data_mut().iter_mut().zip(pre.data()) {
        if *p <= 0.0 {
            *dv = 0.0;
        }
    }
    d
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(s: &Tensor2) -> Tensor2 {
    let mut y = s.clone();
    for i in 0..y.rows() {
        let row = y.row_mut(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    y
}

/// `∂L/∂s = y ⊙ (dy − ⟨dy, y⟩)` per row.
pub fn softmax_rows_backward(y: &Tensor2, dy: &Tensor2) -> Tensor2 {
    let mut ds = Tensor2::zeros(y.rows(), y.cols());
    for i in 0..y.rows() {
        let (yr, dyr) = (y.row(i), dy.row(i));
        let inner: f64 = yr.iter().zip(dyr).map(|(a, b)| a * b).sum();
        for (d, (yv, dv)) in ds.row_mut(i).iter_mut().zip(yr.iter().zip(dyr)) {
            *d = yv * (dv - inner);
        }
    }
    ds
}

/// Mean absolute difference.
pub fn l1_loss(pred: &Tensor2, target: &Tensor2) -> Result<f64> {
    if pred.shape() != target.shape() || pred.is_empty() {
        return Err(Error::shape("l1_loss", format!("{:?} vs {:?}", pred.shape(), target.shape())));
    }
    let sum: f64 = pred.data().iter().zip(target.data()).map(|(p, t)| (p - t).abs()).sum();
    Ok(sum / pred.len() as f64)
}

/// `∂L1/∂pred`, with the subgradient at zero taken as 0.
pub fn l1_loss_grad(pred: &Tensor2, target: &Tensor2) -> Tensor2 {
    let n = pred.len() as f64;
    let mut g = Tensor2::zeros(pred.rows(), pred.cols());
    for (gv, (p, t)) in g.data_mut().iter_mut().zip(pred.data().iter().zip(target.data())) {
        let d = p - t;
        *gv = if d > 0.0 {
            1.0 / n
        } else if d < 0.0 {
            -1.0 / n
        } else {
            0.0
        };
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{InitKind, Param};
    use rand::{Rng, SeedableRng};

    fn rand_t(r: usize, c: usize, rng: &mut impl Rng) -> Tensor2 {
        Tensor2::from_vec(r, c, (0..r * c).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    fn linear_store(w: Tensor2, b: Tensor2) -> (ParameterStore, ParamId, ParamId) {
        let mut s = ParameterStore::new();
        let wi = s.add(Param::new("w", w, InitKind::FanIn));
        let bi = s.add(Param::new("b", b, InitKind::Zeros));
        (s, wi, bi)
    }

    #[test]
    fn linear_identity_and_zero_input() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let x = rand_t(3, 4, &mut rng);
        let (s, w, b) = linear_store(Tensor2::identity(4), Tensor2::zeros(1, 4));
        assert_eq!(linear(&x, &s, w, b).unwrap(), x);

        let bias = rand_t(1, 2, &mut rng);
        let (s, w, b) = linear_store(rand_t(4, 2, &mut rng), bias.clone());
        let y = linear(&Tensor2::zeros(3, 4), &s, w, b).unwrap();
        for i in 0..3 {
            assert_eq!(y.row(i), bias.data());
        }
    }

    #[test]
    fn linear_matches_triple_loop() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let x = rand_t(3, 4, &mut rng);
        let wt = rand_t(4, 5, &mut rng);
        let bt = rand_t(1, 5, &mut rng);
        let (s, w, b) = linear_store(wt.clone(), bt.clone());
        let y = linear(&x, &s, w, b).unwrap();
        for i in 0..3 {
            for k in 0..5 {
                let mut acc = bt.get(0, k);
                for d in 0..4 {
                    acc += x.get(i, d) * wt.get(d, k);
                }
                assert!((y.get(i, k) - acc).abs() < 1e-12);
            }
        }
        assert!(linear(&rand_t(3, 3, &mut rng), &s, w, b).is_err());
    }

    #[test]
    fn linear_backward_matches_formulas() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let x = rand_t(3, 4, &mut rng);
        let g = rand_t(3, 2, &mut rng);
        let wt = rand_t(4, 2, &mut rng);
        let (mut s, w, b) = linear_store(wt.clone(), Tensor2::zeros(1, 2));
        let dx = linear_backward(&mut s, w, b, &x, &g);
        for d in 0..4 {
            for k in 0..2 {
                let want: f64 = (0..3).map(|i| x.get(i, d) * g.get(i, k)).sum();
                assert!((s[w].grad.get(d, k) - want).abs() < 1e-12);
            }
        }
        for k in 0..2 {
            let want: f64 = (0..3).map(|i| g.get(i, k)).sum();
            assert!((s[b].grad.get(0, k) - want).abs() < 1e-12);
        }
        for i in 0..3 {
            for d in 0..4 {
                let want: f64 = (0..2).map(|k| g.get(i, k) * wt.get(d, k)).sum();
                assert!((dx.get(i, d) - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn softmax_examples() {
        let y = softmax_rows(&Tensor2::from_rows(&[vec![2.5; 4]]).unwrap());
        assert!(y.data().iter().all(|&v| (v - 0.25).abs() < 1e-15));
        let y = softmax_rows(&Tensor2::from_rows(&[vec![0.0, 3f64.ln()]]).unwrap());
        assert!((y.get(0, 0) - 0.25).abs() < 1e-15 && (y.get(0, 1) - 0.75).abs() < 1e-15);
        // large scores stay finite
        let y = softmax_rows(&Tensor2::from_rows(&[vec![1000.0, 999.0]]).unwrap());
        assert!(y.is_finite());
    }

    #[test]
    fn softmax_matches_direct_formula() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let s = rand_t(4, 4, &mut rng);
        let y = softmax_rows(&s);
        for i in 0..4 {
            let denom: f64 = (0..4).map(|j| s.get(i, j).exp()).sum();
            let mut total = 0.0;
            for j in 0..4 {
                assert!((y.get(i, j) - s.get(i, j).exp() / denom).abs() < 1e-12);
                assert!(y.get(i, j) > 0.0 && y.get(i, j) < 1.0);
                total += y.get(i, j);
            }
            assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn l1_examples() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let a = rand_t(2, 3, &mut rng);
        assert_eq!(l1_loss(&a, &a).unwrap(), 0.0);
        let mut b = a.clone();
        b.data_mut().iter_mut().for_each(|v| *v += 1.0);
        assert!((l1_loss(&b, &a).unwrap() - 1.0).abs() < 1e-15);
        let c = rand_t(2, 3, &mut rng);
        let mut want = 0.0;
        for i in 0..2 {
            for j in 0..3 {
                want += (a.get(i, j) - c.get(i, j)).abs();
            }
        }
        assert!((l1_loss(&a, &c).unwrap() - want / 6.0).abs() < 1e-12);
        assert!(l1_loss(&a, &Tensor2::zeros(3, 2)).is_err());
        assert!(l1_loss_grad(&a, &a).data().iter().all(|&v| v == 0.0));
    }
}
