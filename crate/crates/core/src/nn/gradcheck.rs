//! Central finite-difference verification of analytic gradients.

use std::collections::BTreeSet;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};

use super::param::Rng64;
use super::{ParamId, ParameterStore};
use crate::error::{Error, Result};

/// Loss value plus the on/off pattern of every non-differentiable point the
/// evaluation passed through (rectifier inputs, L1 residual signs). A
/// coordinate whose ± perturbations see different patterns straddles a kink
/// and is excluded from the comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub value: f64,
    pub kinks: Vec<bool>,
}

impl Evaluation {
    pub fn smooth(value: f64) -> Self {
        Self { value, kinks: Vec::new() }
    }
}

pub trait Objective {
    fn evaluate(&self, store: &ParameterStore) -> Result<Evaluation>;

    /// Loss with gradients accumulated into `store` (which starts zeroed).
    fn gradient(&self, store: &mut ParameterStore) -> Result<f64>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckConfig {
    pub eps: f64,
    /// Total coordinates compared (all of them if the store is smaller).
    pub samples: usize,
    /// Coordinates drawn from every tensor before the uniform remainder.
    pub per_tensor: usize,
    pub seed: u64,
    /// Relative distortion applied to analytic gradients; only for
    /// exercising the harness itself.
    pub perturb_analytic: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            eps: 1e-5,
            samples: 200,
            per_tensor: 4,
            seed: 0,
            perturb_analytic: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Coordinate {
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub worst: Option<Coordinate>,
    pub checked: usize,
    pub skipped_kinks: usize,
    /// Coordinates whose discrepancy is within floating-point noise of the
    /// difference quotient (counted as exact).
    pub at_noise_floor: usize,
}

/// `|a − n| / max(|a|, |n|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

fn pick_coordinates(store: &ParameterStore, cfg: &GradCheckConfig) -> Vec<(ParamId, usize)> {
    let mut rng = Rng64::seed_from_u64(cfg.seed);
    let total = store.num_scalars();
    let mut offsets = Vec::with_capacity(store.len());
    let mut acc = 0;
    for p in store.iter() {
        offsets.push(acc);
        acc += p.len();
    }
    let locate = |flat: usize| -> (ParamId, usize) {
        let k = offsets.partition_point(|&o| o <= flat) - 1;
        (ParamId(k), flat - offsets[k])
    };
    if total <= cfg.samples {
        return (0..total).map(locate).collect();
    }
    let mut chosen = BTreeSet::new();
    for (k, p) in store.iter().enumerate() {
        let take = cfg.per_tensor.min(p.len());
        for i in sample(&mut rng, p.len(), take) {
            chosen.insert(offsets[k] + i);
        }
    }
    while chosen.len() < cfg.samples {
        chosen.insert(rng.random_range(0..total));
    }
    chosen.into_iter().map(locate).collect()
}

/// Compares analytic gradients with `(f(θ+ε) − f(θ−ε)) / 2ε` on a sample of
/// coordinates and returns the largest relative error.
pub fn grad_check<O: Objective + ?Sized>(
    obj: &O,
    store: &mut ParameterStore,
    cfg: &GradCheckConfig,
) -> Result<GradCheckReport> {
    if !(1e-7..=1e-3).contains(&cfg.eps) {
        return Err(Error::InvalidConfig(format!("finite-difference step {} outside [1e-7, 1e-3]", cfg.eps)));
    }
    store.zero_grad();
    let f0 = obj.gradient(store)?;
    if !f0.is_finite() {
        return Err(Error::NonFinite("objective".into()));
    }
    // Roundoff in the quotient is about ε_mach·|f|/eps.
    let noise_floor = 64.0 * f64::EPSILON * f0.abs().max(1.0) / cfg.eps;

    let coords = pick_coordinates(store, cfg);
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst: None,
        checked: 0,
        skipped_kinks: 0,
        at_noise_floor: 0,
    };
    for (id, i) in coords {
        let analytic = store[id].grad.data()[i] * (1.0 + cfg.perturb_analytic);
        let orig = store[id].value.data()[i];
        store[id].value.data_mut()[i] = orig + cfg.eps;
        let plus = obj.evaluate(store)?;
        store[id].value.data_mut()[i] = orig - cfg.eps;
        let minus = obj.evaluate(store)?;
        store[id].value.data_mut()[i] = orig;
        if !plus.value.is_finite() || !minus.value.is_finite() {
            return Err(Error::NonFinite(format!("objective near {}[{i}]", store[id].name)));
        }
        if plus.kinks != minus.kinks {
            report.skipped_kinks += 1;
            continue;
        }
        let numeric = (plus.value - minus.value) / (2.0 * cfg.eps);
        report.checked += 1;
        let err = if (analytic - numeric).abs() <= noise_floor {
            report.at_noise_floor += 1;
            0.0
        } else {
            relative_error(analytic, numeric)
        };
        if err > report.max_rel_err || report.worst.is_none() {
            report.max_rel_err = report.max_rel_err.max(err);
            report.worst = Some(Coordinate {
                param: store[id].name.clone(),
                index: i,
                analytic,
                numeric,
            });
        }
    }
    store.zero_grad();
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::layers::{l1_loss, l1_loss_grad, linear, linear_backward};
    use crate::nn::{InitKind, Param, Tensor2};

    struct LinearL1 {
        x: Tensor2,
        target: Tensor2,
        w: ParamId,
        b: ParamId,
    }

    impl Objective for LinearL1 {
        fn evaluate(&self, store: &ParameterStore) -> Result<Evaluation> {
            let y = linear(&self.x, store, self.w, self.b)?;
            let kinks = y.data().iter().zip(self.target.data()).map(|(a, b)| a > b).collect();
            Ok(Evaluation {
                value: l1_loss(&y, &self.target)?,
                kinks,
            })
        }

        fn gradient(&self, store: &mut ParameterStore) -> Result<f64> {
            let y = linear(&self.x, store, self.w, self.b)?;
            let g = l1_loss_grad(&y, &self.target);
            linear_backward(store, self.w, self.b, &self.x, &g);
            l1_loss(&y, &self.target)
        }
    }

    struct Constant;

    impl Objective for Constant {
        fn evaluate(&self, _: &ParameterStore) -> Result<Evaluation> {
            Ok(Evaluation::smooth(3.0))
        }

        fn gradient(&self, _: &mut ParameterStore) -> Result<f64> {
            Ok(3.0)
        }
    }

    fn setup() -> (LinearL1, ParameterStore) {
        let mut rng = Rng64::seed_from_u64(21);
        let mut t = |r, c| Tensor2::from_vec(r, c, (0..r * c).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let x = t(6, 10);
        let target = t(6, 25);
        let mut s = ParameterStore::new();
        let w = s.add(Param::zeros("w", 10, 25, InitKind::FanIn));
        let b = s.add(Param::zeros("b", 1, 25, InitKind::Zeros));
        s.initialize(4);
        (LinearL1 { x, target, w, b }, s)
    }

    #[test]
    fn linear_l1_passes() {
        let (obj, mut s) = setup();
        let r = grad_check(&obj, &mut s, &GradCheckConfig::default()).unwrap();
        assert!(r.max_rel_err < 1e-6, "{r:?}");
        assert!(r.checked + r.skipped_kinks >= 200);
    }

    #[test]
    fn constant_has_zero_gradients() {
        let (_, mut s) = setup();
        let r = grad_check(&Constant, &mut s, &GradCheckConfig::default()).unwrap();
        assert_eq!(r.max_rel_err, 0.0);
        assert!(s.iter().all(|p| p.grad.data().iter().all(|&g| g == 0.0)));
    }

    #[test]
    fn perturbed_gradient_is_caught() {
        let (obj, mut s) = setup();
        let cfg = GradCheckConfig {
            perturb_analytic: 1e-3,
            ..Default::default()
        };
        let r = grad_check(&obj, &mut s, &cfg).unwrap();
        assert!(r.max_rel_err > 1e-5, "{r:?}");
    }

    #[test]
    fn rejects_bad_step() {
        let (obj, mut s) = setup();
        let cfg = GradCheckConfig {
            eps: 1e-2,
            ..Default::default()
        };
        assert!(grad_check(&obj, &mut s, &cfg).is_err());
    }
}
