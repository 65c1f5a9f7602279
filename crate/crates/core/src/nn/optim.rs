use serde::{Deserialize, Serialize};

use super::ParameterStore;
use crate::error::{Error, Result};

/// Optimization recipe: Adam with a poly learning-rate decay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr_init: f64,
    pub lr_final: f64,
    pub power: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr_init: 1e-5,
            lr_final: 1e-8,
            power: 0.9,
            epochs: 25,
            batch_size: 4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lr_init.is_finite()
            && self.lr_final > 0.0
            && self.lr_final <= self.lr_init
            && self.power > 0.0
            && self.batch_size >= 1
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("train config {self:?}")))
        }
    }
}

/// `max(lr_final, lr_init·(1 − step/total)^power)`.
pub fn poly_lr(step: usize, total_steps: usize, cfg: &TrainConfig) -> Result<f64> {
    if total_steps == 0 || step > total_steps {
        return Err(Error::InvalidConfig(format!("poly_lr step {step} of {total_steps}")));
    }
    let frac = 1.0 - step as f64 / total_steps as f64;
    Ok((cfg.lr_init * frac.powf(cfg.power)).max(cfg.lr_final))
}

/// One bias-corrected Adam update at step `t ≥ 1`, then zeroes the gradients.
/// Nothing is modified if any gradient is non-finite.
pub fn adam_step(store: &mut ParameterStore, lr: f64, t: u64, cfg: &TrainConfig) -> Result<()> {
    if t == 0 {
        return Err(Error::InvalidConfig("adam step index starts at 1".into()));
    }
    if let Some(p) = store.iter().find(|p| !p.grad.is_finite()) {
        return Err(Error::NonFinite(format!("gradient of {}", p.name)));
    }
    let (b1, b2) = (cfg.beta1, cfg.beta2);
    let c1 = 1.0 - b1.powf(t as f64);
    let c2 = 1.0 - b2.powf(t as f64);
    for p in store.iter_mut() {
        let g = p.grad.data();
        let m = p.adam_m.data_mut();
        for (mv, gv) in m.iter_mut().zip(g) {
            *mv = b1 * *mv + (1.0 - b1) * gv;
        }
        let v = p.adam_v.data_mut();
        for (vv, gv) in v.iter_mut().zip(g) {
            *vv = b2 * *vv + (1.0 - b2) * gv * gv;
        }
        let (m, v) = (p.adam_m.data(), p.adam_v.data());
        for ((x, mv), vv) in p.value.data_mut().iter_mut().zip(m).zip(v) {
            let mhat = mv / c1;
            let vhat = vv / c2;
            *x -= lr * mhat / (vhat.sqrt() + cfg.eps);
        }
    }
    store.zero_grad();
    Ok(())
}
