use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use super::model::accumulate_gradients;
use super::{Checkpoint, ModelConfig, PiNet};
use crate::error::{Error, Result};
use crate::nn::param::Rng64;
use crate::nn::{adam_step, poly_lr, TrainConfig};
use crate::metrics::{MetricComparison, MetricReport};
use crate::skeleton::{Pose, Scene};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_loss: f64,
    /// Learning rate of the epoch's last update.
    pub lr: f64,
    pub steps: u64,
    pub wall_secs: f64,
}

/// Trains from a fresh initialization; see [`train_with`].
pub fn train(dataset: &[Scene], config: &ModelConfig, tcfg: &TrainConfig) -> Result<Checkpoint> {
    train_with(dataset, config, tcfg, |_| {}).map(|(c, _)| c)
}

/// Adam with the poly schedule over `epochs` passes.
///
/// Scenes are shuffled every epoch; each scene contributes one
/// person-of-interest per visit (round-robin over its persons by epoch);
/// gradients of `batch_size` consecutive scenes are averaged into one
/// update. Normalization statistics come from the input poses of `dataset`
/// (centered first when the model centers its inputs).
pub fn train_with(
    dataset: &[Scene],
    config: &ModelConfig,
    tcfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<(Checkpoint, Vec<EpochRecord>)> {
    tcfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::Empty("training set"));
    }
    if dataset.iter().any(|s| s.gt().is_none()) {
        return Err(Error::MissingGroundTruth);
    }
    let mut net = PiNet::init(config, tcfg.seed)?;
    let stats = net.architecture().input_stats(dataset.iter().flat_map(Scene::poses))?;
    let mut rng = Rng64::seed_from_u64(tcfg.seed);
    rng.set_stream(1);

    let per_epoch = dataset.len().div_ceil(tcfg.batch_size);
    let total = per_epoch * tcfg.epochs;
    let mut step = 0u64;
    let mut records = Vec::with_capacity(tcfg.epochs);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    for epoch in 0..tcfg.epochs {
        let start = Instant::now();
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut lr = tcfg.lr_init;
        for batch in order.chunks(tcfg.batch_size) {
            let weight = 1.0 / batch.len() as f64;
            let (arch, store) = net.parts_mut();
            for &i in batch {
                let scene = &dataset[i];
                let poi = epoch % scene.len();
                let loss = accumulate_gradients(arch, store, scene, poi, &stats, weight)?;
                if !loss.is_finite() {
                    return Err(Error::NonFiniteLoss { scene: i });
                }
                loss_sum += loss;
            }
            lr = poly_lr(step as usize, total, tcfg)?;
            adam_step(store, lr, step + 1, tcfg)?;
            step += 1;
        }
        let rec = EpochRecord {
            epoch,
            mean_loss: loss_sum / dataset.len() as f64,
            lr,
            steps: step,
            wall_secs: start.elapsed().as_secs_f64(),
        };
        on_epoch(&rec);
        records.push(rec);
    }
    Ok((Checkpoint::new(net, stats, tcfg.seed, step), records))
}

/// Refined poses of every scene, in scene person order.
pub fn refine_all(ckpt: &Checkpoint, scenes: &[Scene]) -> Result<Vec<Vec<Pose>>> {
    scenes.iter().map(|s| ckpt.model.refine_scene(s, &ckpt.stats)).collect()
}

/// Metrics of the scenes' input poses and of their refinements against the
/// ground truth.
pub fn evaluate(ckpt: &Checkpoint, scenes: &[Scene]) -> Result<MetricComparison> {
    let refined = refine_all(ckpt, scenes)?;
    let mut gts = Vec::new();
    let mut inputs = Vec::new();
    for s in scenes {
        gts.extend_from_slice(s.gt().ok_or(Error::MissingGroundTruth)?);
        inputs.extend(s.poses().cloned());
    }
    let refined: Vec<Pose> = refined.into_iter().flatten().collect();
    Ok(MetricComparison::new(
        MetricReport::compute(&inputs, &gts)?,
        MetricReport::compute(&refined, &gts)?,
    ))
}

/// Every scene split into single-person scenes.
pub fn context_free(scenes: &[Scene]) -> Vec<Scene> {
    scenes.iter().flat_map(Scene::split_persons).collect()
}
