use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{CurriculumMode, NetConfig, RangeSpec, TrainConfig};
use super::model::{backward, data_loss, RewardNet, Sample};
use super::params::{Gradients, NetworkParameters};
use crate::actions::{
    normalize_rewards_per_group, residual, reward_vector_se3, AccumulatedTransform, ActionSet,
    RewardGrouping, RewardVector,
};
use crate::agent::RewardSource;
use crate::cloud::{apply_transform, make_pair_with, CloudPair, PerturbationConfig, PointCloud};
use crate::error::{Error, Result};
use crate::rng::{self, Rng};
use crate::rotsample::{sample_transform_with, SamplingMethod, TransformSampleConfig};

const VALIDATION_SALT: u64 = 0x05ee_d0f7_a11d;

/// `params −= lr(epoch) · grads`.
pub fn sgd_step(
    params: &mut NetworkParameters,
    grads: &Gradients,
    epoch: usize,
    tcfg: &TrainConfig,
) {
    let lr = tcfg.lr(epoch);
    for (p, g) in params.values.iter_mut().zip(&grads.values) {
        *p -= lr * g;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    /// Mean batch loss including the weight-decay term.
    pub train_loss: f64,
    /// Mean data loss on the validation samples.
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
}

impl TrainHistory {
    pub fn first(&self) -> Option<&EpochRecord> {
        self.epochs.first()
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.epochs.last()
    }

    pub const CSV_HEADER: &'static str = "epoch,lr,train_loss,val_loss";
}

/// Transform range used at `epoch`; the mixed mode flips a coin per sample.
fn range_for(tcfg: &TrainConfig, epoch: usize, rng: &mut Rng) -> RangeSpec {
    match tcfg.curriculum {
        CurriculumMode::Staged if epoch < tcfg.curriculum_boundary_epoch => tcfg.small_range,
        CurriculumMode::Staged | CurriculumMode::Uniform => tcfg.full_range,
        CurriculumMode::Mixed => {
            if rng.random::<bool>() {
                tcfg.small_range
            } else {
                tcfg.full_range
            }
        }
    }
}

fn sampler(range: RangeSpec, method: SamplingMethod) -> TransformSampleConfig {
    TransformSampleConfig {
        method,
        max_angle: range.max_angle,
        max_translation: range.max_translation,
        seed: 0,
    }
}

/// Normalized oracle rewards for a state reached by `acc` on `pair`.
pub fn training_target(
    pair: &CloudPair,
    acc: &AccumulatedTransform,
    grouping: RewardGrouping,
) -> RewardVector {
    let raw = reward_vector_se3(&ActionSet::default(), &residual(&pair.gt, acc));
    normalize_rewards_per_group(&raw, grouping)
}

/// A freshly drawn (shape, transform, perturbation) example.
pub fn draw_sample(
    shapes: &[PointCloud],
    tcfg: &TrainConfig,
    epoch: usize,
    rng: &mut Rng,
) -> Result<Sample> {
    if shapes.is_empty() {
        return Err(Error::validation("no training shapes"));
    }
    let shape = &shapes[rng.random_range(0..shapes.len())];
    let range = range_for(tcfg, epoch, rng);
    let tsc = sampler(range, tcfg.sampling);
    let pcfg = PerturbationConfig {
        seed: 0,
        ..tcfg.perturbation
    };
    let pair = make_pair_with(shape, &tsc, &pcfg, rng)?;
    let acc = if tcfg.random_start {
        AccumulatedTransform::from_transform(&sample_transform_with(&tsc, rng)?)
    } else {
        AccumulatedTransform::identity()
    };
    Ok(Sample {
        source: apply_transform(&pair.source, &acc.to_transform()),
        target: pair.target.clone(),
        rewards: training_target(&pair, &acc, tcfg.reward_grouping),
    })
}

fn sample_stream(seed: u64, epoch: usize, index: usize) -> Rng {
    rng::stream(seed, ((epoch as u64) << 32) | index as u64)
}

/// Validation samples for `epoch`, identical on every call with the same seed.
pub fn validation_set(
    shapes: &[PointCloud],
    tcfg: &TrainConfig,
    epoch: usize,
) -> Result<Vec<Sample>> {
    (0..tcfg.val_samples)
        .into_par_iter()
        .map(|i| {
            draw_sample(
                shapes,
                tcfg,
                epoch,
                &mut rng::stream(tcfg.seed ^ VALIDATION_SALT, i as u64),
            )
        })
        .collect()
}

/// Mean data loss (no weight decay) over `samples`.
pub fn validate(net: &RewardNet, samples: &[Sample]) -> Result<f64> {
    if samples.is_empty() {
        return Ok(0.0);
    }
    let losses = samples
        .par_iter()
        .map(|s| Ok(data_loss(&net.forward(&s.source, &s.target)?, &s.rewards)))
        .collect::<Result<Vec<f64>>>()?;
    Ok(losses.iter().sum::<f64>() / samples.len() as f64)
}

/// Trains a freshly initialized network.
///
/// Every sample is drawn anew from its own RNG stream; nothing is stored
/// between batches. Validation uses `val_shapes` (or the training shapes when
/// empty) with a fixed seed.
pub fn train(
    shapes: &[PointCloud],
    val_shapes: &[PointCloud],
    tcfg: &TrainConfig,
    ncfg: &NetConfig,
) -> Result<(RewardNet, TrainHistory)> {
    train_with_progress(shapes, val_shapes, tcfg, ncfg, &mut |_| {})
}

pub fn train_with_progress(
    shapes: &[PointCloud],
    val_shapes: &[PointCloud],
    tcfg: &TrainConfig,
    ncfg: &NetConfig,
    progress: &mut dyn FnMut(&EpochRecord),
) -> Result<(RewardNet, TrainHistory)> {
    tcfg.validate()?;
    if shapes.is_empty() {
        return Err(Error::validation("no training shapes"));
    }
    if let Some(s) = shapes
        .iter()
        .chain(val_shapes)
        .find(|s| s.len() < tcfg.perturbation.n_points)
    {
        return Err(Error::validation(format!(
            "shape has {} points, fewer than the {} drawn per sample",
            s.len(),
            tcfg.perturbation.n_points
        )));
    }
    let val_shapes = if val_shapes.is_empty() {
        shapes
    } else {
        val_shapes
    };
    let mut net = RewardNet::new(ncfg.clone())?;
    let mut history = TrainHistory::default();
    let steps = tcfg.samples_per_epoch.div_ceil(tcfg.batch_size);
    let mut val_cache: Option<(RangeKey, Vec<Sample>)> = None;
    for epoch in 0..tcfg.total_epochs {
        let mut sum = 0.0;
        for step in 0..steps {
            let start = step * tcfg.batch_size;
            let end = (start + tcfg.batch_size).min(tcfg.samples_per_epoch);
            let batch = (start..end)
                .into_par_iter()
                .map(|i| draw_sample(shapes, tcfg, epoch, &mut sample_stream(tcfg.seed, epoch, i)))
                .collect::<Result<Vec<_>>>()?;
            let (loss, grads) = backward(&net, &batch, tcfg.weight_decay)?;
            sum += loss * batch.len() as f64;
            sgd_step(&mut net.params, &grads, epoch, tcfg);
        }
        let key = range_key(tcfg, epoch);
        if val_cache.as_ref().is_none_or(|(k, _)| *k != key) {
            val_cache = Some((key, validation_set(val_shapes, tcfg, epoch)?));
        }
        let val_loss = validate(&net, &val_cache.as_ref().expect("filled above").1)?;
        let rec = EpochRecord {
            epoch,
            lr: tcfg.lr(epoch),
            train_loss: sum / tcfg.samples_per_epoch as f64,
            val_loss,
        };
        if !rec.train_loss.is_finite() {
            return Err(Error::validation(format!(
                "training diverged at epoch {epoch}"
            )));
        }
        progress(&rec);
        history.epochs.push(rec);
    }
    Ok((net, history))
}

/// Validation samples only change when the curriculum stage does.
type RangeKey = bool;

fn range_key(tcfg: &TrainConfig, epoch: usize) -> RangeKey {
    tcfg.curriculum == CurriculumMode::Staged && epoch < tcfg.curriculum_boundary_epoch
}

/// Rewards predicted by a trained network from the observed clouds only.
#[derive(Debug, Clone)]
pub struct NetworkRewardSource {
    pub net: RewardNet,
}

impl RewardSource for NetworkRewardSource {
    fn rewards(&self, pair: &CloudPair, acc: &AccumulatedTransform) -> Result<RewardVector> {
        let moved = apply_transform(&pair.source, &acc.to_transform());
        self.net.forward(&moved, &pair.target)
    }
}
