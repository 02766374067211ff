//! Training procedures for the three arms: teacher on enhanced clips,
//! distilled student on raw clips, and the raw-clip baseline without
//! distillation.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::adamw::{AdamWConfig, AdamWState};
use crate::data::{Dataset, VideoClip};
use crate::enhance::{enhance, EnhanceParams};
use crate::error::{bail, Error, Result};
use crate::graph::Graph;
use crate::losses::{
    batch_mean, cross_entropy, kl_to_teacher, kl_value, student_total_loss, LossWeights,
};
use crate::metrics::label_in_top_k;
use crate::model::{build_classifier, clip_tensor, forward, Model, ModelConfig};
use crate::rng::stream;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weights: LossWeights,
    /// Teacher-side enhancement; ignored by the student and baseline arms.
    pub enhance: EnhanceParams,
    pub shuffle_seed: u64,
    pub adamw: AdamWConfig,
    pub model: ModelConfig,
}

impl TrainConfig {
    /// Desk-scale defaults for a model of the given configuration.
    pub fn new(model: ModelConfig) -> Self {
        TrainConfig {
            epochs: 40,
            batch_size: 8,
            learning_rate: 1e-4,
            weights: LossWeights::default(),
            enhance: EnhanceParams::default(),
            shuffle_seed: model.seed,
            adamw: AdamWConfig::default(),
            model,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            bail!(Config, "epochs must be >= 1");
        }
        if self.batch_size == 0 {
            bail!(Config, "batch size must be >= 1");
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            bail!(Config, "learning rate must be positive, got {}", self.learning_rate);
        }
        self.weights.validate()?;
        self.enhance.validate()?;
        self.adamw.validate()?;
        self.model.validate()
    }

    fn check_dataset(&self, data: &Dataset) -> Result<()> {
        if data.is_empty() {
            bail!(Config, "training set is empty");
        }
        if data.dims() != self.model.input_dims {
            bail!(
                Shape,
                "model expects clips {:?}, dataset has {:?}",
                self.model.input_dims,
                data.dims()
            );
        }
        if data.num_classes() != self.model.num_classes {
            bail!(
                Config,
                "model has {} classes, dataset {}",
                self.model.num_classes,
                data.num_classes()
            );
        }
        Ok(())
    }
}

/// Teacher logits for every training clip, keyed by clip id.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitStore {
    pub teacher_hash: u64,
    pub entries: BTreeMap<String, Vec<f32>>,
}

impl LogitStore {
    pub fn new(teacher_hash: u64) -> Self {
        LogitStore { teacher_hash, entries: BTreeMap::new() }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&[f32]> {
        self.entries.get(id).map(|v| v.as_slice())
    }

    /// Every clip of `data` must have a finite entry with one logit per class.
    pub fn check_covers(&self, data: &Dataset) -> Result<()> {
        let k = data.num_classes();
        for id in data.ids() {
            match self.entries.get(id) {
                None => bail!(Consistency, "no teacher logits for clip {}", id),
                Some(v) if v.len() != k => bail!(
                    Consistency,
                    "teacher logits for clip {} have {} entries, dataset has {} classes",
                    id,
                    v.len(),
                    k
                ),
                Some(v) if v.iter().any(|x| !x.is_finite()) => {
                    bail!(Consistency, "teacher logits for clip {} are not finite", id)
                }
                Some(_) => {}
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub l_ar: f64,
    pub l_kd: f64,
    pub total: f64,
    /// Accuracy of the predictions made while training during this epoch.
    pub train_top1: f64,
    /// Seconds since the start of the run when the epoch finished.
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingRun {
    pub epochs: Vec<EpochRecord>,
    pub wall_seconds: f64,
    pub init_seed: u64,
    pub shuffle_seed: u64,
}

impl TrainingRun {
    pub fn last(&self) -> &EpochRecord {
        self.epochs.last().expect("runs have at least one epoch")
    }
}

/// Source of wall-clock time; the core crate has none of its own.
pub trait Clock {
    fn seconds(&self) -> f64;
}

/// Always reads zero.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoClock;

impl Clock for NoClock {
    fn seconds(&self) -> f64 {
        0.0
    }
}

/// Visit order of `n` training clips in `epoch`; depends only on
/// `(seed, epoch)`.
pub fn epoch_order(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream(seed, epoch as u64));
    order
}

#[derive(Clone, Copy)]
enum Arm<'a> {
    Teacher(&'a EnhanceParams),
    Student(&'a LogitStore),
    Baseline,
}

pub fn train_teacher(train: &Dataset, config: &TrainConfig) -> Result<(Model<f32>, TrainingRun)> {
    train_teacher_timed(train, config, &NoClock)
}

pub fn train_teacher_timed(
    train: &Dataset,
    config: &TrainConfig,
    clock: &dyn Clock,
) -> Result<(Model<f32>, TrainingRun)> {
    run(train, config, Arm::Teacher(&config.enhance), clock)
}

pub fn train_student(
    train: &Dataset,
    soft_targets: &LogitStore,
    config: &TrainConfig,
) -> Result<(Model<f32>, TrainingRun)> {
    train_student_timed(train, soft_targets, config, &NoClock)
}

pub fn train_student_timed(
    train: &Dataset,
    soft_targets: &LogitStore,
    config: &TrainConfig,
    clock: &dyn Clock,
) -> Result<(Model<f32>, TrainingRun)> {
    soft_targets.check_covers(train)?;
    run(train, config, Arm::Student(soft_targets), clock)
}

pub fn train_baseline(train: &Dataset, config: &TrainConfig) -> Result<(Model<f32>, TrainingRun)> {
    train_baseline_timed(train, config, &NoClock)
}

pub fn train_baseline_timed(
    train: &Dataset,
    config: &TrainConfig,
    clock: &dyn Clock,
) -> Result<(Model<f32>, TrainingRun)> {
    run(train, config, Arm::Baseline, clock)
}

/// Teacher logits on the enhanced version of every training clip.
pub fn cache_teacher_logits(
    teacher: &Model<f32>,
    params: &EnhanceParams,
    train: &Dataset,
) -> Result<LogitStore> {
    if teacher.config().input_dims != train.dims() {
        bail!(
            Shape,
            "teacher expects clips {:?}, dataset has {:?}",
            teacher.config().input_dims,
            train.dims()
        );
    }
    let mut store = LogitStore::new(teacher.fingerprint());
    for clip in train.clips() {
        let logits = forward(teacher, &enhance(clip, params)?)?;
        if store.entries.insert(clip.id().to_string(), logits).is_some() {
            bail!(Consistency, "clip id {} appears twice", clip.id());
        }
    }
    store.check_covers(train)?;
    Ok(store)
}

fn run(
    train: &Dataset,
    config: &TrainConfig,
    arm: Arm<'_>,
    clock: &dyn Clock,
) -> Result<(Model<f32>, TrainingRun)> {
    config.validate()?;
    config.check_dataset(train)?;
    let start = clock.seconds();
    let weights = match arm {
        Arm::Baseline => LossWeights { beta: 0.0, ..config.weights },
        _ => config.weights,
    };
    // Only the student arm needs a positive alpha or beta on its own terms;
    // the baseline degenerates to alpha * CE.
    if matches!(arm, Arm::Baseline) && !(weights.alpha > 0.0) {
        bail!(Config, "baseline training needs alpha > 0");
    }
    let temperature = weights.temperature as f32;

    let mut model = build_classifier::<f32>(&config.model)?;
    let mut opt = AdamWState::new(model.params().iter().map(|p| &p.tensor), config.adamw);
    let clips = train.clips();
    let mut records = Vec::with_capacity(config.epochs);
    let mut step = 0usize;

    for epoch in 1..=config.epochs {
        let order = epoch_order(clips.len(), config.shuffle_seed, epoch);
        let (mut sum_ar, mut sum_kd, mut sum_total, mut correct) = (0.0f64, 0.0f64, 0.0f64, 0usize);

        for batch in order.chunks(config.batch_size) {
            step += 1;
            let mut g = Graph::<f32>::new();
            let bound = model.bind(&mut g, true);
            let mut totals = Vec::with_capacity(batch.len());
            for &i in batch {
                let clip = &clips[i];
                let input: VideoClip = match arm {
                    Arm::Teacher(params) => enhance(clip, params)?,
                    _ => clip.clone(),
                };
                let x = g.constant(clip_tensor(&input));
                let logits = model.forward_graph(&mut g, &bound, x)?;
                let ce = cross_entropy(&mut g, logits, clip.label())?;
                let ce_v = g.value(ce).data()[0] as f64;
                let (total, kd_v) = match arm {
                    Arm::Teacher(_) => (ce, 0.0),
                    Arm::Baseline => (student_total_loss(&mut g, ce, ce, &weights)?, 0.0),
                    Arm::Student(store) => {
                        let teacher = store.get(clip.id()).ok_or_else(|| {
                            Error::Consistency(alloc::format!("no teacher logits for clip {}", clip.id()))
                        })?;
                        if weights.beta == 0.0 {
                            let kd = kl_value(teacher, g.value(logits).data(), temperature)? as f64;
                            (student_total_loss(&mut g, ce, ce, &weights)?, kd)
                        } else {
                            let kd = kl_to_teacher(&mut g, teacher, logits, temperature)?;
                            let kd_v = g.value(kd).data()[0] as f64;
                            (student_total_loss(&mut g, ce, kd, &weights)?, kd_v)
                        }
                    }
                };
                if label_in_top_k(g.value(logits).data(), clip.label(), 1) {
                    correct += 1;
                }
                sum_ar += ce_v;
                sum_kd += kd_v;
                sum_total += g.value(total).data()[0] as f64;
                totals.push(total);
            }
            let loss = batch_mean(&mut g, &totals)?;
            let loss_v = g.value(loss).data()[0];
            if !loss_v.is_finite() {
                return Err(Error::Training {
                    epoch,
                    step,
                    reason: alloc::format!("loss is {}", loss_v),
                });
            }
            g.backward(loss)?;
            let grads: Vec<&[f32]> = bound
                .params
                .iter()
                .map(|&v| g.grad(v).expect("parameters require grad"))
                .collect();
            if grads.iter().any(|gr| gr.iter().any(|v| !v.is_finite())) {
                return Err(Error::Training {
                    epoch,
                    step,
                    reason: "non-finite gradient".into(),
                });
            }
            let mut params: Vec<_> = model.params_mut().iter_mut().map(|p| &mut p.tensor).collect();
            opt.step(&mut params, &grads, config.learning_rate)?;
        }

        let n = clips.len() as f64;
        records.push(EpochRecord {
            epoch,
            l_ar: sum_ar / n,
            l_kd: sum_kd / n,
            total: sum_total / n,
            train_top1: correct as f64 / n,
            wall_seconds: clock.seconds() - start,
        });
    }

    Ok((
        model,
        TrainingRun {
            wall_seconds: clock.seconds() - start,
            epochs: records,
            init_seed: config.model.seed,
            shuffle_seed: config.shuffle_seed,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn epoch_order_is_a_seeded_permutation() {
        let a = epoch_order(20, 5, 1);
        let mut sorted = a.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..20).collect::<Vec<_>>());
        assert_eq!(a, epoch_order(20, 5, 1));
        assert_ne!(a, epoch_order(20, 5, 2));
    }

    #[test]
    fn rejects_zero_epochs() {
        let mut c = TrainConfig::new(ModelConfig::new(2, [1, 4, 8, 8], &[2], 0));
        c.epochs = 0;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        c.epochs = 1;
        c.batch_size = 0;
        assert!(c.validate().is_err());
        c.batch_size = 1;
        c.learning_rate = 0.0;
        assert!(c.validate().is_err());
    }
}
