//! Top-k accuracy and per-model evaluation.
//!
//! Ties are broken towards the lower class index: class `j` outranks the
//! true class `y` when `l_j > l_y`, or `l_j == l_y` and `j < y`.

use alloc::vec::Vec;

use crate::data::Dataset;
use crate::enhance::{enhance, EnhanceParams};
use crate::error::{bail, Result};
use crate::model::{forward, Model};
use crate::real::Real;

/// Whether `label` is among the `k` highest-ranked classes of `logits`.
pub fn label_in_top_k<R: Real>(logits: &[R], label: usize, k: usize) -> bool {
    let target = logits[label];
    let ahead = logits
        .iter()
        .enumerate()
        .filter(|&(j, &l)| l > target || (l == target && j < label))
        .count();
    ahead < k
}

pub fn top_k_accuracy<R: Real>(logits: &[Vec<R>], labels: &[usize], k: usize) -> Result<f64> {
    if logits.is_empty() || logits.len() != labels.len() {
        bail!(
            Input,
            "need a non-empty batch with one label per row, got {} rows and {} labels",
            logits.len(),
            labels.len()
        );
    }
    let classes = logits[0].len();
    if k == 0 || k > classes {
        bail!(Parameter, "k must lie in [1, {}], got {}", classes, k);
    }
    let mut correct = 0usize;
    for (row, &y) in logits.iter().zip(labels) {
        if row.len() != classes {
            bail!(Shape, "ragged logits batch: {} vs {} classes", row.len(), classes);
        }
        if y >= classes {
            bail!(Input, "label {} out of range for {} classes", y, classes);
        }
        if label_in_top_k(row, y, k) {
            correct += 1;
        }
    }
    Ok(correct as f64 / logits.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Variant {
    Baseline,
    Teacher,
    Student,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Baseline, Variant::Teacher, Variant::Student];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Baseline => "baseline",
            Variant::Teacher => "teacher",
            Variant::Student => "student",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub variant: Variant,
    pub top1: f64,
    /// Top-5, or top-K when there are fewer than five classes.
    pub top5: f64,
    pub test_size: usize,
    pub seed: u64,
}

/// Scores `model` on `test`. The teacher variant enhances each clip first;
/// the other variants see raw clips and never touch enhancement.
pub fn evaluate(
    model: &Model<f32>,
    test: &Dataset,
    variant: Variant,
    enhancement: Option<&EnhanceParams>,
    seed: u64,
) -> Result<MetricsRecord> {
    if model.config().input_dims != test.dims() {
        bail!(
            Shape,
            "model expects clips {:?}, test set has {:?}",
            model.config().input_dims,
            test.dims()
        );
    }
    if model.config().num_classes != test.num_classes() {
        bail!(
            Shape,
            "model has {} classes, test set {}",
            model.config().num_classes,
            test.num_classes()
        );
    }
    let enhancement = match (variant, enhancement) {
        (Variant::Teacher, Some(p)) => Some(p),
        (Variant::Teacher, None) => bail!(Usage, "teacher evaluation needs enhancement parameters"),
        (_, Some(_)) => bail!(Usage, "only the teacher is evaluated on enhanced clips"),
        (_, None) => None,
    };
    let mut logits = Vec::with_capacity(test.len());
    let mut labels = Vec::with_capacity(test.len());
    for clip in test.clips() {
        let l = match enhancement {
            Some(p) => forward(model, &enhance(clip, p)?)?,
            None => forward(model, clip)?,
        };
        logits.push(l);
        labels.push(clip.label());
    }
    let k5 = test.num_classes().min(5);
    Ok(MetricsRecord {
        variant,
        top1: top_k_accuracy(&logits, &labels, 1)?,
        top5: top_k_accuracy(&logits, &labels, k5)?,
        test_size: test.len(),
        seed,
    })
}
