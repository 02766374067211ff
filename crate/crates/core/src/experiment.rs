//! Results of the three-arm comparison: baseline (raw clips, no
//! distillation), teacher (enhanced clips) and distilled student (raw
//! clips), repeated over seeds.

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::Error;
use crate::metrics::{MetricsRecord, Variant};

/// An arm that failed, with the seed it ran under.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{arm} arm failed for seed {seed}: {source}")]
pub struct ArmFailure {
    pub arm: &'static str,
    pub seed: u64,
    pub source: Error,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VariantSummary {
    pub variant: Variant,
    pub mean_top1: f64,
    pub std_top1: f64,
    pub mean_top5: f64,
    pub std_top5: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub provenance: String,
    /// Baseline, teacher, student per seed.
    pub seeds: Vec<[MetricsRecord; 3]>,
    pub summaries: [VariantSummary; 3],
    /// Mean top-1 of the student minus that of the baseline.
    pub student_minus_baseline: f64,
    /// Mean top-1 of the student minus that of the teacher.
    pub student_minus_teacher: f64,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, num_traits::Float::sqrt(var))
}

impl ExperimentReport {
    /// Summaries use the sample standard deviation (zero for one seed).
    pub fn assemble(provenance: impl Into<String>, seeds: Vec<[MetricsRecord; 3]>) -> Self {
        assert!(!seeds.is_empty(), "report needs at least one seed");
        let summaries = Variant::ALL.map(|variant| {
            let (top1, top5): (Vec<f64>, Vec<f64>) = seeds
                .iter()
                .flat_map(|row| row.iter())
                .filter(|r| r.variant == variant)
                .map(|r| (r.top1, r.top5))
                .unzip();
            let (mean_top1, std_top1) = mean_std(&top1);
            let (mean_top5, std_top5) = mean_std(&top5);
            VariantSummary { variant, mean_top1, std_top1, mean_top5, std_top5 }
        });
        ExperimentReport {
            provenance: provenance.into(),
            student_minus_baseline: summaries[2].mean_top1 - summaries[0].mean_top1,
            student_minus_teacher: summaries[2].mean_top1 - summaries[1].mean_top1,
            seeds,
            summaries,
        }
    }

    pub fn summary(&self, variant: Variant) -> &VariantSummary {
        self.summaries.iter().find(|s| s.variant == variant).expect("all variants present")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn rec(variant: Variant, top1: f64, seed: u64) -> MetricsRecord {
        MetricsRecord { variant, top1, top5: 1.0, test_size: 10, seed }
    }

    #[test]
    fn deltas_are_differences_of_means() {
        let seeds = vec![
            [rec(Variant::Baseline, 0.5, 0), rec(Variant::Teacher, 0.7, 0), rec(Variant::Student, 0.6, 0)],
            [rec(Variant::Baseline, 0.3, 1), rec(Variant::Teacher, 0.6, 1), rec(Variant::Student, 0.5, 1)],
        ];
        let r = ExperimentReport::assemble("t", seeds);
        assert!((r.summary(Variant::Baseline).mean_top1 - 0.4).abs() < 1e-12);
        assert!((r.student_minus_baseline - 0.15).abs() < 1e-12);
        assert!((r.student_minus_teacher + 0.1).abs() < 1e-12);
        let sd = r.summary(Variant::Baseline).std_top1;
        assert!((sd - num_traits::Float::sqrt(0.02f64)).abs() < 1e-12);
    }
}
