//! CSV and text outputs.

use std::fmt::Write as _;
use std::path::Path;

use dlkd_core::experiment::ExperimentReport;
use dlkd_core::metrics::{MetricsRecord, Variant};
use dlkd_core::train::TrainingRun;

use crate::error::{CliError, Result};

fn write(path: &Path, text: String) -> Result<()> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn run_csv(run: &TrainingRun) -> String {
    let mut s = String::from("epoch,l_ar,l_kd,total,train_top1,wall_seconds\n");
    for e in &run.epochs {
        let _ = writeln!(s, "{},{},{},{},{},{:.3}", e.epoch, e.l_ar, e.l_kd, e.total, e.train_top1, e.wall_seconds);
    }
    s
}

pub fn write_run_csv(run: &TrainingRun, path: &Path) -> Result<()> {
    write(path, run_csv(run))
}

pub fn metrics_csv(records: &[&MetricsRecord]) -> String {
    let mut s = String::from("variant,top1,top5,test_size,seed\n");
    for r in records {
        let _ = writeln!(s, "{},{},{},{},{}", r.variant.name(), r.top1, r.top5, r.test_size, r.seed);
    }
    s
}

pub fn write_metrics_csv(records: &[&MetricsRecord], path: &Path) -> Result<()> {
    write(path, metrics_csv(records))
}

/// Per-seed rows, then one mean and one std row per variant, then the deltas.
pub fn report_csv(report: &ExperimentReport) -> String {
    let mut s = String::from("row,variant,top1,top5,test_size,seed\n");
    for triple in &report.seeds {
        for r in triple {
            let _ = writeln!(s, "seed,{},{},{},{},{}", r.variant.name(), r.top1, r.top5, r.test_size, r.seed);
        }
    }
    for v in &report.summaries {
        let _ = writeln!(s, "mean,{},{},{},,", v.variant.name(), v.mean_top1, v.mean_top5);
        let _ = writeln!(s, "std,{},{},{},,", v.variant.name(), v.std_top1, v.std_top5);
    }
    let _ = writeln!(s, "delta,student-baseline,{},,,", report.student_minus_baseline);
    let _ = writeln!(s, "delta,student-teacher,{},,,", report.student_minus_teacher);
    s
}

fn row_label(v: Variant) -> &'static str {
    match v {
        Variant::Baseline => "Baseline (dark input, no distillation)",
        Variant::Teacher => "Teacher (enhanced input)",
        Variant::Student => "Distilled student (dark input)",
    }
}

pub fn report_table(report: &ExperimentReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{}", report.provenance);
    let _ = writeln!(s, "seeds: {}", report.seeds.iter().map(|t| t[0].seed.to_string()).collect::<Vec<_>>().join(", "));
    let _ = writeln!(s);
    let _ = writeln!(s, "{:<40} {:>17} {:>17}", "Model", "Top-1 (%)", "Top-5 (%)");
    let _ = writeln!(s, "{}", "-".repeat(76));
    for v in &report.summaries {
        let _ = writeln!(
            s,
            "{:<40} {:>8.2} ± {:<6.2} {:>8.2} ± {:<6.2}",
            row_label(v.variant),
            100.0 * v.mean_top1,
            100.0 * v.std_top1,
            100.0 * v.mean_top5,
            100.0 * v.std_top5
        );
    }
    let _ = writeln!(s, "{}", "-".repeat(76));
    let _ = writeln!(s, "student - baseline (top-1): {:+.2}", 100.0 * report.student_minus_baseline);
    let _ = writeln!(s, "student - teacher  (top-1): {:+.2}", 100.0 * report.student_minus_teacher);
    s
}

pub fn write_report(report: &ExperimentReport, dir: &Path) -> Result<()> {
    write(&dir.join("report.csv"), report_csv(report))?;
    write(&dir.join("report.txt"), report_table(report))
}
