//! The three-arm experiment over several seeds, with every artifact written
//! to disk as soon as its arm finishes.
//!
//! Layout under the output directory:
//!
//! ```text
//! config.txt                 resolved configuration
//! data/                      generated data (when not loaded)
//! seed-<s>/teacher.ckpt      and teacher.csv, student.*, baseline.*
//! seed-<s>/teacher.logits
//! seed-<s>/metrics.csv       rows appended as arms are evaluated
//! report.csv, report.txt
//! ```

use std::path::{Path, PathBuf};
use std::time::Instant;

use dlkd_core::data::{bench, generate_dataset, split, Dataset};
use dlkd_core::experiment::{ArmFailure, ExperimentReport};
use dlkd_core::metrics::{evaluate, MetricsRecord, Variant};
use dlkd_core::train::{
    cache_teacher_logits, train_baseline_timed, train_student_timed, train_teacher_timed, Clock,
    TrainingRun,
};

use crate::config::{self, RunConfig};
use crate::datadir::{self, Split};
use crate::error::{CliError, Result};
use crate::formats::{save_checkpoint, save_logits};
use crate::report::{write_metrics_csv, write_report, write_run_csv};

/// Seconds since construction.
#[derive(Debug, Clone, Copy)]
pub struct WallClock(Instant);

impl WallClock {
    pub fn start() -> Self {
        WallClock(Instant::now())
    }
}

impl Default for WallClock {
    fn default() -> Self {
        Self::start()
    }
}

impl Clock for WallClock {
    fn seconds(&self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
}

/// Train and test sets described by `cfg.data`, generating them under
/// `out/data` when no directory is given.
pub fn prepare_data(cfg: &RunConfig, out: &Path) -> Result<(Dataset, Dataset, String)> {
    if let Some(dir) = &cfg.data.dir {
        let train = datadir::load_split(dir, Split::Train)?;
        let test = datadir::load_split(dir, Split::Test)?;
        return Ok((train, test, format!("data loaded from {}", dir.display())));
    }
    let d = &cfg.data;
    let dark = generate_dataset(d.classes, d.per_class, d.dims, d.seed)?.darkened(&d.darken)?;
    let (train, test) = split(&dark, d.train_fraction, d.seed)?;
    datadir::write_dataset(&dark, &out.join("data"), d.train_fraction, d.seed)?;
    let is_bench = d.classes == bench::CLASSES
        && d.per_class == bench::PER_CLASS
        && d.dims == bench::DIMS
        && d.seed == bench::SEED
        && d.darken == bench::darken_params()
        && d.train_fraction == bench::TRAIN_FRACTION;
    let name = if is_bench { bench::NAME } else { "synthetic" };
    let [c, t, h, w] = d.dims;
    let provenance = format!(
        "{name}: {} classes x {} clips, {c}x{t}x{h}x{w}, seed {:#x}, darkened gamma {} scale {} noise {}, train {} / test {}",
        d.classes,
        d.per_class,
        d.seed,
        d.darken.gamma_dark,
        d.darken.scale,
        d.darken.sigma,
        train.len(),
        test.len()
    );
    Ok((train, test, provenance))
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| CliError::io(path, e))
}

struct SeedRun<'a> {
    dir: PathBuf,
    seed: u64,
    records: Vec<MetricsRecord>,
    clock: &'a WallClock,
}

impl SeedRun<'_> {
    fn fail(&self, arm: &'static str) -> impl Fn(dlkd_core::Error) -> CliError + '_ {
        move |source| CliError::Experiment(ArmFailure { arm, seed: self.seed, source })
    }

    fn finish_arm(&mut self, arm: &str, run: &TrainingRun, metrics: MetricsRecord) -> Result<()> {
        write_run_csv(run, &self.dir.join(format!("{arm}.csv")))?;
        self.records.push(metrics);
        let refs: Vec<&MetricsRecord> = self.records.iter().collect();
        write_metrics_csv(&refs, &self.dir.join("metrics.csv"))
    }
}

/// Teacher, cached logits, student and baseline for one seed. Returns
/// baseline, teacher and student records in that order.
pub fn run_seed(
    train: &Dataset,
    test: &Dataset,
    cfg: &RunConfig,
    seed: u64,
    out: &Path,
    clock: &WallClock,
) -> Result<[MetricsRecord; 3]> {
    let dir = out.join(format!("seed-{seed}"));
    create_dir(&dir)?;
    let tc = cfg.train_config(train.num_classes(), train.dims(), seed);
    let mut s = SeedRun { dir, seed, records: Vec::new(), clock };

    let (teacher, run) = train_teacher_timed(train, &tc, s.clock).map_err(s.fail("teacher"))?;
    save_checkpoint(&teacher, &s.dir.join("teacher.ckpt"))?;
    let m = evaluate(&teacher, test, Variant::Teacher, Some(&tc.enhance), seed).map_err(s.fail("teacher"))?;
    s.finish_arm("teacher", &run, m)?;
    let logits = cache_teacher_logits(&teacher, &tc.enhance, train).map_err(s.fail("teacher"))?;
    save_logits(&logits, &s.dir.join("teacher.logits"))?;

    let (student, run) = train_student_timed(train, &logits, &tc, s.clock).map_err(s.fail("student"))?;
    save_checkpoint(&student, &s.dir.join("student.ckpt"))?;
    let m = evaluate(&student, test, Variant::Student, None, seed).map_err(s.fail("student"))?;
    s.finish_arm("student", &run, m)?;

    let (baseline, run) = train_baseline_timed(train, &tc, s.clock).map_err(s.fail("baseline"))?;
    save_checkpoint(&baseline, &s.dir.join("baseline.ckpt"))?;
    let m = evaluate(&baseline, test, Variant::Baseline, None, seed).map_err(s.fail("baseline"))?;
    s.finish_arm("baseline", &run, m)?;

    let [t, st, b]: [MetricsRecord; 3] = s.records.try_into().expect("three arms");
    Ok([b, t, st])
}

/// Runs every configured seed and writes the report. Seeds run one after
/// another; each seed's files are complete before the next starts.
pub fn run_experiment(cfg: &RunConfig, out: &Path) -> Result<ExperimentReport> {
    cfg.train.validate()?;
    create_dir(out)?;
    let resolved = out.join("config.txt");
    std::fs::write(&resolved, config::render(cfg)).map_err(|e| CliError::io(&resolved, e))?;
    let (train, test, provenance) = prepare_data(cfg, out)?;
    let clock = WallClock::start();
    let mut rows = Vec::with_capacity(cfg.seeds.len());
    for &seed in &cfg.seeds {
        rows.push(run_seed(&train, &test, cfg, seed, out, &clock)?);
    }
    let report = ExperimentReport::assemble(provenance, rows);
    write_report(&report, out)?;
    Ok(report)
}

/// [`run_experiment`] on the configuration file at `path`.
pub fn run_experiment_file(path: &Path, out: &Path) -> Result<ExperimentReport> {
    run_experiment(&config::load(path)?, out)
}
