//! Subcommands of the `dlkd` binary.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use dlkd_core::data::{bench, generate_dataset, DarkenParams};
use dlkd_core::enhance::EnhanceParams;
use dlkd_core::gradcheck_suite::run_suite;
use dlkd_core::metrics::{evaluate, Variant};
use dlkd_core::train::{cache_teacher_logits, train_baseline_timed, train_student_timed, train_teacher_timed};

use crate::config::{self, parse_dims, RunConfig};
use crate::datadir::{load_split, write_dataset, Split};
use crate::error::{CliError, Result};
use crate::experiment::{run_experiment, WallClock};
use crate::formats::{load_checkpoint, load_logits, save_checkpoint, save_logits};
use crate::report::{write_metrics_csv, write_run_csv};

/// Seeds covered by `gradcheck`.
pub const GRADCHECK_SEEDS: u64 = 10;

#[derive(Debug, Parser)]
#[command(name = "dlkd", version, about = "Dark-video action recognition with teacher/student distillation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RawVariant {
    Student,
    Baseline,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a darkened synthetic dataset with a train/test split.
    GenData {
        #[arg(long)]
        classes: usize,
        #[arg(long = "per-class")]
        per_class: usize,
        /// CxTxHxW
        #[arg(long, value_parser = parse_dims)]
        dims: [usize; 4],
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long = "gamma-dark", default_value_t = bench::GAMMA_DARK)]
        gamma_dark: f64,
        #[arg(long, default_value_t = bench::SCALE)]
        scale: f64,
        #[arg(long, default_value_t = bench::SIGMA)]
        noise: f64,
    },
    /// Train the teacher on enhanced clips.
    TrainTeacher {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        metrics: PathBuf,
    },
    /// Store the teacher's logits for every training clip.
    CacheLogits {
        #[arg(long)]
        teacher: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Enhancement settings; defaults apply without it.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Train the student on raw clips against cached teacher logits.
    TrainStudent {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        logits: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        metrics: PathBuf,
    },
    /// Train the raw-clip classifier without distillation.
    TrainBaseline {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        metrics: PathBuf,
    },
    /// Score a checkpoint on the test split.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Enhance clips first and label the row as the teacher.
        #[arg(long)]
        enhance: bool,
        #[arg(long)]
        out: PathBuf,
        /// Row label for raw-clip evaluation.
        #[arg(long, value_enum, default_value_t = RawVariant::Student, conflicts_with = "enhance")]
        variant: RawVariant,
        /// Enhancement settings for `--enhance`; defaults apply without it.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Run all three arms over every configured seed and write a report.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Finite-difference gradient checks; fails if any operation disagrees.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn enhancement(config: Option<&Path>) -> Result<EnhanceParams> {
    Ok(match config {
        Some(p) => config::load(p)?.train.enhance,
        None => EnhanceParams::default(),
    })
}

/// Training settings for a single-arm command: the first configured seed.
fn arm_config(cfg: &RunConfig, data: &dlkd_core::data::Dataset) -> dlkd_core::train::TrainConfig {
    let seed = cfg.seeds.first().copied().unwrap_or(0);
    cfg.train_config(data.num_classes(), data.dims(), seed)
}

fn report_run(arm: &str, run: &dlkd_core::train::TrainingRun) {
    let last = run.last();
    println!(
        "{arm}: {} epochs, final loss {:.4}, train top-1 {:.3}, {:.1}s",
        last.epoch, last.total, last.train_top1, run.wall_seconds
    );
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData { classes, per_class, dims, seed, out, gamma_dark, scale, noise } => {
            let darken = DarkenParams { gamma_dark, scale, sigma: noise, seed };
            darken.validate()?;
            let ds = generate_dataset(classes, per_class, dims, seed)?.darkened(&darken)?;
            write_dataset(&ds, &out, bench::TRAIN_FRACTION, seed)?;
            println!("wrote {} clips to {}", ds.len(), out.display());
        }
        Command::TrainTeacher { data, config, out, metrics } => {
            let cfg = config::load(&config)?;
            let train = load_split(&data, Split::Train)?;
            let (model, run) = train_teacher_timed(&train, &arm_config(&cfg, &train), &WallClock::start())?;
            save_checkpoint(&model, &out)?;
            write_run_csv(&run, &metrics)?;
            report_run("teacher", &run);
        }
        Command::CacheLogits { teacher, data, out, config } => {
            let params = enhancement(config.as_deref())?;
            let model = load_checkpoint(&teacher)?;
            let train = load_split(&data, Split::Train)?;
            let store = cache_teacher_logits(&model, &params, &train)?;
            save_logits(&store, &out)?;
            println!("cached logits for {} clips", store.len());
        }
        Command::TrainStudent { data, logits, config, out, metrics } => {
            let cfg = config::load(&config)?;
            let train = load_split(&data, Split::Train)?;
            let store = load_logits(&logits)?;
            let (model, run) =
                train_student_timed(&train, &store, &arm_config(&cfg, &train), &WallClock::start())?;
            save_checkpoint(&model, &out)?;
            write_run_csv(&run, &metrics)?;
            report_run("student", &run);
        }
        Command::TrainBaseline { data, config, out, metrics } => {
            let cfg = config::load(&config)?;
            let train = load_split(&data, Split::Train)?;
            let (model, run) = train_baseline_timed(&train, &arm_config(&cfg, &train), &WallClock::start())?;
            save_checkpoint(&model, &out)?;
            write_run_csv(&run, &metrics)?;
            report_run("baseline", &run);
        }
        Command::Eval { model, data, enhance, out, variant, config } => {
            let m = load_checkpoint(&model)?;
            let test = load_split(&data, Split::Test)?;
            let seed = m.config().seed;
            let record = if enhance {
                let params = enhancement(config.as_deref())?;
                evaluate(&m, &test, Variant::Teacher, Some(&params), seed)?
            } else {
                if config.is_some() {
                    return Err(CliError::Usage("--config only applies with --enhance".into()));
                }
                let v = match variant {
                    RawVariant::Student => Variant::Student,
                    RawVariant::Baseline => Variant::Baseline,
                };
                evaluate(&m, &test, v, None, seed)?
            };
            write_metrics_csv(&[&record], &out)?;
            println!("{}: top-1 {:.4} top-5 {:.4} on {} clips", record.variant.name(), record.top1, record.top5, record.test_size);
        }
        Command::Experiment { config, out } => {
            let cfg = config::load(&config)?;
            let report = run_experiment(&cfg, &out)?;
            print!("{}", crate::report::report_table(&report));
        }
        Command::Gradcheck { seed } => {
            let outcomes = run_suite(seed, GRADCHECK_SEEDS)?;
            let mut failed = Vec::new();
            let mut worst = 0.0f64;
            for o in &outcomes {
                worst = worst.max(o.max_relative_error);
                if !o.passed {
                    failed.push(format!("{} (seed {}, rel. error {:.3e})", o.name, o.seed, o.max_relative_error));
                }
            }
            println!("{} checks over seeds {}..{}, worst relative error {:.3e}", outcomes.len(), seed, seed + GRADCHECK_SEEDS, worst);
            if !failed.is_empty() {
                return Err(CliError::Gradcheck(failed.join(", ")));
            }
        }
    }
    Ok(())
}
