//! Line-oriented `key = value` run configuration.
//!
//! Blank lines and `#` comments are ignored. Unknown and repeated keys are
//! errors. Missing keys keep the defaults of the benchmark setup.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use dlkd_core::data::{bench, DarkenParams};
use dlkd_core::enhance::EnhanceMethod;
use dlkd_core::model::ModelConfig;
use dlkd_core::train::TrainConfig;

use crate::error::{CliError, Result};

/// Where experiment data comes from: an existing directory, or generation
/// parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct DataSpec {
    pub dir: Option<PathBuf>,
    pub classes: usize,
    pub per_class: usize,
    pub dims: [usize; 4],
    pub seed: u64,
    pub darken: DarkenParams,
    pub train_fraction: f64,
}

impl Default for DataSpec {
    fn default() -> Self {
        DataSpec {
            dir: None,
            classes: bench::CLASSES,
            per_class: bench::PER_CLASS,
            dims: bench::DIMS,
            seed: bench::SEED,
            darken: bench::darken_params(),
            train_fraction: bench::TRAIN_FRACTION,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Model dims and class count are replaced by the data's at run time.
    pub train: TrainConfig,
    pub seeds: Vec<u64>,
    pub data: DataSpec,
}

pub const DEFAULT_WIDTHS: [usize; 2] = [16, 32];
pub const DEFAULT_SEEDS: [u64; 3] = [0, 1, 2];

impl Default for RunConfig {
    fn default() -> Self {
        let data = DataSpec::default();
        let model = ModelConfig::new(data.classes, data.dims, &DEFAULT_WIDTHS, 0);
        RunConfig { train: TrainConfig::new(model), seeds: DEFAULT_SEEDS.to_vec(), data }
    }
}

impl RunConfig {
    /// Training configuration for `seed` on data with `classes` classes of
    /// shape `dims`.
    pub fn train_config(&self, classes: usize, dims: [usize; 4], seed: u64) -> TrainConfig {
        let mut t = self.train.clone();
        t.model.num_classes = classes;
        t.model.input_dims = dims;
        t.model.seed = seed;
        t.shuffle_seed = seed;
        t
    }
}

pub const KEYS: &[&str] = &[
    "epochs",
    "batch_size",
    "lr",
    "alpha",
    "beta",
    "temperature",
    "beta1",
    "beta2",
    "eps",
    "weight_decay",
    "enhance",
    "enhance_gamma",
    "enhance_alpha",
    "enhance_iterations",
    "widths",
    "spatial_kernel",
    "temporal_kernel",
    "seed",
    "seeds",
    "classes",
    "per_class",
    "dims",
    "data_seed",
    "gamma_dark",
    "scale",
    "noise",
    "train_fraction",
    "data",
];

pub fn load(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse(&text, path)
}

pub fn parse(text: &str, path: &Path) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    let mut seen = BTreeSet::new();
    let base = path.parent().unwrap_or(Path::new("."));
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let err = |message: String| CliError::Config { path: path.to_path_buf(), line: line_no, message };
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .map(|(k, v)| (k.trim(), v.trim()))
            .ok_or_else(|| err(format!("expected `key = value`, got `{line}`")))?;
        if !KEYS.contains(&key) {
            return Err(err(format!("unknown key `{key}`")));
        }
        if !seen.insert(key.to_string()) {
            return Err(err(format!("key `{key}` given twice")));
        }
        apply(&mut cfg, key, value, base).map_err(err)?;
    }
    validate(&cfg).map_err(|message| CliError::Config { path: path.to_path_buf(), line: 0, message })?;
    Ok(cfg)
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> std::result::Result<T, String> {
    value.parse().map_err(|_| format!("`{key}` has invalid value `{value}`"))
}

fn list<T: std::str::FromStr>(key: &str, value: &str) -> std::result::Result<Vec<T>, String> {
    value
        .split(',')
        .map(|s| num(key, s.trim()))
        .collect::<std::result::Result<Vec<T>, String>>()
        .and_then(|v| if v.is_empty() { Err(format!("`{key}` is empty")) } else { Ok(v) })
}

/// Parses `CxTxHxW`.
pub fn parse_dims(value: &str) -> std::result::Result<[usize; 4], String> {
    let parts: Vec<&str> = value.split('x').collect();
    if parts.len() != 4 {
        return Err(format!("dims must look like CxTxHxW, got `{value}`"));
    }
    let mut dims = [0; 4];
    for (d, p) in dims.iter_mut().zip(parts) {
        *d = num("dims", p.trim())?;
    }
    Ok(dims)
}

fn apply(cfg: &mut RunConfig, key: &str, value: &str, base: &Path) -> std::result::Result<(), String> {
    let t = &mut cfg.train;
    let d = &mut cfg.data;
    match key {
        "epochs" => t.epochs = num(key, value)?,
        "batch_size" => t.batch_size = num(key, value)?,
        "lr" => t.learning_rate = num(key, value)?,
        "alpha" => t.weights.alpha = num(key, value)?,
        "beta" => t.weights.beta = num(key, value)?,
        "temperature" => t.weights.temperature = num(key, value)?,
        "beta1" => t.adamw.beta1 = num(key, value)?,
        "beta2" => t.adamw.beta2 = num(key, value)?,
        "eps" => t.adamw.eps = num(key, value)?,
        "weight_decay" => t.adamw.weight_decay = num(key, value)?,
        "enhance" => {
            t.enhance.method = EnhanceMethod::parse(value)
                .ok_or_else(|| format!("`enhance` must be gamma, curve or identity, got `{value}`"))?
        }
        "enhance_gamma" => t.enhance.gamma = num(key, value)?,
        "enhance_alpha" => t.enhance.alpha = num(key, value)?,
        "enhance_iterations" => t.enhance.iterations = num(key, value)?,
        "widths" => t.model.widths = list(key, value)?,
        "spatial_kernel" => t.model.spatial_kernel = num(key, value)?,
        "temporal_kernel" => t.model.temporal_kernel = num(key, value)?,
        "seed" => cfg.seeds = vec![num(key, value)?],
        "seeds" => cfg.seeds = list(key, value)?,
        "classes" => d.classes = num(key, value)?,
        "per_class" => d.per_class = num(key, value)?,
        "dims" => d.dims = parse_dims(value)?,
        "data_seed" => {
            d.seed = num(key, value)?;
            d.darken.seed = d.seed;
        }
        "gamma_dark" => d.darken.gamma_dark = num(key, value)?,
        "scale" => d.darken.scale = num(key, value)?,
        "noise" => d.darken.sigma = num(key, value)?,
        "train_fraction" => d.train_fraction = num(key, value)?,
        "data" => d.dir = Some(base.join(value)),
        _ => unreachable!("key list and match arms agree"),
    }
    Ok(())
}

fn validate(cfg: &RunConfig) -> std::result::Result<(), String> {
    if cfg.seeds.is_empty() {
        return Err("at least one seed is required".into());
    }
    let mut probe = cfg.train.clone();
    probe.model.num_classes = cfg.data.classes;
    probe.model.input_dims = cfg.data.dims;
    probe.validate().map_err(|e| e.to_string())?;
    cfg.data.darken.validate().map_err(|e| e.to_string())?;
    if !(cfg.data.train_fraction > 0.0 && cfg.data.train_fraction < 1.0) {
        return Err(format!("train_fraction must lie in (0, 1), got {}", cfg.data.train_fraction));
    }
    Ok(())
}

/// Renders `cfg` in the file syntax; parsing the result gives `cfg` back.
pub fn render(cfg: &RunConfig) -> String {
    let t = &cfg.train;
    let d = &cfg.data;
    let join = |v: &[String]| v.join(",");
    let mut out = String::new();
    let mut kv = |k: &str, v: String| out.push_str(&format!("{k} = {v}\n"));
    kv("epochs", t.epochs.to_string());
    kv("batch_size", t.batch_size.to_string());
    kv("lr", t.learning_rate.to_string());
    kv("alpha", t.weights.alpha.to_string());
    kv("beta", t.weights.beta.to_string());
    kv("temperature", t.weights.temperature.to_string());
    kv("beta1", t.adamw.beta1.to_string());
    kv("beta2", t.adamw.beta2.to_string());
    kv("eps", t.adamw.eps.to_string());
    kv("weight_decay", t.adamw.weight_decay.to_string());
    kv("enhance", t.enhance.method.name().to_string());
    kv("enhance_gamma", t.enhance.gamma.to_string());
    kv("enhance_alpha", t.enhance.alpha.to_string());
    kv("enhance_iterations", t.enhance.iterations.to_string());
    kv("widths", join(&t.model.widths.iter().map(|w| w.to_string()).collect::<Vec<_>>()));
    kv("spatial_kernel", t.model.spatial_kernel.to_string());
    kv("temporal_kernel", t.model.temporal_kernel.to_string());
    kv("seeds", join(&cfg.seeds.iter().map(|s| s.to_string()).collect::<Vec<_>>()));
    kv("classes", d.classes.to_string());
    kv("per_class", d.per_class.to_string());
    kv("dims", d.dims.map(|x| x.to_string()).join("x"));
    kv("data_seed", d.seed.to_string());
    kv("gamma_dark", d.darken.gamma_dark.to_string());
    kv("scale", d.darken.scale.to_string());
    kv("noise", d.darken.sigma.to_string());
    kv("train_fraction", d.train_fraction.to_string());
    if let Some(dir) = &d.dir {
        kv("data", dir.display().to_string());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(text: &str) -> Result<RunConfig> {
        parse(text, Path::new("/tmp/run.cfg"))
    }

    #[test]
    fn empty_file_gives_benchmark_defaults() {
        let c = p("# nothing\n\n").unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!(c.train.learning_rate, 1e-4);
        assert_eq!(c.train.epochs, 40);
        assert_eq!(c.data.dims, [3, 8, 32, 32]);
    }

    #[test]
    fn values_are_applied() {
        let c = p("epochs = 3\nlr=0.01 # fast\nwidths = 4, 6\ndims = 1x4x8x8\nenhance = gamma\nseeds = 5,6\nbeta = 0").unwrap();
        assert_eq!(c.train.epochs, 3);
        assert_eq!(c.train.learning_rate, 0.01);
        assert_eq!(c.train.model.widths, vec![4, 6]);
        assert_eq!(c.data.dims, [1, 4, 8, 8]);
        assert_eq!(c.train.enhance.method, EnhanceMethod::Gamma);
        assert_eq!(c.seeds, vec![5, 6]);
        assert_eq!(c.train.weights.beta, 0.0);
    }

    #[test]
    fn unknown_and_duplicate_keys_name_the_line() {
        match p("epochs = 2\nlearning_rate = 1") {
            Err(CliError::Config { line, message, .. }) => {
                assert_eq!(line, 2);
                assert!(message.contains("learning_rate"));
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(p("epochs = 2\nepochs = 3"), Err(CliError::Config { line: 2, .. })));
        assert!(matches!(p("epochs"), Err(CliError::Config { line: 1, .. })));
        assert!(matches!(p("epochs = two"), Err(CliError::Config { line: 1, .. })));
    }

    #[test]
    fn invalid_values_are_rejected() {
        assert!(p("epochs = 0").is_err());
        assert!(p("train_fraction = 1").is_err());
        assert!(p("enhance_alpha = 2").is_err());
        assert!(p("spatial_kernel = 2").is_err());
    }

    #[test]
    fn render_round_trips() {
        let c = p("epochs = 7\nwidths = 3,5,7\nnoise = 0.05\nseeds = 9").unwrap();
        assert_eq!(p(&render(&c)).unwrap(), c);
        assert_eq!(p(&render(&RunConfig::default())).unwrap(), RunConfig::default());
    }

    #[test]
    fn every_key_is_accepted() {
        let c = RunConfig::default();
        let text = render(&c) + "data = somewhere\n";
        let keys: BTreeSet<&str> = text.lines().filter_map(|l| l.split(" = ").next()).collect();
        let all: BTreeSet<&str> = KEYS.iter().copied().filter(|k| *k != "seed").collect();
        assert_eq!(keys, all);
        assert!(p("seed = 4").unwrap().seeds == vec![4]);
    }
}
