//! TOML run configuration. Every field is optional; flags win over the file,
//! the file wins over built-in defaults.

use std::fmt;
use std::path::{Path, PathBuf};

use msl_core::datagen::SamplerMode;
use msl_core::model::{Head, Task, Variant};
use serde::Deserialize;

/// A bad flag, config value or config file. Exits with status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,

    // universe
    pub k: Option<usize>,
    pub d: Option<usize>,
    pub n_train: Option<usize>,
    pub n_eval: Option<usize>,
    pub noise_sigma: Option<f64>,
    pub prototype_scale: Option<f64>,
    pub out_dir: Option<PathBuf>,

    // model and training
    pub variant: Option<Variant>,
    pub head: Option<Head>,
    pub task: Option<Task>,
    pub rep_dim: Option<usize>,
    pub iterations: Option<usize>,
    pub learning_rate: Option<f64>,
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    pub epsilon: Option<f64>,
    pub size_min: Option<usize>,
    pub size_max: Option<usize>,
    pub sampler: Option<SamplerMode>,
    pub train_data: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub metrics: Option<PathBuf>,

    // evaluation
    pub eval_data: Option<PathBuf>,
    pub eval_size_min: Option<usize>,
    pub eval_size_max: Option<usize>,
    pub pairs: Option<usize>,
    pub tau: Option<f64>,
    pub containment: Option<bool>,
    pub report: Option<PathBuf>,

    // clustering demo
    pub n: Option<usize>,
    pub clusters: Option<usize>,
    pub instances: Option<usize>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| usage(format!("invalid config {}: {e}", path.display())))
    }
}

/// Parses `MIN:MAX` into an inclusive size range.
pub fn parse_sizes(s: &str) -> Result<(usize, usize), String> {
    let (lo, hi) = s
        .split_once(':')
        .ok_or_else(|| format!("expected MIN:MAX, got `{s}`"))?;
    let lo: usize = lo
        .trim()
        .parse()
        .map_err(|_| format!("bad minimum in `{s}`"))?;
    let hi: usize = hi
        .trim()
        .parse()
        .map_err(|_| format!("bad maximum in `{s}`"))?;
    if lo > hi {
        return Err(format!("minimum exceeds maximum in `{s}`"));
    }
    Ok((lo, hi))
}

pub fn parse_sampler(s: &str) -> Result<SamplerMode, String> {
    match s {
        "uniform" => Ok(SamplerMode::Uniform),
        "relation-balanced" => Ok(SamplerMode::RelationBalanced),
        other => Err(format!(
            "unknown sampler `{other}` (expected uniform or relation-balanced)"
        )),
    }
}

/// The output path must sit in an existing directory.
pub fn check_writable(path: &Path) -> anyhow::Result<()> {
    let parent = path.parent().filter(|p| !p.as_os_str().is_empty());
    match parent {
        Some(dir) if !dir.is_dir() => Err(usage(format!(
            "output directory {} does not exist",
            dir.display()
        ))),
        _ if path.is_dir() => Err(usage(format!("{} is a directory", path.display()))),
        _ => Ok(()),
    }
}

pub fn require_file(path: &Path, what: &str) -> anyhow::Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(usage(format!("{what} {} does not exist", path.display())))
    }
}
