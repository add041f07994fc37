//! The flat run-configuration schema shared by the config file and flags.
//!
//! A config file is a single JSON object whose keys are exactly the long
//! flag names with dashes replaced by underscores (`--learning-rate` is
//! `"learning_rate"`). Merging happens field by field: an explicit flag
//! wins over the file value, which wins over the built-in default. Every
//! command echoes its resolved configuration as `config.json`, and that
//! file is itself a valid `--config` input.

use std::path::PathBuf;

use serde::Deserialize;

use crate::CliError;

/// Every recognized config-file key. Unknown keys are rejected so typos
/// surface as usage errors instead of silently keeping defaults.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    // Paths and shared settings.
    pub manifest: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub ccm: Option<PathBuf>,
    pub errors_csv: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    // Model topology.
    pub conv_layers: Option<usize>,
    pub filters: Option<usize>,
    pub kernel_size: Option<usize>,
    pub codebook: Option<usize>,
    pub hidden: Option<usize>,
    pub attention: Option<String>,
    pub input_size: Option<usize>,
    // Optimization.
    pub batch_size: Option<usize>,
    pub learning_rate: Option<f64>,
    pub epochs: Option<usize>,
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    pub epsilon: Option<f64>,
    pub lambda_init: Option<f64>,
    pub kmeans_init: Option<bool>,
    pub checkpoint_interval: Option<usize>,
    pub folds: Option<usize>,
    // Augmentation.
    pub crop_size: Option<usize>,
    pub rotation: Option<f64>,
    pub rescale_min: Option<f64>,
    pub rescale_max: Option<f64>,
    // Statistical baselines.
    pub method: Option<String>,
    pub p: Option<f64>,
    pub sigma: Option<f64>,
    pub n: Option<u64>,
    // Synthetic data generation.
    pub size: Option<usize>,
    pub patches: Option<usize>,
    pub white_patch: Option<bool>,
    pub bit_depth: Option<u8>,
}

impl RunConfig {
    /// Loads the file named by `--config`, or an empty config without one.
    pub fn load(path: &Option<PathBuf>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::usage(format!("cannot read config '{}': {}", path.display(), e))
        })?;
        serde_json::from_str(&text).map_err(|e| {
            CliError::usage(format!("bad config '{}': {}", path.display(), e))
        })
    }
}

/// Flag value if given, else file value, else the built-in default.
pub fn pick<T: Clone>(flag: &Option<T>, file: &Option<T>, default: T) -> T {
    flag.clone().or_else(|| file.clone()).unwrap_or(default)
}

/// As [`pick`] but for settings with no default, which stay optional.
pub fn pick_opt<T: Clone>(flag: &Option<T>, file: &Option<T>) -> Option<T> {
    flag.clone().or_else(|| file.clone())
}

/// As [`pick_opt`] but required: reports the missing flag as a usage error.
pub fn pick_required<T: Clone>(
    flag: &Option<T>,
    file: &Option<T>,
    flag_name: &str,
) -> Result<T, CliError> {
    pick_opt(flag, file)
        .ok_or_else(|| CliError::usage(format!("missing required --{} (or config key)", flag_name)))
}

/// Out-dir default: artifacts land under the working directory.
pub fn default_out_dir() -> PathBuf {
    PathBuf::from(".")
}

/// JSON-friendly rendering of an optional path.
pub fn path_json(path: &Option<PathBuf>) -> serde_json::Value {
    match path {
        Some(p) => serde_json::Value::String(p.display().to_string()),
        None => serde_json::Value::Null,
    }
}
