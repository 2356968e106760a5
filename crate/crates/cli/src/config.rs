//! The `--config` file: a JSON object whose fields mirror the flags.
//! Precedence is flags over file over built-in defaults.

use crate::CliError;
use serde::Deserialize;
use std::path::{Path, PathBuf};

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub annotations: Option<PathBuf>,
    pub detections: Option<PathBuf>,
    pub questions: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub records: Option<PathBuf>,
    pub out: Option<String>,
    pub confidence: Option<f64>,
    pub aspect_ratio: Option<f64>,
    pub digit: Option<u32>,
    pub ratio: Option<String>,
    pub seed: Option<u64>,
    pub delta_max: Option<u32>,
    pub counterfactual_fraction: Option<f64>,
    pub zero_fraction: Option<f64>,
    pub responder: Option<String>,
    pub endpoint: Option<String>,
    pub jobs: Option<usize>,
    pub timeout_secs: Option<u64>,
    pub retry_budget: Option<u32>,
    pub format: Option<String>,
    pub log_level: Option<String>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<FileConfig, CliError> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Input(format!("config {}: {e}", path.display())))
    }
}

/// Flag value if set, else config-file value, else the default.
pub fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

/// Parse a config-file string into one of a flag's allowed values.
pub fn parse_enum<T: clap::ValueEnum>(value: &str, what: &str) -> Result<T, CliError> {
    T::from_str(value, true).map_err(|_| CliError::Input(format!("{what}: unknown value {value:?}")))
}

/// Flag value if set, else config-file value, else an input error naming
/// the missing flag.
pub fn require<T>(flag: Option<T>, file: Option<T>, what: &str) -> Result<T, CliError> {
    flag.or(file)
        .ok_or_else(|| CliError::Input(format!("missing required --{what}")))
}
