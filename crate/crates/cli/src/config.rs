//! Optional config file. Values here replace built-in defaults; flags given
//! on the command line still take precedence.

use std::path::{Path, PathBuf};

use blecte::dataset_io::{GtSchema, SignalSchema};
use blecte::simgen::Obstacle;
use serde::Deserialize;

use crate::error::{CliError, Result};

pub const OUT_DIR_ENV: &str = "BLECTE_OUT_DIR";
pub const DEFAULT_OUT_DIR: &str = "blecte-out";

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub out: Option<PathBuf>,
    pub jobs: Option<usize>,
    pub seed: Option<u64>,
    pub dataset: Option<PathBuf>,
    pub signal_schema: Option<SignalSchema>,
    pub gt_schema: Option<GtSchema>,
    pub label: LabelSection,
    pub estimate: EstimateSection,
    pub range: RangeSection,
    pub simulate: SimulateSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LabelSection {
    pub anchor_x: Option<f64>,
    pub anchor_y: Option<f64>,
    pub anchor_height: Option<f64>,
    pub misalignment: Option<f64>,
    pub max_gap: Option<f64>,
    pub distance_mode: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimateSection {
    pub algo: Option<String>,
    pub window: Option<usize>,
    pub spacing: Option<f64>,
    pub calib: Option<PathBuf>,
    pub grid: Option<f64>,
    pub pairing_window: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RangeSection {
    pub model: Option<String>,
    pub train_size: Option<usize>,
    pub mean_timestep: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    pub scenario: Option<String>,
    pub name: Option<String>,
    pub height: Option<f64>,
    pub distance: Option<f64>,
    pub snr: Option<f64>,
    pub cfo: Option<f64>,
    pub sweep: Option<[f64; 2]>,
    pub speed: Option<f64>,
    pub obstacles: Option<Vec<Obstacle>>,
    pub anomaly: Option<[f64; 2]>,
    pub segments: Option<usize>,
    pub packets_per_segment: Option<usize>,
    pub rss_noise: Option<f64>,
}

impl FileConfig {
    /// Reads TOML, or JSON when the file name ends in `.json`.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
        let parsed = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| e.to_string())
        } else {
            toml::from_str(&text).map_err(|e| e.to_string())
        };
        parsed.map_err(|e| CliError::usage(format!("invalid config {}: {e}", path.display())))
    }
}

/// Parses an enum-valued config entry with the same spelling as its flag.
pub fn config_enum<T: clap::ValueEnum>(value: &Option<String>, key: &str) -> Result<Option<T>> {
    value
        .as_deref()
        .map(|s| T::from_str(s, true).map_err(|_| CliError::usage(format!("invalid value '{s}' for `{key}` in config"))))
        .transpose()
}

/// Flag, then config, then default.
pub fn pick<T>(flag: Option<T>, config: Option<T>, default: T) -> T {
    flag.or(config).unwrap_or(default)
}

/// Output directory: flag, config, environment, then a fixed default.
pub fn out_dir(flag: Option<PathBuf>, config: &FileConfig) -> PathBuf {
    flag.or_else(|| config.out.clone())
        .or_else(|| std::env::var_os(OUT_DIR_ENV).filter(|v| !v.is_empty()).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
}
