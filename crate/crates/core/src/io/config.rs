//! Experiment configuration, read from TOML.
//!
//! Every section is optional and every key has a default; unknown keys are
//! rejected. The effective configuration is echoed back as TOML listing
//! every value explicitly.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::augment::{AugmentParams, Variant};
use crate::classifier::{ModelConfig, TrainConfig};
use crate::error::{Error, Result};
use crate::metrics::BinningConfig;
use crate::scaling::FitConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetConfig {
    pub image_size: usize,
    pub test_fraction: f64,
    pub folds: usize,
    pub blur_cap: f64,
    pub noise_cap: f64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            image_size: 224,
            test_fraction: 0.2,
            folds: 5,
            blur_cap: 32.0,
            noise_cap: 30.0,
        }
    }
}

/// Perturbation levels for the robustness sweeps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepGrid {
    pub blur_sigmas: Vec<f64>,
    pub noise_sigmas: Vec<f64>,
}

impl Default for SweepGrid {
    fn default() -> Self {
        Self {
            blur_sigmas: (0..9).map(|i| f64::from(1u32 << i)).collect(),
            noise_sigmas: stride_grid(1.0, 50.0, 8.0),
        }
    }
}

/// `lo, lo + stride, ...` with the final point snapped to `hi`.
pub fn stride_grid(lo: f64, hi: f64, stride: f64) -> Vec<f64> {
    let steps = ((hi - lo) / stride).floor() as usize;
    let mut grid: Vec<f64> = (0..steps).map(|i| lo + stride * i as f64).collect();
    grid.push(hi);
    grid
}

impl SweepGrid {
    pub fn validate(&self) -> Result<()> {
        for (name, grid) in [("blur_sigmas", &self.blur_sigmas), ("noise_sigmas", &self.noise_sigmas)] {
            if grid.is_empty() || grid[0] <= 0.0 || grid.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::Config(format!(
                    "sweep.{name} must be a nonempty, strictly increasing list of positive values"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub root_seed: u64,
    /// Output directory; relative paths resolve against the config file.
    pub out_dir: Option<PathBuf>,
    pub variants: Vec<Variant>,
    pub dataset: DatasetConfig,
    pub augment: AugmentParams,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub fit: FitConfig,
    pub binning: BinningConfig,
    pub sweep: SweepGrid,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            root_seed: 7,
            out_dir: None,
            variants: Variant::ALL.to_vec(),
            dataset: DatasetConfig::default(),
            augment: AugmentParams::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            fit: FitConfig::default(),
            binning: BinningConfig::default(),
            sweep: SweepGrid::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.root_seed > i64::MAX as u64 {
            return Err(Error::Config("root_seed must fit in a signed 64-bit integer".into()));
        }
        if self.variants.is_empty() {
            return Err(Error::Config("variants must list at least one of I, II, III".into()));
        }
        let d = &self.dataset;
        if d.image_size < 8 || !(0.0..1.0).contains(&d.test_fraction) || d.folds < 2 {
            return Err(Error::Config(format!("invalid dataset section: {d:?}")));
        }
        if !(d.blur_cap >= 1.0 && d.noise_cap >= 1.0) {
            return Err(Error::Config("dataset caps must be at least 1".into()));
        }
        if self.binning.m == 0 {
            return Err(Error::Config("binning.m must be at least 1".into()));
        }
        self.augment.validate()?;
        self.model.validate()?;
        self.train.validate()?;
        self.fit.validate()?;
        self.sweep.validate()
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }
}

/// Reads, validates and path-resolves a configuration file.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut cfg = ExperimentConfig::from_toml_str(&text)?;
    if let Some(out) = &cfg.out_dir {
        if out.is_relative() {
            let base = path.parent().unwrap_or_else(|| Path::new("."));
            cfg.out_dir = Some(base.join(out));
        }
    }
    Ok(cfg)
}

pub const ECHO_FILE: &str = "config.effective.toml";

/// Writes the effective configuration into `dir`.
pub fn echo_config(cfg: &ExperimentConfig, dir: &Path) -> Result<PathBuf> {
    let path = dir.join(ECHO_FILE);
    fs::write(&path, cfg.to_toml_string()?).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}
