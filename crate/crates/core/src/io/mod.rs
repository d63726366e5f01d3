//! Readers and writers for every artifact file.

mod checkpoint;
mod config;
mod csv;
mod pgm;

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use checkpoint::{decode_checkpoint, encode_checkpoint, read_checkpoint, write_checkpoint, MAGIC, VERSION};
pub use config::{
    echo_config, load_config, stride_grid, DatasetConfig, ExperimentConfig, SweepGrid, ECHO_FILE,
};
pub use csv::{
    logits_to_string, manifest_to_string, read_logits, read_manifest, read_sweep, reliability_to_string,
    sweep_to_string, write_logits, write_manifest, write_reliability, write_sweep, SweepRow, MANIFEST_HEADER,
};
pub use pgm::{decode_pgm, encode_pgm, read_pgm, write_pgm};

use crate::error::{Error, Result};
use crate::scaling::Temperature;

/// Fit diagnostics stored next to the `T=<value>` file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemperatureDiagnostics {
    pub format_version: u32,
    pub temperature: f64,
    pub nll_at_fit: f64,
    pub nll_uncalibrated: f64,
    pub iterations: usize,
    pub holdout_size: usize,
}

pub fn write_temperature(t: &Temperature, path: &Path) -> Result<()> {
    fs::write(path, format!("T={}\n", t.value)).map_err(|e| Error::io(path, e))
}

pub fn read_temperature(path: &Path) -> Result<Temperature> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let malformed = |reason: String| Error::Format {
        kind: "temperature file",
        path: path.to_path_buf(),
        reason,
    };
    let line = text.trim();
    let value = line
        .strip_prefix("T=")
        .ok_or_else(|| malformed(format!("expected T=<value>, found {line:?}")))?;
    let value: f64 = value.parse().map_err(|_| malformed(format!("{value:?} is not a number")))?;
    Temperature::new(value).map_err(|e| malformed(e.to_string()))
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Numeric(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Format {
        kind: "JSON",
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}
