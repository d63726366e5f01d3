//! Model checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "TCAL"  u32 version
//! u32 input_size  u32 kernel_size  u32 num_classes  u32 depth
//! u32 channels[depth]  u32 dilations[depth]  u32 conv_bias (0 or 1)
//! u64 param_count  f64 params[param_count]   (flat order of ParamLayout)
//! ```

use std::fs;
use std::path::Path;

use crate::classifier::{ModelConfig, ModelParams};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"TCAL";
pub const VERSION: u32 = 1;

pub fn encode_checkpoint(cfg: &ModelConfig, params: &ModelParams) -> Vec<u8> {
    let mut out = Vec::with_capacity(32 + 8 * params.len());
    out.extend_from_slice(MAGIC);
    let mut u32le = |v: usize| out.extend_from_slice(&(v as u32).to_le_bytes());
    u32le(VERSION as usize);
    u32le(cfg.input_size);
    u32le(cfg.kernel_size);
    u32le(cfg.num_classes);
    u32le(cfg.channels.len());
    cfg.channels.iter().for_each(|&c| u32le(c));
    cfg.dilations.iter().for_each(|&d| u32le(d));
    u32le(usize::from(cfg.conv_bias));
    out.extend_from_slice(&(params.len() as u64).to_le_bytes());
    for v in &params.values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn write_checkpoint(cfg: &ModelConfig, params: &ModelParams, path: &Path) -> Result<()> {
    fs::write(path, encode_checkpoint(cfg, params)).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: &Path) -> Result<(ModelConfig, ModelParams)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes, path)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let s = self.bytes.get(self.pos..self.pos + n)?;
        self.pos += n;
        Some(s)
    }

    fn u32(&mut self) -> Option<usize> {
        self.take(4).map(|b| u32::from_le_bytes(b.try_into().unwrap()) as usize)
    }
}

pub fn decode_checkpoint(bytes: &[u8], path: &Path) -> Result<(ModelConfig, ModelParams)> {
    let malformed = |reason: &str| Error::Format {
        kind: "checkpoint",
        path: path.to_path_buf(),
        reason: reason.to_string(),
    };
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(4) != Some(MAGIC.as_slice()) {
        return Err(malformed("missing TCAL magic"));
    }
    let truncated = || malformed("truncated header");
    let version = c.u32().ok_or_else(truncated)?;
    if version != VERSION as usize {
        return Err(malformed(&format!("unsupported version {version}")));
    }
    let input_size = c.u32().ok_or_else(truncated)?;
    let kernel_size = c.u32().ok_or_else(truncated)?;
    let num_classes = c.u32().ok_or_else(truncated)?;
    let depth = c.u32().ok_or_else(truncated)?;
    if depth > 64 {
        return Err(malformed("implausible layer count"));
    }
    let channels = (0..depth).map(|_| c.u32()).collect::<Option<Vec<_>>>().ok_or_else(truncated)?;
    let dilations = (0..depth).map(|_| c.u32()).collect::<Option<Vec<_>>>().ok_or_else(truncated)?;
    let conv_bias = match c.u32().ok_or_else(truncated)? {
        0 => false,
        1 => true,
        other => return Err(malformed(&format!("conv_bias flag {other}"))),
    };
    let cfg = ModelConfig {
        input_size,
        channels,
        kernel_size,
        dilations,
        num_classes,
        conv_bias,
    };
    cfg.validate().map_err(|e| malformed(&format!("invalid config echo: {e}")))?;
    let count = c
        .take(8)
        .map(|b| u64::from_le_bytes(b.try_into().unwrap()) as usize)
        .ok_or_else(truncated)?;
    if count != cfg.param_count() {
        return Err(malformed(&format!("{count} parameters, config implies {}", cfg.param_count())));
    }
    let raw = c.take(count * 8).ok_or_else(|| malformed("truncated parameters"))?;
    if c.pos != bytes.len() {
        return Err(malformed("trailing bytes"));
    }
    let values = raw.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect();
    Ok((cfg, ModelParams { values }))
}
