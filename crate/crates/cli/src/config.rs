//! Loading and fingerprinting of the JSON parameter file.

use std::fs;
use std::path::{Path, PathBuf};

use regime_extract::model::{self, RawParams};
use regime_extract::ModelParams;
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub struct LoadedConfig {
    pub path: PathBuf,
    pub params: ModelParams,
    /// SHA-256 of the file bytes.
    pub sha256: String,
}

pub fn load(path: &Path) -> CliResult<LoadedConfig> {
    let bytes = fs::read(path).map_err(|source| CliError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    let raw: RawParams = serde_json::from_slice(&bytes).map_err(|e| CliError::Parse {
        path: path.to_path_buf(),
        offset: byte_offset(&bytes, e.line(), e.column()),
        message: e.to_string(),
    })?;
    let params = model::validate(&raw)?;
    Ok(LoadedConfig {
        path: path.to_path_buf(),
        params,
        sha256: sha256_hex(&bytes),
    })
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Converts the 1-based line and column reported by the JSON parser into a
/// 0-based byte offset, clamped to the input length.
fn byte_offset(bytes: &[u8], line: usize, column: usize) -> usize {
    let line_start: usize = bytes
        .split_inclusive(|&b| b == b'\n')
        .take(line.saturating_sub(1))
        .map(<[u8]>::len)
        .sum();
    (line_start + column.saturating_sub(1)).min(bytes.len())
}
