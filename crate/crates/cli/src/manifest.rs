//! Run manifests: enough to repeat a run and check its outputs byte for byte.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use crate::config::{sha256_hex, LoadedConfig};
use crate::error::{CliError, CliResult};

#[derive(Debug, Serialize)]
pub struct OutputEntry {
    pub path: PathBuf,
    pub bytes: usize,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool_version: &'static str,
    pub subcommand: &'static str,
    pub config_path: Option<PathBuf>,
    pub config_sha256: Option<String>,
    /// Every option of the subcommand, defaults included.
    pub arguments: serde_json::Value,
    /// Worker threads requested through the environment; 0 means automatic.
    pub threads: usize,
    pub outputs: Vec<OutputEntry>,
    pub wall_clock_seconds: f64,
}

/// Collects outputs while a subcommand runs.
pub struct Recorder {
    started: Instant,
    subcommand: &'static str,
    arguments: serde_json::Value,
    threads: usize,
    config: Option<(PathBuf, String)>,
    outputs: Vec<OutputEntry>,
}

impl Recorder {
    pub fn new<A: Serialize>(subcommand: &'static str, arguments: &A, threads: usize) -> Self {
        Self {
            started: Instant::now(),
            subcommand,
            arguments: serde_json::to_value(arguments).unwrap_or(serde_json::Value::Null),
            threads,
            config: None,
            outputs: Vec::new(),
        }
    }

    pub fn config(&mut self, cfg: &LoadedConfig) {
        self.config = Some((cfg.path.clone(), cfg.sha256.clone()));
    }

    /// Writes `contents` to `path` and records it.
    pub fn write(&mut self, path: &Path, contents: &[u8]) -> CliResult<()> {
        write_file(path, contents)?;
        self.outputs.push(OutputEntry {
            path: path.to_path_buf(),
            bytes: contents.len(),
            sha256: sha256_hex(contents),
        });
        Ok(())
    }

    pub fn has_outputs(&self) -> bool {
        !self.outputs.is_empty()
    }

    pub fn primary_output(&self) -> Option<&Path> {
        self.outputs.first().map(|o| o.path.as_path())
    }

    pub fn finish(self, path: &Path) -> CliResult<()> {
        let (config_path, config_sha256) = self.config.unzip();
        let manifest = RunManifest {
            tool_version: env!("CARGO_PKG_VERSION"),
            subcommand: self.subcommand,
            config_path,
            config_sha256,
            arguments: self.arguments,
            threads: self.threads,
            outputs: self.outputs,
            wall_clock_seconds: self.started.elapsed().as_secs_f64(),
        };
        let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        text.push('\n');
        write_file(path, text.as_bytes())
    }
}

pub fn write_file(path: &Path, contents: &[u8]) -> CliResult<()> {
    fs::write(path, contents).map_err(|source| CliError::Write {
        path: path.to_path_buf(),
        source,
    })
}

/// `out.csv` becomes `out.csv.manifest.json`.
pub fn default_manifest_path(output: &Path) -> PathBuf {
    let mut name = output.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}
