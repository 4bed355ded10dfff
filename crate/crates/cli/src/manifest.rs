use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::Result;
use serde::Serialize;
use spheroid_core::io::{sha256_file, sha256_hex, write_json};

#[derive(Debug, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

/// Record of one command invocation, written next to its outputs.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub seed: Option<u64>,
    pub config_sha256: Option<String>,
    pub inputs: Vec<FileDigest>,
    pub artifacts: Vec<FileDigest>,
    pub wall_clock_s: f64,
}

pub struct ManifestBuilder {
    command: String,
    seed: Option<u64>,
    config_sha256: Option<String>,
    inputs: Vec<PathBuf>,
    artifacts: Vec<PathBuf>,
    started: Instant,
}

impl ManifestBuilder {
    pub fn new(command: &str) -> Self {
        Self {
            command: command.to_string(),
            seed: None,
            config_sha256: None,
            inputs: Vec::new(),
            artifacts: Vec::new(),
            started: Instant::now(),
        }
    }

    pub fn seed(&mut self, seed: u64) {
        self.seed = Some(seed);
    }

    /// Digest of the effective configuration, not of the file it came from.
    pub fn config_text(&mut self, text: &str) {
        self.config_sha256 = Some(sha256_hex(text.as_bytes()));
    }

    pub fn input(&mut self, path: &Path) {
        self.inputs.push(path.to_path_buf());
    }

    pub fn artifact(&mut self, path: &Path) {
        self.artifacts.push(path.to_path_buf());
    }

    /// Writes `manifest.json` into `dir`. Artifact paths are relative to it.
    pub fn write(self, dir: &Path) -> Result<PathBuf> {
        let digest = |p: &PathBuf, relative: bool| -> Result<FileDigest> {
            let shown = if relative {
                p.strip_prefix(dir).unwrap_or(p)
            } else {
                p.as_path()
            };
            Ok(FileDigest {
                path: shown.display().to_string(),
                sha256: sha256_file(p)?,
            })
        };
        let manifest = RunManifest {
            command: self.command,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            seed: self.seed,
            config_sha256: self.config_sha256,
            inputs: self
                .inputs
                .iter()
                .map(|p| digest(p, false))
                .collect::<Result<_>>()?,
            artifacts: self
                .artifacts
                .iter()
                .map(|p| digest(p, true))
                .collect::<Result<_>>()?,
            wall_clock_s: self.started.elapsed().as_secs_f64(),
        };
        let path = dir.join("manifest.json");
        write_json(&path, &manifest)?;
        Ok(path)
    }
}
