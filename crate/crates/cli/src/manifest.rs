//! Per-run manifest: command, inputs, outputs with checksums, seed, timing.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

use v2v_core::Result;

#[derive(Serialize)]
pub struct ArtifactRecord {
    pub path: String,
    pub sha256: String,
}

#[derive(Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config_path: Option<String>,
    pub inputs: Vec<String>,
    pub outputs: Vec<ArtifactRecord>,
    pub seed: Option<u64>,
    pub started_unix: u64,
    pub finished_unix: u64,
}

pub struct ManifestBuilder {
    command: String,
    config_path: Option<PathBuf>,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    seed: Option<u64>,
    started_unix: u64,
}

fn now_unix() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

impl ManifestBuilder {
    pub fn new(command: &str) -> Self {
        ManifestBuilder {
            command: command.to_string(),
            config_path: None,
            inputs: Vec::new(),
            outputs: Vec::new(),
            seed: None,
            started_unix: now_unix(),
        }
    }

    pub fn config(mut self, path: &Path) -> Self {
        self.config_path = Some(path.to_path_buf());
        self
    }

    pub fn input(mut self, path: &Path) -> Self {
        self.inputs.push(path.to_path_buf());
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.to_path_buf());
    }

    /// Hash the outputs and write the manifest JSON.
    pub fn write(self, manifest_path: &Path) -> Result<()> {
        let mut outputs = Vec::with_capacity(self.outputs.len());
        for path in &self.outputs {
            let bytes =
                std::fs::read(path).map_err(|e| v2v_core::Error::io(path.clone(), e))?;
            let mut hasher = Sha256::new();
            hasher.update(&bytes);
            let digest = hasher.finalize();
            outputs.push(ArtifactRecord {
                path: path.display().to_string(),
                sha256: digest.iter().map(|b| format!("{b:02x}")).collect(),
            });
        }
        let manifest = RunManifest {
            command: self.command,
            config_path: self.config_path.map(|p| p.display().to_string()),
            inputs: self.inputs.iter().map(|p| p.display().to_string()).collect(),
            outputs,
            seed: self.seed,
            started_unix: self.started_unix,
            finished_unix: now_unix(),
        };
        let json = serde_json::to_vec_pretty(&manifest)?;
        std::fs::write(manifest_path, json)
            .map_err(|e| v2v_core::Error::io(manifest_path.to_path_buf(), e))?;
        Ok(())
    }
}
