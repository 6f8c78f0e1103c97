//! Run manifests: the configuration snapshot, paths and seed behind each
//! artifact, written next to it as `<artifact>.manifest.json`.

use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

#[derive(Debug, Clone, Serialize)]
struct Identity<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    config: &'a RunConfig,
    inputs: &'a [String],
    outputs: &'a [String],
    seed: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub config: RunConfig,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub seed: u64,
    /// SHA-256 over everything above; timestamps are excluded so reruns with
    /// identical inputs share a digest.
    pub digest: String,
    pub started_at: String,
    pub finished_at: Option<String>,
}

fn display(paths: &[&Path]) -> Vec<String> {
    paths.iter().map(|p| p.display().to_string()).collect()
}

impl RunManifest {
    pub fn new(command: &str, config: &RunConfig, inputs: &[&Path], outputs: &[&Path]) -> Self {
        let inputs = display(inputs);
        let outputs = display(outputs);
        let identity = Identity {
            tool: "ris",
            version: env!("CARGO_PKG_VERSION"),
            command,
            config,
            inputs: &inputs,
            outputs: &outputs,
            seed: config.seed,
        };
        let bytes = serde_json::to_vec(&identity).expect("manifest serializes");
        let digest = Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect();
        RunManifest {
            tool: "ris",
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            config: config.clone(),
            inputs,
            outputs,
            seed: config.seed,
            digest,
            started_at: chrono::Utc::now().to_rfc3339(),
            finished_at: None,
        }
    }

    pub fn sidecar_path(artifact: &Path) -> PathBuf {
        if artifact.is_dir() {
            return artifact.join("manifest.json");
        }
        let mut name = artifact.file_name().unwrap_or_default().to_os_string();
        name.push(".manifest.json");
        artifact.with_file_name(name)
    }

    /// Stamps the finish time and writes the sidecar for every output.
    pub fn finish(mut self) -> anyhow::Result<()> {
        self.finished_at = Some(chrono::Utc::now().to_rfc3339());
        let text = serde_json::to_string_pretty(&self)?;
        for out in &self.outputs {
            let path = Self::sidecar_path(Path::new(out));
            std::fs::write(&path, &text).with_context(|| format!("writing {}", path.display()))?;
        }
        Ok(())
    }
}
