//! Per-run manifests: configuration digest, seeds, artifact hashes, and
//! timing, so runs are auditably reproducible.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use trajflow_core::Result;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    /// SHA-256 over the canonical JSON of the effective configuration.
    pub config_digest: String,
    pub seeds: Vec<u64>,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    /// SHA-256 of every written artifact, keyed by output name.
    pub artifact_hashes: BTreeMap<String, String>,
    pub wall_time_s: f64,
    pub hardware: String,
    pub created_unix_ms: u128,
}

pub struct ManifestBuilder {
    subcommand: String,
    config_digest: String,
    seeds: Vec<u64>,
    inputs: BTreeMap<String, String>,
    outputs: BTreeMap<String, String>,
    hashes: BTreeMap<String, String>,
    started: std::time::Instant,
}

impl ManifestBuilder {
    pub fn new(subcommand: &str, config: &impl Serialize, seeds: &[u64]) -> Self {
        let canonical = serde_json::to_string(config).unwrap_or_default();
        ManifestBuilder {
            subcommand: subcommand.to_string(),
            config_digest: hex_digest(canonical.as_bytes()),
            seeds: seeds.to_vec(),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            hashes: BTreeMap::new(),
            started: std::time::Instant::now(),
        }
    }

    pub fn input(&mut self, name: &str, path: &Path) {
        self.inputs.insert(name.to_string(), path.display().to_string());
    }

    /// Record an output artifact and hash its bytes.
    pub fn output(&mut self, name: &str, path: &Path) -> Result<()> {
        self.outputs.insert(name.to_string(), path.display().to_string());
        let bytes = std::fs::read(path)?;
        self.hashes.insert(name.to_string(), hex_digest(&bytes));
        Ok(())
    }

    /// Write the manifest next to the primary artifact.
    pub fn write(self, primary: &Path) -> Result<()> {
        let manifest = RunManifest {
            subcommand: self.subcommand,
            config_digest: self.config_digest,
            seeds: self.seeds,
            inputs: self.inputs,
            outputs: self.outputs,
            artifact_hashes: self.hashes,
            wall_time_s: self.started.elapsed().as_secs_f64(),
            hardware: hardware_string(),
            created_unix_ms: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_millis())
                .unwrap_or(0),
        };
        let path = manifest_path(primary);
        std::fs::write(path, serde_json::to_string_pretty(&manifest)?)?;
        Ok(())
    }
}

pub fn manifest_path(primary: &Path) -> std::path::PathBuf {
    let mut name = primary.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    primary.with_file_name(name)
}

pub fn hex_digest(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    format!("{:x}", hasher.finalize())
}

fn hardware_string() -> String {
    format!(
        "{}/{} {} threads",
        std::env::consts::OS,
        std::env::consts::ARCH,
        std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
    )
}
