use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

pub const MANIFEST_FILE: &str = "manifest.json";
/// Effective configuration, written next to the artifacts so that
/// `--config <dir>/config.toml` reproduces the run.
pub const CONFIG_SNAPSHOT_FILE: &str = "config.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    /// File name relative to the output directory.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub scenario: String,
    pub seed: u64,
    pub config: RunConfig,
    pub artifacts: Vec<Artifact>,
    pub wall_clock_s: f64,
    pub jobs: usize,
    pub versions: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn artifact(&self, path: &str) -> Option<&Artifact> {
        self.artifacts.iter().find(|a| a.path == path)
    }

    pub fn write(&self, dir: &Path) -> io::Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(io::Error::other)?;
        fs::write(dir.join(MANIFEST_FILE), text + "\n")
    }

    pub fn read(dir: &Path) -> io::Result<Self> {
        let text = fs::read_to_string(dir.join(MANIFEST_FILE))?;
        serde_json::from_str(&text).map_err(io::Error::other)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn describe(dir: &Path, name: &str) -> io::Result<Artifact> {
    let bytes = fs::read(dir.join(name))?;
    Ok(Artifact {
        path: name.to_string(),
        sha256: sha256_hex(&bytes),
        bytes: bytes.len() as u64,
    })
}

pub fn versions() -> BTreeMap<String, String> {
    BTreeMap::from([
        ("noma-deepsic".to_string(), noma_deepsic::VERSION.to_string()),
        ("noma-deepsic-cli".to_string(), env!("CARGO_PKG_VERSION").to_string()),
        ("manifest".to_string(), "1".to_string()),
    ])
}
