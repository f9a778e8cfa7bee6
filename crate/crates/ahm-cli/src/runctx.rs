//! Run configuration and the reproducibility manifest every command writes.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Deserialize;
use sha2::{Digest, Sha256};

/// Optional config file; command-line flags override any value set here.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: Option<PathBuf>,
    pub backend_config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub condition: Option<String>,
    pub similarity_threshold: Option<f64>,
    pub prediction_threshold: Option<f64>,
    pub with_published_data: Option<bool>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("bad config {}", path.display()))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Collects the inputs' content hashes, the seed and parameters, and the
/// outputs' hashes, then writes `run_manifest.txt`. No timestamps: reruns of
/// identical inputs produce an identical manifest.
pub struct RunManifest {
    lines: Vec<String>,
}

impl RunManifest {
    pub fn new(command: &str) -> RunManifest {
        RunManifest {
            lines: vec![format!("command={command}")],
        }
    }

    pub fn param(&mut self, key: &str, value: impl std::fmt::Display) {
        self.lines.push(format!("{key}={value}"));
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        let bytes =
            fs::read(path).with_context(|| format!("cannot hash input {}", path.display()))?;
        self.lines
            .push(format!("input={} sha256={}", path.display(), sha256_hex(&bytes)));
        Ok(())
    }

    /// Record and write one output file under the run directory.
    pub fn write_output(&mut self, dir: &Path, name: &str, content: &str) -> Result<()> {
        let path = dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, content)
            .with_context(|| format!("cannot write {}", path.display()))?;
        self.lines
            .push(format!("output={name} sha256={}", sha256_hex(content.as_bytes())));
        Ok(())
    }

    pub fn finish(&self, dir: &Path) -> Result<PathBuf> {
        fs::create_dir_all(dir)?;
        let path = dir.join("run_manifest.txt");
        let mut text = self.lines.join("\n");
        text.push('\n');
        fs::write(&path, text)
            .with_context(|| format!("cannot write {}", path.display()))?;
        Ok(path)
    }
}
