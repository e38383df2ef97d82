use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::Instant;

use anyhow::Context;
use serde::{Deserialize, Serialize};

use lacuna_core::sha256_hex;

/// Record of one CLI run, written next to its outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub version: String,
    pub flags: serde_json::Value,
    pub seeds: BTreeMap<String, u64>,
    /// Path to SHA-256 of every file read.
    pub inputs: BTreeMap<String, String>,
    /// Path to SHA-256 of every file written, the manifest itself excepted.
    pub outputs: BTreeMap<String, String>,
    /// Free-form facts about the run, such as corpus statistics.
    pub notes: BTreeMap<String, serde_json::Value>,
    pub wall_seconds: f64,
}

pub struct ManifestBuilder {
    manifest: RunManifest,
    started: Instant,
}

fn digest_file(path: &Path) -> anyhow::Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(sha256_hex(&bytes))
}

impl ManifestBuilder {
    pub fn new<A: Serialize>(subcommand: &str, args: &A) -> Self {
        ManifestBuilder {
            manifest: RunManifest {
                subcommand: subcommand.to_string(),
                version: env!("CARGO_PKG_VERSION").to_string(),
                flags: serde_json::to_value(args).unwrap_or(serde_json::Value::Null),
                seeds: BTreeMap::new(),
                inputs: BTreeMap::new(),
                outputs: BTreeMap::new(),
                notes: BTreeMap::new(),
                wall_seconds: 0.0,
            },
            started: Instant::now(),
        }
    }

    pub fn seed(&mut self, name: &str, seed: u64) {
        self.manifest.seeds.insert(name.to_string(), seed);
    }

    pub fn note(&mut self, key: &str, value: impl Serialize) {
        if let Ok(v) = serde_json::to_value(value) {
            self.manifest.notes.insert(key.to_string(), v);
        }
    }

    pub fn input(&mut self, path: &Path) -> anyhow::Result<()> {
        let digest = digest_file(path)?;
        self.manifest
            .inputs
            .insert(path.display().to_string(), digest);
        Ok(())
    }

    pub fn output(&mut self, path: &Path) -> anyhow::Result<()> {
        let digest = digest_file(path)?;
        self.manifest
            .outputs
            .insert(path.display().to_string(), digest);
        Ok(())
    }

    pub fn write(mut self, path: &Path) -> anyhow::Result<RunManifest> {
        self.manifest.wall_seconds = self.started.elapsed().as_secs_f64();
        let text = serde_json::to_string_pretty(&self.manifest)?;
        fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))?;
        Ok(self.manifest)
    }
}

/// `model.ckpt` → `model.ckpt.<suffix>`.
pub fn sidecar(path: &Path, suffix: &str) -> std::path::PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".");
    name.push(suffix);
    path.with_file_name(name)
}
