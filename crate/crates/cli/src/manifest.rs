//! Run manifest: what produced the files in an output directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::io::Window;

pub const FILE_NAME: &str = "manifest.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageRecord {
    pub started_unix_ms: u64,
    pub finished_unix_ms: u64,
    /// Output files relative to the output directory, sorted.
    pub outputs: Vec<String>,
    /// Display windows of exported PGM files, keyed by relative path.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub pgm_windows: BTreeMap<String, Window>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    /// SHA-256 of the effective configuration, output directory excluded.
    pub config_hash: String,
    pub seed: u64,
    pub network_seed: u64,
    #[serde(default)]
    pub realization_seeds: Vec<u64>,
    #[serde(default)]
    pub stages: BTreeMap<String, StageRecord>,
}

pub fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0)
}

pub fn config_hash(cfg: &ExperimentConfig) -> String {
    let canonical = ExperimentConfig { out_dir: None, ..cfg.clone() }.to_toml();
    let digest = Sha256::digest(canonical.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

impl RunManifest {
    pub fn new(cfg: &ExperimentConfig) -> Self {
        RunManifest {
            tool: "nkem".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config_hash: config_hash(cfg),
            seed: cfg.seed,
            network_seed: cfg.network_seed(),
            realization_seeds: Vec::new(),
            stages: BTreeMap::new(),
        }
    }

    /// Existing manifest of `out_dir` if it was written for the same config,
    /// otherwise a fresh one.
    pub fn open(out_dir: &Path, cfg: &ExperimentConfig) -> anyhow::Result<Self> {
        let path = out_dir.join(FILE_NAME);
        let fresh = Self::new(cfg);
        if !path.exists() {
            return Ok(fresh);
        }
        let old: RunManifest = toml::from_str(&std::fs::read_to_string(&path)?)?;
        if old.config_hash == fresh.config_hash {
            Ok(old)
        } else {
            log::warn!("{} was written for another configuration; starting a new manifest", path.display());
            Ok(fresh)
        }
    }

    pub fn save(&self, out_dir: &Path) -> anyhow::Result<()> {
        std::fs::write(out_dir.join(FILE_NAME), toml::to_string(self)?)?;
        Ok(())
    }

    /// Every listed output, across stages.
    pub fn all_outputs(&self) -> Vec<String> {
        let mut v: Vec<String> = self.stages.values().flat_map(|s| s.outputs.iter().cloned()).collect();
        v.sort();
        v
    }
}

/// Collects the files a stage writes.
#[derive(Debug)]
pub struct StageWriter {
    root: PathBuf,
    started: u64,
    outputs: Vec<String>,
    pgm_windows: BTreeMap<String, Window>,
}

impl StageWriter {
    pub fn new(root: &Path) -> Self {
        StageWriter { root: root.to_path_buf(), started: now_ms(), outputs: Vec::new(), pgm_windows: BTreeMap::new() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn relative(&self, path: &Path) -> String {
        let rel = path.strip_prefix(&self.root).unwrap_or(path);
        rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/")
    }

    pub fn record(&mut self, path: &Path) {
        self.outputs.push(self.relative(path));
    }

    pub fn record_pgm(&mut self, path: &Path, window: Window) {
        let rel = self.relative(path);
        self.pgm_windows.insert(rel.clone(), window);
        self.outputs.push(rel);
    }

    pub fn finish(mut self) -> StageRecord {
        self.outputs.sort();
        self.outputs.dedup();
        StageRecord {
            started_unix_ms: self.started,
            finished_unix_ms: now_ms(),
            outputs: self.outputs,
            pgm_windows: self.pgm_windows,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_ignores_output_dir_but_not_values() {
        let a = ExperimentConfig::desk();
        let b = ExperimentConfig { out_dir: Some("elsewhere".into()), ..a.clone() };
        let c = ExperimentConfig { seed: 7, ..a.clone() };
        assert_eq!(config_hash(&a), config_hash(&b));
        assert_ne!(config_hash(&a), config_hash(&c));
        assert_eq!(config_hash(&a).len(), 64);
    }

    #[test]
    fn manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig::desk();
        let mut m = RunManifest::new(&cfg);
        let mut w = StageWriter::new(dir.path());
        w.record(&dir.path().join("b").join("x.f64"));
        w.record_pgm(&dir.path().join("a.pgm"), Window { min: 0.0, max: 2.0 });
        m.stages.insert("phantom".into(), w.finish());
        m.save(dir.path()).unwrap();
        let back = RunManifest::open(dir.path(), &cfg).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.all_outputs(), vec!["a.pgm".to_string(), "b/x.f64".to_string()]);
        let other = ExperimentConfig { seed: 1, ..cfg };
        assert!(RunManifest::open(dir.path(), &other).unwrap().stages.is_empty());
    }
}
