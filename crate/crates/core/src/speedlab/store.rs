//! On-disk result cache and run manifests.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::LabConfig;
use crate::error::{KppError, Result};
use crate::medium::MediumRealization;

pub const TOOL_VERSION: &str = concat!("kpp-core ", env!("CARGO_PKG_VERSION"));

/// JSON results keyed by the content hash of (realization bytes, operation, parameters).
/// Reads run concurrently; writes are serialized and land by rename.
pub struct ResultCache {
    dir: PathBuf,
    write_lock: Mutex<()>,
    hits: AtomicUsize,
    misses: AtomicUsize,
}

impl ResultCache {
    pub fn open(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(ResultCache {
            dir: dir.to_path_buf(),
            write_lock: Mutex::new(()),
            hits: 0.into(),
            misses: 0.into(),
        })
    }

    pub fn key(m: &MediumRealization, op: &str, params: &serde_json::Value) -> String {
        let mut hasher = Sha256::new();
        hasher.update(m.content_hash());
        hasher.update((op.len() as u64).to_le_bytes());
        hasher.update(op.as_bytes());
        hasher.update(params.to_string().as_bytes());
        hex::encode(hasher.finalize())
    }

    pub fn get_or_compute<T, F>(
        &self,
        m: &MediumRealization,
        op: &str,
        params: &serde_json::Value,
        f: F,
    ) -> Result<T>
    where
        T: Serialize + DeserializeOwned,
        F: FnOnce() -> Result<T>,
    {
        let path = self
            .dir
            .join(format!("{}.json", ResultCache::key(m, op, params)));
        if let Ok(text) = std::fs::read_to_string(&path) {
            if let Ok(v) = serde_json::from_str(&text) {
                self.hits.fetch_add(1, Ordering::Relaxed);
                return Ok(v);
            }
        }
        self.misses.fetch_add(1, Ordering::Relaxed);
        let value = f()?;
        let text = serde_json::to_string(&value)?;
        let _guard = self.write_lock.lock().unwrap_or_else(|e| e.into_inner());
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, text)?;
        std::fs::rename(&tmp, &path)?;
        Ok(value)
    }

    /// `(hits, misses)` since opening.
    pub fn stats(&self) -> (usize, usize) {
        (
            self.hits.load(Ordering::Relaxed),
            self.misses.load(Ordering::Relaxed),
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputFile {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    /// Subcommand or suite that produced the run.
    pub command: String,
    pub config: LabConfig,
    pub master_seed: u64,
    pub tool_version: String,
    /// Hash of command, configuration and tool version.
    pub config_hash: String,
    pub started: String,
    pub finished: String,
    pub outputs: Vec<OutputFile>,
    pub cache_hits: usize,
    pub cache_misses: usize,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn config_hash(command: &str, config: &LabConfig) -> Result<String> {
    let text = serde_json::to_string(config)?;
    Ok(sha256_hex(
        format!("{command}\n{TOOL_VERSION}\n{text}").as_bytes(),
    ))
}

/// Run directory name: the first 16 hex digits of the configuration hash.
pub fn run_id(command: &str, config: &LabConfig) -> Result<String> {
    Ok(config_hash(command, config)?[..16].to_string())
}

/// Write `files` under `<out>/<run-id>/` together with `manifest.json`.
pub fn write_run(
    out: &Path,
    command: &str,
    config: &LabConfig,
    started: chrono::DateTime<chrono::Utc>,
    files: &[(String, Vec<u8>)],
    cache: Option<(usize, usize)>,
) -> Result<(PathBuf, RunManifest)> {
    let id = run_id(command, config)?;
    let dir = out.join(&id);
    std::fs::create_dir_all(&dir)?;
    let mut outputs = Vec::with_capacity(files.len());
    for (name, bytes) in files {
        if name == "manifest.json" || name.contains("..") {
            return Err(KppError::Config(format!("reserved output name {name}")));
        }
        let path = dir.join(name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(&path, bytes)?;
        outputs.push(OutputFile {
            path: name.clone(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len() as u64,
        });
    }
    let (cache_hits, cache_misses) = cache.unwrap_or((0, 0));
    let manifest = RunManifest {
        run_id: id,
        command: command.to_string(),
        config: config.clone(),
        master_seed: config.master_seed,
        tool_version: TOOL_VERSION.to_string(),
        config_hash: config_hash(command, config)?,
        started: started.to_rfc3339(),
        finished: chrono::Utc::now().to_rfc3339(),
        outputs,
        cache_hits,
        cache_misses,
    };
    std::fs::write(
        dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    Ok((dir, manifest))
}

/// Manifest of a run directory, with each listed output re-hashed.
/// Returns the names of outputs whose content no longer matches.
pub fn load_run(dir: &Path) -> Result<(RunManifest, Vec<String>)> {
    let manifest: RunManifest =
        serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json"))?)?;
    let mut stale = Vec::new();
    for f in &manifest.outputs {
        match std::fs::read(dir.join(&f.path)) {
            Ok(bytes) if sha256_hex(&bytes) == f.sha256 => {}
            _ => stale.push(f.path.clone()),
        }
    }
    Ok((manifest, stale))
}

/// Configuration of a `--config` file: a plain configuration, or the
/// `config` entry of a manifest for re-runs.
pub fn rerun_config(text: &str) -> Result<LabConfig> {
    let value: serde_json::Value = serde_json::from_str(text)?;
    let config = match value.get("config") {
        Some(inner) if value.get("run_id").is_some() => serde_json::from_value(inner.clone())?,
        _ => serde_json::from_value(value)?,
    };
    LabConfig::validate(&config)?;
    Ok(config)
}
