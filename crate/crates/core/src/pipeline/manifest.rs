//! Run manifest: one JSON line per stage.
//!
//! Each line records the stage name, a hash of the settings that stage used,
//! and SHA-256 digests of its inputs and outputs. Wall-clock durations go to a
//! separate timings file so that the manifest itself is reproducible.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{Error, Result};

use super::Stage;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub stage: Stage,
    pub config_hash: String,
    pub params: BTreeMap<String, String>,
    pub input_digest: String,
    pub output_digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingEntry {
    pub stage: Stage,
    pub duration_ms: u128,
}

pub fn hash_params(params: &BTreeMap<String, String>) -> String {
    let mut h = Sha256::new();
    for (k, v) in params {
        h.update(k.as_bytes());
        h.update(b"=");
        h.update(v.as_bytes());
        h.update(b"\n");
    }
    hex::encode(h.finalize())
}

pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Digest of several files: SHA-256 over `name digest` lines in the given order.
pub fn files_digest(paths: &[&Path]) -> Result<String> {
    if let [one] = paths {
        return file_digest(one);
    }
    let mut h = Sha256::new();
    for p in paths {
        let name = p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        h.update(name.as_bytes());
        h.update(b" ");
        h.update(file_digest(p)?.as_bytes());
        h.update(b"\n");
    }
    Ok(hex::encode(h.finalize()))
}

/// Replace the line for `entry.stage` (or add it), keeping lines in stage order.
pub fn upsert<T>(path: &Path, entry: T) -> Result<()>
where
    T: Serialize + for<'de> Deserialize<'de> + HasStage,
{
    let mut entries: Vec<T> = match std::fs::read_to_string(path) {
        Ok(text) => text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| serde_json::from_str(l).map_err(|e| Error::data(format!("{}: {e}", path.display()))))
            .collect::<Result<_>>()?,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
        Err(e) => return Err(Error::io(path, e)),
    };
    entries.retain(|e| e.stage() != entry.stage());
    entries.push(entry);
    entries.sort_by_key(|e| e.stage());
    let mut text = String::new();
    for e in &entries {
        text.push_str(&serde_json::to_string(e).map_err(|e| Error::data(e.to_string()))?);
        text.push('\n');
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub trait HasStage {
    fn stage(&self) -> Stage;
}

impl HasStage for ManifestEntry {
    fn stage(&self) -> Stage {
        self.stage
    }
}

impl HasStage for TimingEntry {
    fn stage(&self) -> Stage {
        self.stage
    }
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| Error::data(format!("{}: {e}", path.display()))))
        .collect()
}
