//! Content-addressed artifact cache. Each pipeline stage owns a directory
//! keyed by a hash of everything that feeds it; a stage directory is valid
//! once its KEY file matches, and the KEY is committed only after the stage
//! finished, so interrupted stages are recomputed while their partial
//! artifacts stay inspectable.

use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::ExperimentError;

pub fn content_key(parts: &[&str]) -> String {
    let mut hasher = Sha256::new();
    for p in parts {
        hasher.update((p.len() as u64).to_le_bytes());
        hasher.update(p.as_bytes());
    }
    let digest = hasher.finalize();
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug)]
pub struct PipelineCache {
    root: PathBuf,
    pub hits: usize,
    pub misses: usize,
}

impl PipelineCache {
    pub fn new(root: &Path) -> Result<Self, ExperimentError> {
        fs::create_dir_all(root).map_err(|e| {
            ExperimentError::Internal(format!("cannot create cache root {}: {e}", root.display()))
        })?;
        Ok(Self { root: root.to_path_buf(), hits: 0, misses: 0 })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Resolve a stage directory and whether its contents are already valid
    /// for `key`. A stale directory is cleared.
    pub fn stage_dir(&mut self, stage: &str, key: &str) -> Result<(PathBuf, bool), ExperimentError> {
        let dir = self.root.join(stage);
        let key_path = dir.join("KEY");
        if let Ok(existing) = fs::read_to_string(&key_path) {
            if existing == key {
                self.hits += 1;
                return Ok((dir, true));
            }
            fs::remove_dir_all(&dir).map_err(|e| {
                ExperimentError::Internal(format!("cannot clear stale {}: {e}", dir.display()))
            })?;
        }
        fs::create_dir_all(&dir).map_err(|e| {
            ExperimentError::Internal(format!("cannot create {}: {e}", dir.display()))
        })?;
        self.misses += 1;
        Ok((dir, false))
    }

    /// Mark a stage directory complete for `key` (write-then-rename).
    pub fn commit(&self, dir: &Path, key: &str) -> Result<(), ExperimentError> {
        atomic_write(&dir.join("KEY"), key.as_bytes())
    }

    /// Read-only dependency lookup: the stage directory if it is complete
    /// and keyed as expected.
    pub fn peek(&self, stage: &str, key: &str) -> Option<PathBuf> {
        let dir = self.root.join(stage);
        match fs::read_to_string(dir.join("KEY")) {
            Ok(existing) if existing == key => Some(dir),
            _ => None,
        }
    }
}

/// Write a file atomically: write to a sibling temp path, then rename.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<(), ExperimentError> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)
        .map_err(|e| ExperimentError::Internal(format!("write {}: {e}", tmp.display())))?;
    fs::rename(&tmp, path)
        .map_err(|e| ExperimentError::Internal(format!("rename to {}: {e}", path.display())))
}
