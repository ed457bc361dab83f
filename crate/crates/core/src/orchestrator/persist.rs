use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{InstanceSpec, OrchestratorError, SnapshotRef};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub(super) struct Record {
    pub spec: InstanceSpec,
    pub snapshot: SnapshotRef,
    pub last_reset_at_ms: u64,
    pub next_reset_at_ms: u64,
    #[serde(default)]
    pub reset_count: u64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub(super) struct Saved {
    pub instances: Vec<Record>,
}

pub(super) fn load(path: &Path) -> Result<Saved, OrchestratorError> {
    match std::fs::read(path) {
        Ok(bytes) => serde_json::from_slice(&bytes).map_err(|e| OrchestratorError::State(e.to_string())),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Saved::default()),
        Err(e) => Err(OrchestratorError::State(e.to_string())),
    }
}

/// Write-then-rename so a crash never leaves a truncated file.
pub(super) fn save(path: &Path, saved: &Saved) -> Result<(), OrchestratorError> {
    let tmp = path.with_extension("json.tmp");
    let bytes = serde_json::to_vec_pretty(saved).expect("state serialises");
    std::fs::write(&tmp, bytes)
        .and_then(|_| std::fs::rename(&tmp, path))
        .map_err(|e| OrchestratorError::State(e.to_string()))
}
