//! In-memory job registry. One mutex guards every record, so status changes are serialized.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use tipping_core::dataset::sha256_hex;

use crate::error::{ApiError, ErrorBody};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum JobKind {
    GanTrain,
    Sweep,
    Dataset,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobStatus {
    Queued,
    Running,
    Done,
    Failed,
}

impl JobStatus {
    pub fn is_terminal(self) -> bool {
        matches!(self, JobStatus::Done | JobStatus::Failed)
    }
}

/// A file produced by a job; `path` is relative to the data root.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    pub path: String,
    pub sha256: String,
}

impl Artifact {
    pub fn from_file(root: &Path, relative: &str) -> std::io::Result<Self> {
        let bytes = std::fs::read(root.join(relative))?;
        Ok(Self { path: relative.to_string(), sha256: sha256_hex(&bytes) })
    }

    pub fn verify(&self, root: &Path) -> bool {
        std::fs::read(root.join(&self.path)).map(|b| sha256_hex(&b) == self.sha256).unwrap_or(false)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobRecord {
    pub id: String,
    pub kind: JobKind,
    /// Dataset or run id the job writes to.
    pub target: String,
    pub status: JobStatus,
    pub progress: f64,
    pub artifacts: Vec<Artifact>,
    pub result: Option<Value>,
    pub error: Option<ErrorBody>,
}

#[derive(Debug, Clone, Default)]
pub struct JobRegistry {
    inner: Arc<Mutex<BTreeMap<String, JobRecord>>>,
    next: Arc<AtomicU64>,
}

impl JobRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Register a queued job, refusing when a live job of the same kind already targets `target`.
    pub fn submit(&self, kind: JobKind, target: &str) -> Result<JobRecord, ApiError> {
        let mut jobs = self.inner.lock().expect("job registry poisoned");
        if let Some(busy) = jobs.values().find(|j| j.kind == kind && j.target == target && !j.status.is_terminal()) {
            return Err(ApiError::conflict(
                format!("job {} is already working on {target:?}", busy.id),
                serde_json::json!({ "job_id": busy.id, "target": target }),
            ));
        }
        let n = self.next.fetch_add(1, Ordering::SeqCst) + 1;
        let id = format!("job-{n:06}");
        let record = JobRecord {
            id: id.clone(),
            kind,
            target: target.to_string(),
            status: JobStatus::Queued,
            progress: 0.0,
            artifacts: Vec::new(),
            result: None,
            error: None,
        };
        jobs.insert(id, record.clone());
        Ok(record)
    }

    pub fn get(&self, id: &str) -> Option<JobRecord> {
        self.inner.lock().expect("job registry poisoned").get(id).cloned()
    }

    pub fn list(&self) -> Vec<JobRecord> {
        self.inner.lock().expect("job registry poisoned").values().cloned().collect()
    }

    pub fn is_active(&self, kind: JobKind, target: &str) -> bool {
        self.inner
            .lock()
            .expect("job registry poisoned")
            .values()
            .any(|j| j.kind == kind && j.target == target && !j.status.is_terminal())
    }

    fn update(&self, id: &str, f: impl FnOnce(&mut JobRecord)) -> bool {
        let mut jobs = self.inner.lock().expect("job registry poisoned");
        match jobs.get_mut(id) {
            Some(job) if !job.status.is_terminal() => {
                f(job);
                true
            }
            _ => false,
        }
    }

    pub fn start(&self, id: &str) -> bool {
        self.update(id, |j| j.status = JobStatus::Running)
    }

    /// Progress never moves backwards; values are clamped to [0, 1].
    pub fn progress(&self, id: &str, fraction: f64) -> bool {
        let fraction = if fraction.is_finite() { fraction.clamp(0.0, 1.0) } else { 0.0 };
        self.update(id, |j| j.progress = j.progress.max(fraction))
    }

    pub fn finish(&self, id: &str, artifacts: Vec<Artifact>, result: Value) -> bool {
        self.update(id, |j| {
            j.status = JobStatus::Done;
            j.progress = 1.0;
            j.artifacts = artifacts;
            j.result = Some(result);
        })
    }

    pub fn fail(&self, id: &str, error: ErrorBody) -> bool {
        self.update(id, |j| {
            j.status = JobStatus::Failed;
            j.error = Some(error);
        })
    }
}
