//! Preview jobs and their on-disk store.
//!
//! Each job lives in `<jobs_dir>/<id>/`: `state.json` is rewritten on every
//! status change, and a finished job adds `preview.png`, `preview.pfm` and
//! `report.json`. Jobs that were queued or running when the process stopped
//! are marked failed on the next start.

use gensss_core::ga::FitnessReport;
use gensss_core::material::MaterialType;
use gensss_core::render::RenderReport;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

pub const STATE_FILE: &str = "state.json";
pub const IMAGE_FILE: &str = "preview.png";
pub const PFM_FILE: &str = "preview.pfm";
pub const REPORT_FILE: &str = "report.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum JobStatus {
    Queued,
    Running,
    Done,
    Failed,
}

impl JobStatus {
    pub fn is_active(self) -> bool {
        matches!(self, JobStatus::Queued | JobStatus::Running)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobState {
    pub id: String,
    /// Submission order within the store.
    pub sequence: u64,
    pub status: JobStatus,
    pub progress: f64,
    pub material: String,
    #[serde(rename = "type")]
    pub material_type: MaterialType,
    pub k: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<RenderReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fitness: Option<FitnessReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub storage_bytes: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum JobStoreError {
    #[error("job store i/o on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("job state encoding: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unknown job `{0}`")]
    UnknownJob(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> JobStoreError + '_ {
    move |source| JobStoreError::Io { path: path.into(), source }
}

/// In-memory job table mirrored to disk.
#[derive(Debug)]
pub struct JobStore {
    dir: PathBuf,
    jobs: BTreeMap<String, JobState>,
    next_sequence: u64,
}

impl JobStore {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, JobStoreError> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        let mut store = JobStore { dir: dir.clone(), jobs: BTreeMap::new(), next_sequence: 0 };
        for entry in std::fs::read_dir(&dir).map_err(io_err(&dir))? {
            let path = entry.map_err(io_err(&dir))?.path().join(STATE_FILE);
            let Ok(bytes) = std::fs::read(&path) else { continue };
            let Ok(mut job) = serde_json::from_slice::<JobState>(&bytes) else { continue };
            if job.status.is_active() {
                job.status = JobStatus::Failed;
                job.error = Some("interrupted by a service restart".into());
                store.persist(&job)?;
            }
            store.next_sequence = store.next_sequence.max(job.sequence + 1);
            store.jobs.insert(job.id.clone(), job);
        }
        Ok(store)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn job_dir(&self, id: &str) -> PathBuf {
        self.dir.join(id)
    }

    pub fn get(&self, id: &str) -> Option<&JobState> {
        self.jobs.get(id)
    }

    pub fn len(&self) -> usize {
        self.jobs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.jobs.is_empty()
    }

    /// A queued or running job for the same choice, if any.
    pub fn active_for(&self, material: &str, material_type: MaterialType, k: usize) -> Option<&JobState> {
        self.jobs
            .values()
            .filter(|j| j.status.is_active() && j.material == material && j.material_type == material_type && j.k == k)
            .min_by_key(|j| j.sequence)
    }

    pub fn create(&mut self, material: &str, material_type: MaterialType, k: usize, seed: u64) -> Result<JobState, JobStoreError> {
        let job = JobState {
            id: uuid::Uuid::new_v4().simple().to_string(),
            sequence: self.next_sequence,
            status: JobStatus::Queued,
            progress: 0.0,
            material: material.into(),
            material_type,
            k,
            seed,
            result: None,
            fitness: None,
            storage_bytes: None,
            error: None,
        };
        self.next_sequence += 1;
        self.persist(&job)?;
        self.jobs.insert(job.id.clone(), job.clone());
        Ok(job)
    }

    /// Applies `f` and persists the result. Progress never decreases.
    pub fn update(&mut self, id: &str, f: impl FnOnce(&mut JobState)) -> Result<JobState, JobStoreError> {
        let job = self.jobs.get_mut(id).ok_or_else(|| JobStoreError::UnknownJob(id.into()))?;
        let before = job.progress;
        f(job);
        job.progress = job.progress.clamp(before, 1.0);
        let job = job.clone();
        self.persist(&job)?;
        Ok(job)
    }

    /// Progress-only update kept in memory; status changes persist it.
    pub fn set_progress(&mut self, id: &str, progress: f64) {
        if let Some(job) = self.jobs.get_mut(id) {
            if job.status == JobStatus::Running && progress > job.progress {
                job.progress = progress.min(1.0);
            }
        }
    }

    fn persist(&self, job: &JobState) -> Result<(), JobStoreError> {
        let dir = self.job_dir(&job.id);
        std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        let tmp = dir.join(format!("{STATE_FILE}.tmp"));
        std::fs::write(&tmp, serde_json::to_vec_pretty(job)?).map_err(io_err(&tmp))?;
        let path = dir.join(STATE_FILE);
        std::fs::rename(&tmp, &path).map_err(io_err(&path))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn restart_fails_interrupted_jobs_and_keeps_finished_ones() {
        let dir = tempfile::tempdir().unwrap();
        let (queued, done) = {
            let mut s = JobStore::open(dir.path()).unwrap();
            let a = s.create("Jade", MaterialType::Heterogeneous, 10, 1).unwrap();
            let b = s.create("Jade", MaterialType::Homogeneous, 1, 2).unwrap();
            s.update(&b.id, |j| {
                j.status = JobStatus::Done;
                j.progress = 1.0;
            })
            .unwrap();
            (a.id, b.id)
        };
        let s = JobStore::open(dir.path()).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.get(&queued).unwrap().status, JobStatus::Failed);
        assert!(s.get(&queued).unwrap().error.is_some());
        assert_eq!(s.get(&done).unwrap().status, JobStatus::Done);
        assert!(s.active_for("Jade", MaterialType::Heterogeneous, 10).is_none());
    }

    #[test]
    fn progress_is_monotone() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = JobStore::open(dir.path()).unwrap();
        let j = s.create("Jade", MaterialType::Heterogeneous, 5, 1).unwrap();
        s.update(&j.id, |j| j.status = JobStatus::Running).unwrap();
        s.set_progress(&j.id, 0.5);
        s.set_progress(&j.id, 0.2);
        assert_eq!(s.get(&j.id).unwrap().progress, 0.5);
        let after = s.update(&j.id, |j| j.progress = 0.1).unwrap();
        assert_eq!(after.progress, 0.5);
    }
}
