use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use tracing::warn;

use super::journal::{read_journal, replay, JournalError, JournalSink};
use super::{annotate, AnnotateError, FeedbackEntry, Trajectory, SCHEMA_VERSION};
use crate::clock::Millis;
use crate::session::{SessionEvent, SessionMode, SessionSink, SinkError, Termination, TerminationReason};

const MANIFEST: &str = "manifest.json";
const SESSIONS: &str = "sessions";
const JOURNAL: &str = "journal.jsonl";
const TRAJECTORY: &str = "trajectory.json";

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Journal(#[from] JournalError),
    #[error("{path}: {message}")]
    Format { path: String, message: String },
    #[error("no session {0} in store")]
    UnknownSession(String),
    #[error("session {0} already exists")]
    Exists(String),
    #[error(transparent)]
    Annotate(#[from] AnnotateError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io { path: path.display().to_string(), source }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub trajectory_id: String,
    pub task: String,
    pub mode: SessionMode,
    #[serde(default)]
    pub model_id: Option<String>,
    pub created_at: Millis,
    pub sealed: bool,
    pub task_success: bool,
    pub step_count: usize,
}

impl ManifestEntry {
    fn of(t: &Trajectory) -> Self {
        Self {
            trajectory_id: t.trajectory_id.clone(),
            task: t.task.clone(),
            mode: t.mode,
            model_id: t.model_id.clone(),
            created_at: t.created_at,
            sealed: t.sealed,
            task_success: t.task_success(),
            step_count: t.steps.len(),
        }
    }
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct Manifest {
    schema_version: u32,
    entries: Vec<ManifestEntry>,
}

/// Result of rebuilding a session from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct Recovered {
    pub trajectory: Trajectory,
    /// False when the session never sealed and was rebuilt from its journal.
    pub complete: bool,
    /// The journal ended in a partially written line.
    pub torn_tail: bool,
}

/// One directory per session plus a manifest index. One writer per session.
#[derive(Debug, Clone)]
pub struct TrajectoryStore {
    root: PathBuf,
}

impl TrajectoryStore {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        let sessions = root.join(SESSIONS);
        fs::create_dir_all(&sessions).map_err(io_err(&sessions))?;
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn session_dir(&self, id: &str) -> PathBuf {
        self.root.join(SESSIONS).join(id)
    }

    pub fn trajectory_path(&self, id: &str) -> PathBuf {
        self.session_dir(id).join(TRAJECTORY)
    }

    /// Creates the session directory and returns a sink that journals every
    /// event and saves the trajectory when the session seals.
    pub fn create_session(&self, id: &str) -> Result<StoreSink, StoreError> {
        let dir = self.session_dir(id);
        if dir.join(JOURNAL).exists() {
            return Err(StoreError::Exists(id.to_string()));
        }
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        let path = dir.join(JOURNAL);
        let journal = JournalSink::create(&path).map_err(io_err(&path))?;
        Ok(StoreSink { store: self.clone(), journal })
    }

    /// Writes `trajectory.json` atomically and refreshes the manifest.
    pub fn save(&self, t: &Trajectory) -> Result<PathBuf, StoreError> {
        let dir = self.session_dir(&t.trajectory_id);
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        let path = dir.join(TRAJECTORY);
        write_atomic(&path, &serde_json::to_vec_pretty(t).expect("trajectories serialize"))?;
        self.update_manifest(ManifestEntry::of(t))?;
        Ok(path)
    }

    pub fn load(&self, id: &str) -> Result<Trajectory, StoreError> {
        let path = self.trajectory_path(id);
        if !path.exists() {
            return Err(StoreError::UnknownSession(id.to_string()));
        }
        let text = fs::read(&path).map_err(io_err(&path))?;
        serde_json::from_slice(&text)
            .map_err(|e| StoreError::Format { path: path.display().to_string(), message: e.to_string() })
    }

    /// Loads a session, rebuilding it from the journal when it never sealed.
    /// Unsealed sessions come back sealed as aborted so they can be scored.
    pub fn recover(&self, id: &str, now: Millis) -> Result<Recovered, StoreError> {
        let dir = self.session_dir(id);
        let journal = dir.join(JOURNAL);
        if dir.join(TRAJECTORY).exists() {
            return Ok(Recovered { trajectory: self.load(id)?, complete: true, torn_tail: false });
        }
        if !journal.exists() {
            return Err(StoreError::UnknownSession(id.to_string()));
        }
        let (events, torn_tail) = read_journal(&journal)?;
        let mut trajectory = replay(&events).ok_or_else(|| StoreError::Format {
            path: journal.display().to_string(),
            message: "journal has no start record".into(),
        })?;
        let complete = trajectory.sealed;
        if !complete {
            for s in trajectory.segments.iter_mut().filter(|s| s.closed_at.is_none()) {
                s.closed_at = Some(now);
            }
            trajectory.termination = Some(Termination {
                reason: TerminationReason::Aborted,
                actor: None,
                at: now,
                detail: Some("recovered from journal after interruption".into()),
            });
            trajectory.self_marked_success = false;
            trajectory.sealed = true;
        }
        Ok(Recovered { trajectory, complete, torn_tail })
    }

    pub fn manifest(&self) -> Result<Vec<ManifestEntry>, StoreError> {
        Ok(self.read_manifest()?.entries)
    }

    /// Session ids with a directory on disk, sorted.
    pub fn session_ids(&self) -> Result<Vec<String>, StoreError> {
        let dir = self.root.join(SESSIONS);
        let mut ids: Vec<String> = fs::read_dir(&dir)
            .map_err(io_err(&dir))?
            .filter_map(|e| e.ok())
            .filter(|e| e.path().is_dir())
            .filter_map(|e| e.file_name().into_string().ok())
            .collect();
        ids.sort();
        Ok(ids)
    }

    pub fn annotate(&self, id: &str, entry: FeedbackEntry) -> Result<Trajectory, StoreError> {
        let mut t = self.load(id)?;
        annotate(&mut t, entry)?;
        self.save(&t)?;
        Ok(t)
    }

    fn read_manifest(&self) -> Result<Manifest, StoreError> {
        let path = self.root.join(MANIFEST);
        if !path.exists() {
            return Ok(Manifest { schema_version: SCHEMA_VERSION, entries: Vec::new() });
        }
        let text = fs::read(&path).map_err(io_err(&path))?;
        serde_json::from_slice(&text)
            .map_err(|e| StoreError::Format { path: path.display().to_string(), message: e.to_string() })
    }

    fn update_manifest(&self, entry: ManifestEntry) -> Result<(), StoreError> {
        // Sessions seal from different threads; the manifest is read-modify-write.
        let _guard = MANIFEST_LOCK.lock().unwrap_or_else(|e| e.into_inner());
        let mut manifest = self.read_manifest()?;
        manifest.schema_version = SCHEMA_VERSION;
        match manifest.entries.iter_mut().find(|e| e.trajectory_id == entry.trajectory_id) {
            Some(slot) => *slot = entry,
            None => manifest.entries.push(entry),
        }
        let path = self.root.join(MANIFEST);
        write_atomic(&path, &serde_json::to_vec_pretty(&manifest).expect("manifest serializes"))
    }
}

static MANIFEST_LOCK: Mutex<()> = Mutex::new(());

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
    let tmp = path.with_extension("tmp");
    let mut f = fs::File::create(&tmp).map_err(io_err(&tmp))?;
    f.write_all(bytes).and_then(|_| f.sync_all()).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

/// Session sink backed by a store directory.
#[derive(Debug)]
pub struct StoreSink {
    store: TrajectoryStore,
    journal: JournalSink,
}

impl StoreSink {
    pub fn journal_path(&self) -> &Path {
        self.journal.path()
    }
}

impl SessionSink for StoreSink {
    fn record(&mut self, event: &SessionEvent) -> Result<(), SinkError> {
        self.journal.record(event)?;
        if let SessionEvent::Sealed(t) = event {
            self.store.save(t).map_err(|e| {
                warn!(error = %e, "saving sealed trajectory failed");
                SinkError(e.to_string())
            })?;
        }
        Ok(())
    }
}
