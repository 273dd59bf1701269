//! Trajectory persistence.
//!
//! Layout under a store root:
//!
//! ```text
//! manifest.json                 index of every session in the store
//! sessions/<id>/journal.jsonl   write-ahead event journal, one event per line
//! sessions/<id>/trajectory.json sealed trajectory, written at seal time
//! ```
//!
//! The journal is fsynced after every event, so a crash loses nothing the
//! engine has been told is recorded. A session without `trajectory.json` is
//! rebuilt from its journal by [`TrajectoryStore::recover`].

mod annotate;
mod disk;
mod export;
mod journal;
mod trajectory;

pub use annotate::{annotate, AnnotateError};
pub use disk::{ManifestEntry, Recovered, StoreError, StoreSink, TrajectoryStore};
pub use export::{export, import, ExportError, ImportError, EXPORT_EXTENSION, EXPORT_FORMAT, MEDIA_TYPE};
pub use journal::{read_journal, replay, JournalError, JournalSink};
pub use trajectory::*;
