use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use super::Trajectory;
use crate::history::Actor;
use crate::session::{SessionEvent, SessionSink, SinkError};

/// Appends one JSON line per event and syncs it to disk before returning.
#[derive(Debug)]
pub struct JournalSink {
    path: PathBuf,
    file: File,
}

impl JournalSink {
    pub fn create(path: impl Into<PathBuf>) -> std::io::Result<Self> {
        let path = path.into();
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok(Self { path, file })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

impl SessionSink for JournalSink {
    fn record(&mut self, event: &SessionEvent) -> Result<(), SinkError> {
        let mut line = serde_json::to_vec(event).map_err(|e| SinkError(e.to_string()))?;
        line.push(b'\n');
        self.file
            .write_all(&line)
            .and_then(|_| self.file.sync_data())
            .map_err(|e| SinkError(format!("{}: {e}", self.path.display())))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum JournalError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}:{line}: {message}")]
    Corrupt { path: String, line: usize, message: String },
}

/// Reads a journal. A final line that does not parse is a write torn by a
/// crash and is skipped; the flag in the result reports it. Damage anywhere
/// else is an error.
pub fn read_journal(path: &Path) -> Result<(Vec<SessionEvent>, bool), JournalError> {
    let display = path.display().to_string();
    let io = |source| JournalError::Io { path: display.clone(), source };
    let reader = BufReader::new(File::open(path).map_err(io)?);
    let lines: Vec<String> = reader.lines().collect::<Result<_, _>>().map_err(io)?;
    let mut events = Vec::with_capacity(lines.len());
    let mut torn = false;
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(line) {
            Ok(e) => events.push(e),
            Err(_) if i + 1 == lines.len() => torn = true,
            Err(e) => {
                return Err(JournalError::Corrupt { path: display, line: i + 1, message: e.to_string() });
            }
        }
    }
    Ok((events, torn))
}

/// Rebuilds the trajectory an event stream describes. Returns `None` when
/// the stream has no `started` event.
pub fn replay(events: &[SessionEvent]) -> Option<Trajectory> {
    let mut t: Option<Trajectory> = None;
    let mut open: Option<usize> = None;
    for event in events {
        match event {
            SessionEvent::Started { session_id, task, mode, model_id, environment, at } => {
                let mut fresh = Trajectory::new(session_id, task, *mode, *at);
                fresh.model_id = model_id.clone();
                fresh.environment = environment.clone();
                t = Some(fresh);
                open = None;
            }
            SessionEvent::Sealed(sealed) => t = Some((**sealed).clone()),
            _ => {
                let Some(t) = t.as_mut() else { continue };
                match event {
                    SessionEvent::StepRecorded(step) => {
                        if step.actor == Actor::Human {
                            if let Some(i) = open {
                                t.segments[i].step_count += 1;
                            }
                        }
                        t.steps.push(step.clone());
                    }
                    SessionEvent::RawEvent(e) => t.raw_events.push(e.clone()),
                    SessionEvent::SegmentOpened(s) => {
                        t.segments.push(s.clone());
                        open = Some(t.segments.len() - 1);
                    }
                    SessionEvent::SegmentClosed { index, segment } => {
                        if let Some(slot) = t.segments.get_mut(*index) {
                            *slot = segment.clone();
                        }
                        open = None;
                    }
                    _ => {}
                }
            }
        }
    }
    t
}
