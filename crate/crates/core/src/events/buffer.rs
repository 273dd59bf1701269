use serde::{Deserialize, Serialize};

use super::{EventError, RawHumanEvent};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BufferError {
    #[error("event buffer for session {0} is closed")]
    BufferClosed(String),
    #[error(transparent)]
    InvalidEvent(#[from] EventError),
}

/// Events captured during one human-control period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventBuffer {
    pub session_id: String,
    events: Vec<RawHumanEvent>,
    open: bool,
}

impl EventBuffer {
    pub fn new(session_id: impl Into<String>) -> Self {
        Self { session_id: session_id.into(), events: Vec::new(), open: false }
    }

    pub fn is_open(&self) -> bool {
        self.open
    }

    pub fn events(&self) -> &[RawHumanEvent] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Opens a fresh capture period, discarding nothing: the previous
    /// period must have been drained with [`EventBuffer::close`].
    pub fn open(&mut self) {
        self.open = true;
    }

    /// Closes the buffer and hands back the captured events.
    pub fn close(&mut self) -> Vec<RawHumanEvent> {
        self.open = false;
        std::mem::take(&mut self.events)
    }

    /// Drains events without closing (used when the human finishes while
    /// still in control).
    pub fn drain(&mut self) -> Vec<RawHumanEvent> {
        std::mem::take(&mut self.events)
    }

    /// Appends an event. A late-arriving event with an older timestamp is
    /// placed after every event whose timestamp is not greater, so the
    /// buffer stays timestamp-nondecreasing and stable for equal stamps.
    pub fn ingest(&mut self, event: RawHumanEvent) -> Result<(), BufferError> {
        if !self.open {
            return Err(BufferError::BufferClosed(self.session_id.clone()));
        }
        event.validate()?;
        let at = self.events.partition_point(|e| e.timestamp <= event.timestamp);
        self.events.insert(at, event);
        Ok(())
    }
}
