use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use super::{Phase, SessionMode, Signal, Suggestion};
use crate::clock::Millis;
use crate::events::RawHumanEvent;
use crate::history::{AttributedStep, InterventionSegment};
use crate::sim::EnvironmentInfo;
use crate::store::Trajectory;

/// Everything a session reports outward, in the order it happens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum SessionEvent {
    Started {
        session_id: String,
        task: String,
        mode: SessionMode,
        model_id: Option<String>,
        environment: Option<EnvironmentInfo>,
        at: Millis,
    },
    PhaseChanged {
        from: Phase,
        to: Phase,
        at: Millis,
    },
    SuggestionIssued(Suggestion),
    SuggestionDiscarded {
        id: u64,
        signal: Signal,
        at: Millis,
    },
    StepRecorded(AttributedStep),
    RawEvent(RawHumanEvent),
    SegmentOpened(InterventionSegment),
    SegmentClosed {
        index: usize,
        segment: InterventionSegment,
    },
    Sealed(Box<Trajectory>),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{0}")]
pub struct SinkError(pub String);

/// Receives session events. `record` must not return until the event is as
/// durable as the sink promises to make it.
pub trait SessionSink: Send {
    fn record(&mut self, event: &SessionEvent) -> Result<(), SinkError>;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct NullSink;

impl SessionSink for NullSink {
    fn record(&mut self, _event: &SessionEvent) -> Result<(), SinkError> {
        Ok(())
    }
}

/// Keeps every event in memory; clones share the same log.
#[derive(Debug, Default, Clone)]
pub struct MemorySink {
    events: Arc<Mutex<Vec<SessionEvent>>>,
}

impl MemorySink {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn events(&self) -> Vec<SessionEvent> {
        self.events.lock().expect("sink poisoned").clone()
    }
}

impl SessionSink for MemorySink {
    fn record(&mut self, event: &SessionEvent) -> Result<(), SinkError> {
        self.events.lock().expect("sink poisoned").push(event.clone());
        Ok(())
    }
}

/// Forwards each event to every inner sink; the first failure wins.
#[derive(Default)]
pub struct FanoutSink {
    sinks: Vec<Box<dyn SessionSink>>,
}

impl FanoutSink {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, sink: impl SessionSink + 'static) -> Self {
        self.sinks.push(Box::new(sink));
        self
    }

    pub fn push(&mut self, sink: Box<dyn SessionSink>) {
        self.sinks.push(sink);
    }
}

impl SessionSink for FanoutSink {
    fn record(&mut self, event: &SessionEvent) -> Result<(), SinkError> {
        let mut first_error = None;
        for sink in &mut self.sinks {
            if let Err(e) = sink.record(event) {
                first_error.get_or_insert(e);
            }
        }
        first_error.map_or(Ok(()), Err)
    }
}
