//! Wire messages. Each WebSocket text frame carries one JSON object:
//!
//! ```json
//! {"kind": "signal", "session_id": "s-1", "seq": 7, "payload": {"signal": "pause"}}
//! ```
//!
//! `seq` starts at 1 and strictly increases per direction. The full
//! message catalogue is in `PROTOCOL.md` next to this crate's manifest.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use tandem_core::action::ActionKind;
use tandem_core::clock::Millis;
use tandem_core::history::AttributedStep;
use tandem_core::metrics::CollabMetrics;
use tandem_core::observation::Observation;
use tandem_core::session::{Phase, SessionMode, Suggestion, Termination};
use tandem_core::store::FeedbackScope;

pub const PROTOCOL_VERSION: &str = "1.0";
pub const HEARTBEAT_INTERVAL_MS: u64 = 5_000;
/// A connection with no inbound traffic (pongs included) for this long is
/// treated as gone.
pub const IDLE_TIMEOUT_MS: u64 = 15_000;

/// Major component of a `major.minor` version string.
pub fn major_of(version: &str) -> Option<u32> {
    version.split('.').next()?.trim().parse().ok()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Hello,
    HelloAck,
    StartTask,
    Suggestion,
    Signal,
    RawEvent,
    HumanAction,
    StateUpdate,
    RequestSnapshot,
    Snapshot,
    Summary,
    SetModel,
    OverrideOutcome,
    Annotate,
    ExportRequest,
    Export,
    Error,
}

impl Kind {
    pub const ALL: [Kind; 17] = [
        Kind::Hello,
        Kind::HelloAck,
        Kind::StartTask,
        Kind::Suggestion,
        Kind::Signal,
        Kind::RawEvent,
        Kind::HumanAction,
        Kind::StateUpdate,
        Kind::RequestSnapshot,
        Kind::Snapshot,
        Kind::Summary,
        Kind::SetModel,
        Kind::OverrideOutcome,
        Kind::Annotate,
        Kind::ExportRequest,
        Kind::Export,
        Kind::Error,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Kind::Hello => "hello",
            Kind::HelloAck => "hello_ack",
            Kind::StartTask => "start_task",
            Kind::Suggestion => "suggestion",
            Kind::Signal => "signal",
            Kind::RawEvent => "raw_event",
            Kind::HumanAction => "human_action",
            Kind::StateUpdate => "state_update",
            Kind::RequestSnapshot => "request_snapshot",
            Kind::Snapshot => "snapshot",
            Kind::Summary => "summary",
            Kind::SetModel => "set_model",
            Kind::OverrideOutcome => "override_outcome",
            Kind::Annotate => "annotate",
            Kind::ExportRequest => "export_request",
            Kind::Export => "export",
            Kind::Error => "error",
        }
    }

    pub fn from_name(name: &str) -> Option<Kind> {
        Kind::ALL.into_iter().find(|k| k.as_str() == name)
    }
}

/// Envelope as it travels. `kind` stays a string so unknown kinds can be
/// answered with an error instead of failing to parse.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireMessage {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub session_id: Option<String>,
    pub seq: u64,
    #[serde(default)]
    pub payload: Value,
}

impl WireMessage {
    pub fn new(kind: Kind, session_id: Option<String>, payload: impl Serialize) -> Self {
        Self {
            kind: kind.as_str().to_string(),
            session_id,
            seq: 0,
            payload: serde_json::to_value(payload).expect("payloads serialize"),
        }
    }

    pub fn kind(&self) -> Option<Kind> {
        Kind::from_name(&self.kind)
    }

    pub fn to_text(&self) -> String {
        serde_json::to_string(self).expect("wire messages serialize")
    }

    pub fn payload_as<T: for<'de> Deserialize<'de>>(&self) -> Result<T, String> {
        let payload = if self.payload.is_null() { Value::Object(Default::default()) } else { self.payload.clone() };
        serde_json::from_value(payload).map_err(|e| e.to_string())
    }
}

// ----- client → engine ------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Hello {
    pub protocol_version: String,
    #[serde(default)]
    pub client: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StartTask {
    pub task: String,
    pub mode: SessionMode,
    /// Simulated site the session runs against.
    pub site: String,
    /// Backbone for this task; falls back to the connection's `set_model`
    /// choice, then the server default.
    #[serde(default)]
    pub model: Option<String>,
    #[serde(default)]
    pub countdown_ms: Option<u64>,
    #[serde(default)]
    pub max_steps: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WireSignal {
    Approve,
    Reject,
    Pause,
    Resume,
    Abort,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalPayload {
    pub signal: WireSignal,
    /// Suggestion the signal refers to; a mismatch with the pending one is
    /// reported as stale and ignored.
    #[serde(default)]
    pub suggestion_id: Option<u64>,
}

/// Explicit human terminal action. Only `finish`, `finish_with_answer` and
/// `failure` are accepted; everything else is captured as raw events.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HumanAction {
    pub action: String,
}

pub const HUMAN_ACTION_KINDS: [ActionKind; 3] = [ActionKind::Finish, ActionKind::FinishWithAnswer, ActionKind::Failure];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SetModel {
    pub model: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OverrideOutcomePayload {
    pub verdict: bool,
    #[serde(default)]
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatePayload {
    #[serde(flatten)]
    pub scope: FeedbackScope,
    pub judgment: bool,
    #[serde(default)]
    pub note: String,
}

// ----- engine → client ------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HelloAck {
    pub protocol_version: String,
    pub server: String,
    pub heartbeat_ms: u64,
    pub max_countdown_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuggestionPayload {
    #[serde(flatten)]
    pub suggestion: Suggestion,
    /// Call-grammar form of the action, e.g. `click(12)`.
    pub call: String,
    pub countdown_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateUpdate {
    pub phase: Phase,
    pub step_index: usize,
    /// Steps executed since the previous update, in order.
    pub new_steps: Vec<AttributedStep>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pending_suggestion: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub countdown_deadline: Option<Millis>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub termination: Option<Termination>,
    pub at: Millis,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotPayload {
    pub observation: Observation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub trajectory_id: String,
    pub task: String,
    pub mode: SessionMode,
    pub model_id: Option<String>,
    pub metrics: CollabMetrics,
    pub self_marked_success: bool,
    pub overrides: usize,
    pub feedback_entries: usize,
    pub termination: Option<Termination>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportPayload {
    pub file_name: String,
    pub media_type: String,
    pub content: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    UnknownKind,
    BadPayload,
    NotHandshaken,
    AlreadyHandshaken,
    VersionMismatch,
    OutOfOrderSeq,
    UnknownSession,
    NoSession,
    TaskRunning,
    ModelLocked,
    TaskNotFinished,
    BufferClosed,
    SignalOutOfPhase,
    StaleSuggestion,
    StartFailed,
    Internal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorPayload {
    pub code: ErrorCode,
    pub message: String,
    /// The connection is closed after a fatal error.
    pub fatal: bool,
    /// `seq` of the inbound message this answers, when there is one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub in_reply_to: Option<u64>,
}
