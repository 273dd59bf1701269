//! Per-connection protocol state, independent of the transport.
//!
//! The transport feeds inbound frames to [`Connection::receive_text`] and
//! drives the agent with [`Connection::fetch`] / [`Connection::commit`]. The
//! policy call happens between the two so inbound `pause`/`reject` frames
//! that arrive while it runs can preempt the reply.

use std::sync::{Arc, Mutex};

use serde::Serialize;
use tracing::{debug, info, warn};

use tandem_core::action::{parse_action, serialize_action};
use tandem_core::clock::Millis;
use tandem_core::events::RawHumanEvent;
use tandem_core::metrics::{compute_metrics, override_outcome};
use tandem_core::observation::Observation;
use tandem_core::policy::PolicyReply;
use tandem_core::session::{NullSink, Phase, Session, SessionError, SessionMode, SessionSink, Signal};
use tandem_core::sim::SimEnvironment;
use tandem_core::store::{annotate, export, FeedbackEntry, Judgment, Trajectory, EXPORT_EXTENSION, MEDIA_TYPE};

use crate::host::SessionHost;
use crate::outbox::Outbox;
use crate::protocol::*;

pub const DEFAULT_OUTBOX_CAPACITY: usize = 256;

/// What the transport should do after an inbound frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flow {
    Continue,
    /// A fatal error was queued; flush the outbox and close.
    Close,
}

pub struct Connection {
    host: Arc<SessionHost>,
    outbox: Arc<Mutex<Outbox>>,
    handshaken: bool,
    last_inbound_seq: u64,
    chosen_model: Option<String>,
    session: Option<Session>,
    finished: Option<Trajectory>,
    last_observation: Option<Observation>,
    in_flight: Option<PolicyReply>,
    sent_steps: usize,
}

impl std::fmt::Debug for Connection {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Connection")
            .field("handshaken", &self.handshaken)
            .field("last_inbound_seq", &self.last_inbound_seq)
            .field("session", &self.session)
            .finish_non_exhaustive()
    }
}

struct Reject {
    code: ErrorCode,
    message: String,
}

fn reject(code: ErrorCode, message: impl Into<String>) -> Reject {
    Reject { code, message: message.into() }
}

impl Connection {
    pub fn new(host: Arc<SessionHost>) -> Self {
        Self::with_outbox(host, Arc::new(Mutex::new(Outbox::new(DEFAULT_OUTBOX_CAPACITY))))
    }

    pub fn with_outbox(host: Arc<SessionHost>, outbox: Arc<Mutex<Outbox>>) -> Self {
        Self {
            host,
            outbox,
            handshaken: false,
            last_inbound_seq: 0,
            chosen_model: None,
            session: None,
            finished: None,
            last_observation: None,
            in_flight: None,
            sent_steps: 0,
        }
    }

    pub fn outbox(&self) -> Arc<Mutex<Outbox>> {
        self.outbox.clone()
    }

    pub fn take_outbound(&self) -> Vec<WireMessage> {
        self.outbox.lock().expect("outbox lock").drain()
    }

    pub fn session(&self) -> Option<&Session> {
        self.session.as_ref()
    }

    /// Trajectory of the last session that ended on this connection.
    pub fn finished(&self) -> Option<&Trajectory> {
        self.finished.as_ref()
    }

    fn session_id(&self) -> Option<String> {
        self.session
            .as_ref()
            .map(|s| s.id().to_string())
            .or_else(|| self.finished.as_ref().map(|t| t.trajectory_id.clone()))
    }

    fn push(&self, kind: Kind, payload: impl Serialize) {
        let msg = WireMessage::new(kind, self.session_id(), payload);
        self.outbox.lock().expect("outbox lock").push(msg);
    }

    fn push_error(&self, code: ErrorCode, message: impl Into<String>, fatal: bool, in_reply_to: Option<u64>) {
        let message = message.into();
        debug!(?code, %message, fatal, "protocol error");
        self.push(Kind::Error, ErrorPayload { code, message, fatal, in_reply_to });
    }

    // ----- inbound -----------------------------------------------------------

    pub fn receive_text(&mut self, text: &str) -> Flow {
        let msg: WireMessage = match serde_json::from_str(text) {
            Ok(m) => m,
            Err(e) => {
                self.push_error(ErrorCode::BadPayload, format!("not a wire message: {e}"), false, None);
                return Flow::Continue;
            }
        };
        self.receive(msg)
    }

    pub fn receive(&mut self, msg: WireMessage) -> Flow {
        let seq = msg.seq;
        if seq <= self.last_inbound_seq {
            let message = format!("seq {seq} after {}; resetting connection", self.last_inbound_seq);
            self.push_error(ErrorCode::OutOfOrderSeq, message, true, Some(seq));
            return Flow::Close;
        }
        self.last_inbound_seq = seq;
        let Some(kind) = msg.kind() else {
            self.push_error(ErrorCode::UnknownKind, format!("unknown kind {:?}", msg.kind), false, Some(seq));
            return Flow::Continue;
        };
        if !self.handshaken && kind != Kind::Hello {
            self.push_error(ErrorCode::NotHandshaken, "send hello first", false, Some(seq));
            return Flow::Continue;
        }
        let result = match kind {
            Kind::Hello => return self.on_hello(&msg),
            Kind::StartTask => self.on_start_task(&msg),
            Kind::SetModel => self.on_set_model(&msg),
            Kind::Signal => self.bound(&msg).and_then(|_| self.on_signal(&msg)),
            Kind::RawEvent => self.bound(&msg).and_then(|_| self.on_raw_event(&msg)),
            Kind::HumanAction => self.bound(&msg).and_then(|_| self.on_human_action(&msg)),
            Kind::RequestSnapshot => self.bound(&msg).and_then(|_| self.on_request_snapshot()),
            Kind::OverrideOutcome => self.bound(&msg).and_then(|_| self.on_override(&msg)),
            Kind::Annotate => self.bound(&msg).and_then(|_| self.on_annotate(&msg)),
            Kind::ExportRequest => self.bound(&msg).and_then(|_| self.on_export()),
            other => Err(reject(ErrorCode::UnknownKind, format!("{} is not accepted from clients", other.as_str()))),
        };
        if let Err(r) = result {
            self.push_error(r.code, r.message, false, Some(seq));
        }
        Flow::Continue
    }

    /// Checks that a session-bound message names the current session.
    fn bound(&self, msg: &WireMessage) -> Result<(), Reject> {
        let Some(current) = self.session_id() else {
            return Err(reject(ErrorCode::NoSession, "no session on this connection"));
        };
        match &msg.session_id {
            Some(id) if *id == current => Ok(()),
            Some(id) => Err(reject(ErrorCode::UnknownSession, format!("unknown session {id:?}"))),
            None => Err(reject(ErrorCode::UnknownSession, "session_id is required")),
        }
    }

    fn on_hello(&mut self, msg: &WireMessage) -> Flow {
        if self.handshaken {
            self.push_error(ErrorCode::AlreadyHandshaken, "hello already received", false, Some(msg.seq));
            return Flow::Continue;
        }
        let hello: Hello = match msg.payload_as() {
            Ok(h) => h,
            Err(e) => {
                self.push_error(ErrorCode::BadPayload, e, true, Some(msg.seq));
                return Flow::Close;
            }
        };
        if major_of(&hello.protocol_version) != major_of(PROTOCOL_VERSION) {
            let message = format!("client speaks {}, server speaks {PROTOCOL_VERSION}", hello.protocol_version);
            self.push_error(ErrorCode::VersionMismatch, message, true, Some(msg.seq));
            return Flow::Close;
        }
        self.handshaken = true;
        info!(client = ?hello.client, version = %hello.protocol_version, "client connected");
        self.push(
            Kind::HelloAck,
            HelloAck {
                protocol_version: PROTOCOL_VERSION.to_string(),
                server: self.host.server_name.clone(),
                heartbeat_ms: HEARTBEAT_INTERVAL_MS,
                max_countdown_ms: tandem_core::session::MAX_COUNTDOWN_MS,
            },
        );
        Flow::Continue
    }

    fn on_set_model(&mut self, msg: &WireMessage) -> Result<(), Reject> {
        let p: SetModel = msg.payload_as().map_err(|e| reject(ErrorCode::BadPayload, e))?;
        if self.session.is_some() {
            return Err(reject(ErrorCode::ModelLocked, "the model cannot change while a task is running"));
        }
        self.chosen_model = Some(p.model);
        Ok(())
    }

    fn on_start_task(&mut self, msg: &WireMessage) -> Result<(), Reject> {
        if self.session.is_some() {
            return Err(reject(ErrorCode::TaskRunning, "a task is already running on this connection"));
        }
        let p: StartTask = msg.payload_as().map_err(|e| reject(ErrorCode::BadPayload, e))?;
        let spec = self
            .host
            .site(&p.site)
            .ok_or_else(|| reject(ErrorCode::StartFailed, format!("unknown site {:?}", p.site)))?;
        let mut config = self.host.config.clone();
        if let Some(c) = p.countdown_ms {
            config.countdown_ms = c.min(tandem_core::session::MAX_COUNTDOWN_MS);
        }
        if let Some(n) = p.max_steps {
            config.max_steps = n;
        }
        let id = self.host.mint_session_id();
        let mut builder = Session::builder(p.task, p.mode)
            .id(&id)
            .config(config)
            .environment(SimEnvironment::new(spec))
            .clock(self.host.clock.clone());
        if p.mode != SessionMode::HumanOnly {
            let model = p
                .model
                .or_else(|| self.chosen_model.clone())
                .or_else(|| self.host.default_model.clone())
                .ok_or_else(|| reject(ErrorCode::StartFailed, "no model selected"))?;
            let policy = self.host.policies.create(&model).map_err(|e| reject(ErrorCode::StartFailed, e))?;
            builder = builder.boxed_policy(policy);
        }
        let sink: Box<dyn SessionSink> = match &self.host.store {
            Some(store) => {
                Box::new(store.create_session(&id).map_err(|e| reject(ErrorCode::StartFailed, e.to_string()))?)
            }
            None => Box::new(NullSink),
        };
        let session = builder.boxed_sink(sink).start().map_err(|e| reject(ErrorCode::StartFailed, e.to_string()))?;
        info!(session = %id, mode = %p.mode, "task started");
        self.session = Some(session);
        self.finished = None;
        self.in_flight = None;
        self.sent_steps = 0;
        self.after_transition();
        Ok(())
    }

    fn on_signal(&mut self, msg: &WireMessage) -> Result<(), Reject> {
        let p: SignalPayload = msg.payload_as().map_err(|e| reject(ErrorCode::BadPayload, e))?;
        let session = self
            .session
            .as_mut()
            .ok_or_else(|| reject(ErrorCode::SignalOutOfPhase, "the task has already finished"))?;
        let result = match p.signal {
            WireSignal::Approve | WireSignal::Reject | WireSignal::Pause
                if session.phase() == Phase::AwaitingApproval =>
            {
                let pending = session.pending().map(|s| s.id);
                if let (Some(claimed), Some(pending)) = (p.suggestion_id, pending) {
                    if claimed != pending {
                        return Err(reject(
                            ErrorCode::StaleSuggestion,
                            format!("suggestion {claimed} is not pending (current is {pending})"),
                        ));
                    }
                }
                let signal = match p.signal {
                    WireSignal::Approve => Signal::Approve,
                    WireSignal::Reject => Signal::Reject,
                    _ => Signal::Pause,
                };
                session.resolve(signal).map(|_| ())
            }
            WireSignal::Reject | WireSignal::Pause if session.phase() == Phase::Proposing => {
                let signal = if p.signal == WireSignal::Reject { Signal::Reject } else { Signal::Pause };
                let r = session.preempt(signal).map(|_| ());
                if r.is_ok() && self.in_flight.take().is_some() {
                    debug!("in-flight reply discarded");
                }
                r
            }
            WireSignal::Resume if session.mode() == SessionMode::Copilot && session.phase() != Phase::HumanControl => {
                debug!(phase = ?session.phase(), "duplicate resume ignored");
                return Ok(());
            }
            WireSignal::Resume => session.resume().map(|_| ()),
            WireSignal::Abort => session.abort(Some("aborted by user".into())).map(|_| ()),
            _ => Err(SessionError::SignalOutOfPhase { operation: "signal", phase: session.phase() }),
        };
        result.map_err(session_reject)?;
        self.after_transition();
        Ok(())
    }

    fn on_raw_event(&mut self, msg: &WireMessage) -> Result<(), Reject> {
        let event: RawHumanEvent = msg.payload_as().map_err(|e| reject(ErrorCode::BadPayload, e))?;
        let session = self.session.as_mut().ok_or_else(|| reject(ErrorCode::BufferClosed, "the task has finished"))?;
        session.ingest_event(event).map_err(session_reject)
    }

    fn on_human_action(&mut self, msg: &WireMessage) -> Result<(), Reject> {
        let p: HumanAction = msg.payload_as().map_err(|e| reject(ErrorCode::BadPayload, e))?;
        let action = parse_action(&p.action).map_err(|e| reject(ErrorCode::BadPayload, e.to_string()))?;
        if !HUMAN_ACTION_KINDS.contains(&action.kind()) {
            return Err(reject(
                ErrorCode::BadPayload,
                format!("{} is captured as raw events, not sent as a human_action", action.kind().as_str()),
            ));
        }
        let session = self
            .session
            .as_mut()
            .ok_or_else(|| reject(ErrorCode::SignalOutOfPhase, "the task has already finished"))?;
        session.human_step(action).map_err(session_reject)?;
        self.after_transition();
        Ok(())
    }

    fn on_request_snapshot(&mut self) -> Result<(), Reject> {
        let observation = match (&self.session, &self.last_observation) {
            (Some(s), _) => s.observation().clone(),
            (None, Some(o)) => o.clone(),
            (None, None) => return Err(reject(ErrorCode::NoSession, "no observation available")),
        };
        self.push(Kind::Snapshot, SnapshotPayload { observation });
        Ok(())
    }

    fn finished_mut(&mut self) -> Result<&mut Trajectory, Reject> {
        if self.session.is_some() {
            return Err(reject(ErrorCode::TaskNotFinished, "the task is still running"));
        }
        self.finished.as_mut().ok_or_else(|| reject(ErrorCode::NoSession, "no finished task"))
    }

    fn persist_finished(&self) -> Result<(), Reject> {
        if let (Some(store), Some(t)) = (&self.host.store, &self.finished) {
            store.save(t).map_err(|e| reject(ErrorCode::Internal, e.to_string()))?;
        }
        Ok(())
    }

    fn on_override(&mut self, msg: &WireMessage) -> Result<(), Reject> {
        let p: OverrideOutcomePayload = msg.payload_as().map_err(|e| reject(ErrorCode::BadPayload, e))?;
        let now = self.host.clock.now_ms();
        let t = self.finished_mut()?;
        override_outcome(t, p.verdict, p.note, now).map_err(|e| reject(ErrorCode::Internal, e.to_string()))?;
        self.persist_finished()?;
        self.push_summary();
        Ok(())
    }

    fn on_annotate(&mut self, msg: &WireMessage) -> Result<(), Reject> {
        let p: AnnotatePayload = msg.payload_as().map_err(|e| reject(ErrorCode::BadPayload, e))?;
        let at = self.host.clock.now_ms();
        let t = self.finished_mut()?;
        let entry = FeedbackEntry { scope: p.scope, judgment: Judgment { judgment: p.judgment, note: p.note, at } };
        annotate(t, entry).map_err(|e| reject(ErrorCode::BadPayload, e.to_string()))?;
        self.persist_finished()?;
        self.push_summary();
        Ok(())
    }

    fn on_export(&mut self) -> Result<(), Reject> {
        let t = self.finished_mut()?;
        let content = export(t).map_err(|e| reject(ErrorCode::Internal, e.to_string()))?;
        let file_name = format!("{}.{EXPORT_EXTENSION}", t.trajectory_id);
        self.push(Kind::Export, ExportPayload { file_name, media_type: MEDIA_TYPE.to_string(), content });
        Ok(())
    }

    // ----- agent driving -----------------------------------------------------

    /// The session is waiting for a policy reply.
    pub fn needs_proposal(&self) -> bool {
        self.in_flight.is_none()
            && self
                .session
                .as_ref()
                .is_some_and(|s| s.mode() != SessionMode::HumanOnly && s.phase() == Phase::Proposing)
    }

    /// Calls the policy. The reply is held until [`Connection::commit`].
    pub fn fetch(&mut self) {
        if !self.needs_proposal() {
            return;
        }
        let session = self.session.as_mut().expect("checked by needs_proposal");
        match session.fetch_reply() {
            Ok(reply) => self.in_flight = Some(reply),
            Err(e) => {
                warn!(error = %e, "policy request failed");
                self.after_transition();
            }
        }
    }

    /// Presents the held reply unless a signal preempted it meanwhile.
    pub fn commit(&mut self) {
        let Some(reply) = self.in_flight.take() else { return };
        let Some(session) = self.session.as_mut() else { return };
        if session.phase() != Phase::Proposing {
            debug!(phase = ?session.phase(), "reply dropped");
            return;
        }
        match session.present(reply) {
            Ok(suggestion) => {
                if session.mode() == SessionMode::Copilot {
                    let call = serialize_action(&suggestion.action);
                    let countdown_ms = suggestion.deadline - suggestion.issued_at;
                    self.push(Kind::Suggestion, SuggestionPayload { suggestion, call, countdown_ms });
                }
            }
            Err(e) => warn!(error = %e, "could not present reply"),
        }
        self.after_transition();
    }

    /// `fetch` then `commit`, for callers with nothing to interleave.
    pub fn step_agent(&mut self) {
        self.fetch();
        self.commit();
    }

    /// Fires an expired countdown.
    pub fn poll_timers(&mut self) {
        let fired = self.session.as_mut().and_then(|s| s.tick()).is_some();
        if fired {
            self.after_transition();
        }
    }

    /// Countdown deadline the transport should wake up for.
    pub fn next_deadline(&self) -> Option<Millis> {
        self.session.as_ref().and_then(|s| s.countdown_deadline())
    }

    /// The client went away.
    pub fn disconnect(&mut self) {
        self.in_flight = None;
        if let Some(s) = self.session.as_mut() {
            if let Err(e) = s.disconnect() {
                warn!(error = %e, "disconnect on finished session");
            }
            self.after_transition();
        }
    }

    // ----- outbound ----------------------------------------------------------

    fn after_transition(&mut self) {
        let Some(session) = self.session.as_ref() else { return };
        let steps = session.steps();
        let update = StateUpdate {
            phase: session.phase(),
            step_index: session.step_index(),
            new_steps: steps[self.sent_steps.min(steps.len())..].to_vec(),
            pending_suggestion: session.pending().map(|s| s.id),
            countdown_deadline: session.countdown_deadline(),
            termination: session.trajectory().termination.clone(),
            at: session.now(),
        };
        self.sent_steps = steps.len();
        self.push(Kind::StateUpdate, update);
        if session.is_terminated() {
            let session = self.session.take().expect("present");
            self.last_observation = Some(session.observation().clone());
            self.finished = Some(session.into_trajectory());
            self.in_flight = None;
            self.push_summary();
        }
    }

    fn push_summary(&self) {
        let Some(t) = &self.finished else { return };
        let metrics = match compute_metrics(t) {
            Ok(m) => m,
            Err(e) => {
                self.push_error(ErrorCode::Internal, e.to_string(), false, None);
                return;
            }
        };
        self.push(
            Kind::Summary,
            Summary {
                trajectory_id: t.trajectory_id.clone(),
                task: t.task.clone(),
                mode: t.mode,
                model_id: t.model_id.clone(),
                metrics,
                self_marked_success: t.self_marked_success,
                overrides: t.outcome_provenance.len(),
                feedback_entries: t.feedback.audit.len(),
                termination: t.termination.clone(),
            },
        );
    }
}

fn session_reject(e: SessionError) -> Reject {
    let code = match &e {
        SessionError::Buffer(tandem_core::events::BufferError::BufferClosed(_)) => ErrorCode::BufferClosed,
        SessionError::Buffer(_) => ErrorCode::BadPayload,
        SessionError::SignalOutOfPhase { .. }
        | SessionError::NotInMode { .. }
        | SessionError::CountdownRunning { .. }
        | SessionError::Terminated => ErrorCode::SignalOutOfPhase,
        _ => ErrorCode::Internal,
    };
    reject(code, e.to_string())
}
