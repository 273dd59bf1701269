//! The collaboration state machine.
//!
//! ```text
//!            propose                 timeout | approve
//! proposing ---------> awaiting_approval ----------------> executing --> proposing
//!     ^                      |                                  |
//!     |                      | reject | pause                   +--> terminated
//!     |  resume              v                                       (terminal step,
//!     +---------------- human_control                                 step limit,
//!                        (events buffered,                            abort)
//!                         human steps)
//! ```
//!
//! A [`Session`] is driven by one caller at a time. Every observable change is
//! pushed synchronously to the attached [`SessionSink`] before the operation
//! returns; if the sink fails the session seals itself with a storage
//! failure instead of running ahead of what has been persisted.

mod config;
mod harness;
mod sink;

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use tracing::{debug, warn};

use crate::action::{Action, ActionOutcome, ElementRef};
use crate::clock::{Clock, Millis, VirtualClock};
use crate::events::{llm_transform, rule_transform_with, BufferError, EventBuffer, RawHumanEvent, TransformContext};
use crate::history::{Actor, AttributedStep, InterventionSegment, InterventionTrigger};
use crate::observation::Observation;
use crate::policy::{LlmBackend, Policy, PolicyContext, PolicyError, PolicyReply};
use crate::sim::Environment;
use crate::store::Trajectory;

pub use config::{ConfigError, SessionConfig, TransformPath, MAX_COUNTDOWN_MS};
pub use harness::{run_scripted, HumanMove, HumanScript, ScriptError};
pub use sink::{FanoutSink, MemorySink, NullSink, SessionEvent, SessionSink, SinkError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionMode {
    FullyAutonomous,
    Copilot,
    HumanOnly,
}

impl SessionMode {
    pub fn as_str(self) -> &'static str {
        match self {
            SessionMode::FullyAutonomous => "fully_autonomous",
            SessionMode::Copilot => "copilot",
            SessionMode::HumanOnly => "human_only",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name.replace('-', "_").as_str() {
            "fully_autonomous" | "autonomous" => Some(SessionMode::FullyAutonomous),
            "copilot" => Some(SessionMode::Copilot),
            "human_only" | "human" => Some(SessionMode::HumanOnly),
            _ => None,
        }
    }
}

impl std::fmt::Display for SessionMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Proposing,
    AwaitingApproval,
    Executing,
    HumanControl,
    Terminated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Signal {
    Timeout,
    Approve,
    Reject,
    Pause,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Suggestion {
    pub id: u64,
    pub action: Action,
    pub rationale: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_highlight: Option<ElementRef>,
    pub issued_at: Millis,
    pub deadline: Millis,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub raw_reply: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminationReason {
    /// A terminal action was executed.
    Finished,
    StepLimit,
    Aborted,
    Disconnected,
    PolicyFailure,
    StorageFailure,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Termination {
    pub reason: TerminationReason,
    /// Actor of the terminal step when `reason` is `finished`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub actor: Option<Actor>,
    pub at: Millis,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transition {
    pub from: Phase,
    pub to: Phase,
    pub steps_added: usize,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SessionError {
    #[error("task must not be empty")]
    EmptyTask,
    #[error("{0} sessions need a policy")]
    NoPolicy(SessionMode),
    #[error("no environment attached")]
    NoEnvironment,
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{operation} is not valid in phase {phase:?}")]
    SignalOutOfPhase { operation: &'static str, phase: Phase },
    #[error("{operation} is not available in {mode} mode")]
    NotInMode { operation: &'static str, mode: SessionMode },
    #[error("countdown has not expired yet ({remaining_ms} ms left)")]
    CountdownRunning { remaining_ms: Millis },
    #[error("policy failed: {error}")]
    Policy { error: PolicyError, now: Phase },
    #[error(transparent)]
    Buffer(#[from] BufferError),
    #[error("session is terminated")]
    Terminated,
}

pub struct SessionBuilder {
    task: String,
    mode: SessionMode,
    id: Option<String>,
    config: SessionConfig,
    policy: Option<Box<dyn Policy>>,
    environment: Option<Box<dyn Environment>>,
    clock: Option<Arc<dyn Clock>>,
    sink: Option<Box<dyn SessionSink>>,
    transform_backend: Option<Box<dyn LlmBackend>>,
}

impl SessionBuilder {
    pub fn id(mut self, id: impl Into<String>) -> Self {
        self.id = Some(id.into());
        self
    }

    pub fn config(mut self, config: SessionConfig) -> Self {
        self.config = config;
        self
    }

    pub fn policy(mut self, policy: impl Policy + 'static) -> Self {
        self.policy = Some(Box::new(policy));
        self
    }

    pub fn boxed_policy(mut self, policy: Box<dyn Policy>) -> Self {
        self.policy = Some(policy);
        self
    }

    pub fn environment(mut self, env: impl Environment + 'static) -> Self {
        self.environment = Some(Box::new(env));
        self
    }

    pub fn boxed_environment(mut self, env: Box<dyn Environment>) -> Self {
        self.environment = Some(env);
        self
    }

    pub fn clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = Some(clock);
        self
    }

    pub fn sink(mut self, sink: impl SessionSink + 'static) -> Self {
        self.sink = Some(Box::new(sink));
        self
    }

    pub fn boxed_sink(mut self, sink: Box<dyn SessionSink>) -> Self {
        self.sink = Some(sink);
        self
    }

    /// Backend used when `transform_path = "llm"`.
    pub fn transform_backend(mut self, backend: Box<dyn LlmBackend>) -> Self {
        self.transform_backend = Some(backend);
        self
    }

    pub fn start(self) -> Result<Session, SessionError> {
        if self.task.trim().is_empty() {
            return Err(SessionError::EmptyTask);
        }
        self.config.validate()?;
        let env = self.environment.ok_or(SessionError::NoEnvironment)?;
        let policy = match self.mode {
            SessionMode::HumanOnly => None,
            mode => Some(self.policy.ok_or(SessionError::NoPolicy(mode))?),
        };
        let clock = self.clock.unwrap_or_else(|| Arc::new(VirtualClock::new()));
        let now = clock.now_ms();
        let id = self.id.unwrap_or_else(|| format!("session-{now}"));
        let observation = env.observe();

        let mut trajectory = Trajectory::new(&id, &self.task, self.mode, now);
        trajectory.model_id = policy.as_ref().map(|p| p.model_id().to_string());
        trajectory.environment = env.info();

        let mut session = Session {
            mode: self.mode,
            config: self.config,
            policy,
            env,
            clock,
            sink: self.sink.unwrap_or_else(|| Box::new(NullSink)),
            transform_backend: self.transform_backend,
            phase: Phase::Proposing,
            pending: None,
            next_suggestion_id: 0,
            buffer: EventBuffer::new(&id),
            capture_tab: None,
            open_segment: None,
            observation,
            storage_error: None,
            trajectory,
        };
        session.emit(SessionEvent::Started {
            session_id: id,
            task: session.trajectory.task.clone(),
            mode: session.mode,
            model_id: session.trajectory.model_id.clone(),
            environment: session.trajectory.environment.clone(),
            at: now,
        });
        if session.mode == SessionMode::HumanOnly {
            session.buffer.open();
            session.capture_tab = Some(session.observation.current_tab);
            session.set_phase(Phase::HumanControl);
        }
        session.check_storage();
        Ok(session)
    }
}

pub struct Session {
    mode: SessionMode,
    config: SessionConfig,
    policy: Option<Box<dyn Policy>>,
    env: Box<dyn Environment>,
    clock: Arc<dyn Clock>,
    sink: Box<dyn SessionSink>,
    transform_backend: Option<Box<dyn LlmBackend>>,
    phase: Phase,
    pending: Option<Suggestion>,
    next_suggestion_id: u64,
    buffer: EventBuffer,
    capture_tab: Option<u32>,
    open_segment: Option<usize>,
    observation: Observation,
    storage_error: Option<String>,
    trajectory: Trajectory,
}

impl std::fmt::Debug for Session {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Session")
            .field("id", &self.trajectory.trajectory_id)
            .field("mode", &self.mode)
            .field("phase", &self.phase)
            .field("steps", &self.trajectory.steps.len())
            .finish_non_exhaustive()
    }
}

impl Session {
    pub fn builder(task: impl Into<String>, mode: SessionMode) -> SessionBuilder {
        SessionBuilder {
            task: task.into(),
            mode,
            id: None,
            config: SessionConfig::default(),
            policy: None,
            environment: None,
            clock: None,
            sink: None,
            transform_backend: None,
        }
    }

    pub fn id(&self) -> &str {
        &self.trajectory.trajectory_id
    }

    pub fn mode(&self) -> SessionMode {
        self.mode
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn model_id(&self) -> Option<&str> {
        self.trajectory.model_id.as_deref()
    }

    pub fn pending(&self) -> Option<&Suggestion> {
        self.pending.as_ref()
    }

    pub fn countdown_deadline(&self) -> Option<Millis> {
        self.pending.as_ref().map(|s| s.deadline)
    }

    pub fn step_index(&self) -> usize {
        self.trajectory.steps.len()
    }

    pub fn steps(&self) -> &[AttributedStep] {
        &self.trajectory.steps
    }

    pub fn segments(&self) -> &[InterventionSegment] {
        &self.trajectory.segments
    }

    pub fn observation(&self) -> &Observation {
        &self.observation
    }

    pub fn buffered_events(&self) -> &[RawHumanEvent] {
        self.buffer.events()
    }

    pub fn is_terminated(&self) -> bool {
        self.phase == Phase::Terminated
    }

    pub fn now(&self) -> Millis {
        self.clock.now_ms()
    }

    /// The trajectory so far; sealed once the session has terminated.
    pub fn trajectory(&self) -> &Trajectory {
        &self.trajectory
    }

    pub fn into_trajectory(self) -> Trajectory {
        self.trajectory
    }

    // ----- internal plumbing -------------------------------------------------

    fn emit(&mut self, event: SessionEvent) {
        if self.storage_error.is_some() {
            return;
        }
        if let Err(e) = self.sink.record(&event) {
            warn!(session = %self.id(), error = %e, "session sink failed");
            self.storage_error = Some(e.to_string());
        }
    }

    fn set_phase(&mut self, to: Phase) {
        let from = self.phase;
        self.phase = to;
        let at = self.now();
        self.emit(SessionEvent::PhaseChanged { from, to, at });
    }

    fn check_storage(&mut self) {
        if let Some(detail) = self.storage_error.clone() {
            if self.phase != Phase::Terminated {
                self.seal(TerminationReason::StorageFailure, Some(detail));
            }
        }
    }

    fn ensure_live(&self) -> Result<(), SessionError> {
        if self.phase == Phase::Terminated {
            Err(SessionError::Terminated)
        } else {
            Ok(())
        }
    }

    fn out_of_phase(&self, operation: &'static str) -> SessionError {
        debug!(session = %self.id(), operation, phase = ?self.phase, "signal out of phase");
        SessionError::SignalOutOfPhase { operation, phase: self.phase }
    }

    /// Executes `action` for `actor` and appends the step. Environment errors
    /// become error-outcome steps.
    fn execute(&mut self, actor: Actor, action: Action, suggestion: Option<&Suggestion>, absorb: bool) {
        let action = self.observation.snapshot.bind_labels(action).described();
        let result = if absorb { self.env.absorb_human_action(&action) } else { self.env.apply(&action) };
        let outcome = match result {
            Ok((outcome, obs)) => {
                self.observation = obs;
                outcome
            }
            Err(e) => ActionOutcome::error(&self.observation.snapshot_id, e.to_string()),
        };
        let step = AttributedStep {
            index: self.trajectory.steps.len(),
            actor,
            action,
            outcome,
            rationale: suggestion.map(|s| s.rationale.clone()),
            raw_reply: suggestion.map(|s| s.raw_reply.clone()).filter(|r| !r.is_empty()),
            suggestion_id: suggestion.map(|s| s.id),
            timestamp: self.now(),
        };
        self.trajectory.steps.push(step.clone());
        self.observation.step_index = self.trajectory.steps.len();
        if actor == Actor::Human {
            if let Some(i) = self.open_segment {
                self.trajectory.segments[i].step_count += 1;
            }
        }
        self.emit(SessionEvent::StepRecorded(step));
    }

    /// Seals after a step when it was terminal or the step cap was hit.
    /// Returns true if the session is now terminated.
    fn after_step(&mut self) -> bool {
        let last = self.trajectory.steps.last().expect("called after a step");
        if last.action.is_terminal() {
            let actor = last.actor;
            self.seal_with_actor(TerminationReason::Finished, Some(actor), None);
            return true;
        }
        if self.trajectory.steps.len() >= self.config.max_steps {
            self.seal(TerminationReason::StepLimit, Some(format!("reached {} steps", self.config.max_steps)));
            return true;
        }
        false
    }

    fn open_intervention(&mut self, trigger: InterventionTrigger) {
        let segment = InterventionSegment {
            trigger,
            start_step: self.trajectory.steps.len(),
            step_count: 0,
            opened_at: self.now(),
            closed_at: None,
        };
        self.trajectory.segments.push(segment.clone());
        self.open_segment = Some(self.trajectory.segments.len() - 1);
        self.emit(SessionEvent::SegmentOpened(segment));
        self.buffer.open();
        self.capture_tab = Some(self.observation.current_tab);
        self.set_phase(Phase::HumanControl);
    }

    fn close_intervention(&mut self) {
        if let Some(i) = self.open_segment.take() {
            let now = self.now();
            let segment = &mut self.trajectory.segments[i];
            segment.closed_at = Some(now);
            let segment = segment.clone();
            self.emit(SessionEvent::SegmentClosed { index: i, segment });
        }
    }

    /// Transforms and executes buffered events as human steps. Stops early
    /// if a step terminates the session.
    fn flush_buffer(&mut self, close: bool) -> usize {
        let events = if close { self.buffer.close() } else { self.buffer.drain() };
        if events.is_empty() {
            return 0;
        }
        let context = TransformContext { current_tab: self.capture_tab };
        let actions = match (self.config.transform_path, &self.transform_backend) {
            (TransformPath::Llm, Some(backend)) => {
                llm_transform(&events, backend.as_ref(), &self.config.transform, &context).actions
            }
            (TransformPath::Llm, None) => {
                warn!(session = %self.id(), "llm transform selected without a backend; using rules");
                rule_transform_with(&events, &self.config.transform, &context)
            }
            (TransformPath::Rule, _) => rule_transform_with(&events, &self.config.transform, &context),
        };
        self.capture_tab = Some(self.observation.current_tab);
        let mut added = 0;
        for action in actions {
            self.execute(Actor::Human, action, None, true);
            added += 1;
            if self.after_step() {
                break;
            }
        }
        added
    }

    fn seal(&mut self, reason: TerminationReason, detail: Option<String>) {
        self.seal_with_actor(reason, None, detail);
    }

    fn seal_with_actor(&mut self, reason: TerminationReason, actor: Option<Actor>, detail: Option<String>) {
        if self.phase == Phase::Terminated {
            return;
        }
        if self.pending.take().is_some() {
            debug!(session = %self.id(), "pending suggestion dropped at termination");
        }
        self.close_intervention();
        if self.buffer.is_open() {
            let dropped = self.buffer.close();
            if !dropped.is_empty() {
                debug!(session = %self.id(), count = dropped.len(), "buffered events not transformed at termination");
            }
        }
        let at = self.now();
        let t = &mut self.trajectory;
        t.self_marked_success = reason == TerminationReason::Finished
            && t.steps.last().is_some_and(|s| s.action.kind() != crate::action::ActionKind::Failure);
        t.termination = Some(Termination { reason, actor, at, detail });
        t.task_flags = self.env.task_flags();
        t.sealed = true;
        self.set_phase(Phase::Terminated);
        let sealed = self.trajectory.clone();
        self.emit(SessionEvent::Sealed(Box::new(sealed)));
    }

    // ----- operations --------------------------------------------------------

    /// Asks the policy for its next action without changing phase. Use
    /// [`Session::present`] or [`Session::preempt`] afterwards.
    pub fn fetch_reply(&mut self) -> Result<PolicyReply, SessionError> {
        self.ensure_live()?;
        if self.mode == SessionMode::HumanOnly {
            return Err(SessionError::NotInMode { operation: "propose", mode: self.mode });
        }
        if self.phase != Phase::Proposing {
            return Err(self.out_of_phase("propose"));
        }
        let policy = self.policy.as_mut().expect("policy present outside human_only mode");
        let ctx = PolicyContext {
            task: &self.trajectory.task,
            history: &self.trajectory.steps,
            observation: &self.observation,
        };
        let mut attempt = 0;
        loop {
            match policy.next_action(ctx) {
                Ok(reply) => return Ok(reply),
                Err(e) if attempt < self.config.policy_retries => {
                    attempt += 1;
                    warn!(error = %e, attempt, "policy error, retrying");
                }
                Err(e) => return Err(self.policy_failed(e)),
            }
        }
    }

    fn policy_failed(&mut self, error: PolicyError) -> SessionError {
        warn!(session = %self.id(), %error, "policy failed");
        match self.mode {
            SessionMode::Copilot => self.open_intervention(InterventionTrigger::Handover),
            _ => self.seal(TerminationReason::PolicyFailure, Some(error.to_string())),
        }
        self.check_storage();
        SessionError::Policy { error, now: self.phase }
    }

    /// Presents a policy reply as the pending suggestion and arms the
    /// countdown. In autonomous mode the suggestion executes immediately.
    pub fn present(&mut self, reply: PolicyReply) -> Result<Suggestion, SessionError> {
        self.ensure_live()?;
        if self.phase != Phase::Proposing {
            return Err(self.out_of_phase("present"));
        }
        let now = self.now();
        let countdown = match self.mode {
            SessionMode::FullyAutonomous => 0,
            _ => self.config.effective_countdown_ms(),
        };
        let action = self.observation.snapshot.bind_labels(reply.action).described();
        let rationale = if reply.rationale.trim().is_empty() { action.description.clone() } else { reply.rationale };
        let suggestion = Suggestion {
            id: self.next_suggestion_id,
            target_highlight: action.target().cloned(),
            action,
            rationale,
            issued_at: now,
            deadline: now + countdown,
            raw_reply: reply.raw_text,
        };
        self.next_suggestion_id += 1;
        self.pending = Some(suggestion.clone());
        self.emit(SessionEvent::SuggestionIssued(suggestion.clone()));
        self.set_phase(Phase::AwaitingApproval);
        if self.mode == SessionMode::FullyAutonomous {
            self.resolve(Signal::Approve)?;
        }
        self.check_storage();
        Ok(suggestion)
    }

    /// `fetch_reply` followed by `present`.
    pub fn propose(&mut self) -> Result<Suggestion, SessionError> {
        let reply = self.fetch_reply()?;
        self.present(reply)
    }

    /// Human signal that arrived while a policy request was in flight: the
    /// reply (when it comes) is discarded and control passes to the human.
    pub fn preempt(&mut self, signal: Signal) -> Result<Transition, SessionError> {
        self.ensure_live()?;
        let trigger = match signal {
            Signal::Reject => InterventionTrigger::Reject,
            Signal::Pause => InterventionTrigger::Pause,
            _ => return Err(self.out_of_phase("preempt")),
        };
        if self.mode != SessionMode::Copilot {
            return Err(SessionError::NotInMode { operation: "preempt", mode: self.mode });
        }
        if self.phase != Phase::Proposing {
            return Err(self.out_of_phase("preempt"));
        }
        self.open_intervention(trigger);
        self.check_storage();
        Ok(Transition { from: Phase::Proposing, to: self.phase, steps_added: 0 })
    }

    /// Fires the countdown if it has expired.
    pub fn tick(&mut self) -> Option<Transition> {
        match &self.pending {
            Some(s) if self.phase == Phase::AwaitingApproval && self.now() >= s.deadline => {
                self.resolve(Signal::Timeout).ok()
            }
            _ => None,
        }
    }

    pub fn resolve(&mut self, signal: Signal) -> Result<Transition, SessionError> {
        self.ensure_live()?;
        if self.phase != Phase::AwaitingApproval {
            return Err(self.out_of_phase("resolve"));
        }
        let from = self.phase;
        match signal {
            Signal::Timeout | Signal::Approve => {
                let deadline = self.pending.as_ref().map(|s| s.deadline).unwrap_or(0);
                let now = self.now();
                if signal == Signal::Timeout && now < deadline {
                    return Err(SessionError::CountdownRunning { remaining_ms: deadline - now });
                }
                let suggestion = self.pending.take().expect("pending present while awaiting approval");
                self.set_phase(Phase::Executing);
                self.execute(Actor::Agent, suggestion.action.clone(), Some(&suggestion), false);
                if !self.after_step() {
                    self.set_phase(Phase::Proposing);
                }
                self.check_storage();
                Ok(Transition { from, to: self.phase, steps_added: 1 })
            }
            Signal::Reject | Signal::Pause => {
                if self.mode != SessionMode::Copilot {
                    return Err(SessionError::NotInMode { operation: "reject/pause", mode: self.mode });
                }
                let suggestion = self.pending.take().expect("pending present while awaiting approval");
                let at = self.now();
                self.emit(SessionEvent::SuggestionDiscarded { id: suggestion.id, signal, at });
                let trigger =
                    if signal == Signal::Reject { InterventionTrigger::Reject } else { InterventionTrigger::Pause };
                self.open_intervention(trigger);
                self.check_storage();
                Ok(Transition { from, to: self.phase, steps_added: 0 })
            }
        }
    }

    /// Hands control back to the agent. Buffered events become human steps.
    pub fn resume(&mut self) -> Result<Transition, SessionError> {
        self.ensure_live()?;
        if self.mode != SessionMode::Copilot {
            return Err(SessionError::NotInMode { operation: "resume", mode: self.mode });
        }
        if self.phase != Phase::HumanControl {
            return Err(self.out_of_phase("resume"));
        }
        let added = self.flush_buffer(true);
        if self.phase != Phase::Terminated {
            self.close_intervention();
            self.set_phase(Phase::Proposing);
        }
        self.check_storage();
        Ok(Transition { from: Phase::HumanControl, to: self.phase, steps_added: added })
    }

    /// Executes an action directly on behalf of the human.
    pub fn human_step(&mut self, action: Action) -> Result<Transition, SessionError> {
        self.ensure_live()?;
        if self.phase != Phase::HumanControl {
            return Err(self.out_of_phase("human_step"));
        }
        let mut added = self.flush_buffer(false);
        if self.phase != Phase::Terminated {
            self.execute(Actor::Human, action, None, false);
            added += 1;
            self.after_step();
        }
        self.check_storage();
        Ok(Transition { from: Phase::HumanControl, to: self.phase, steps_added: added })
    }

    /// Buffers a raw event captured while the human holds control.
    pub fn ingest_event(&mut self, event: RawHumanEvent) -> Result<(), SessionError> {
        self.ensure_live()?;
        match self.buffer.ingest(event.clone()) {
            Ok(()) => {
                self.trajectory.raw_events.push(event.clone());
                self.emit(SessionEvent::RawEvent(event));
                self.check_storage();
                Ok(())
            }
            Err(e) => {
                warn!(session = %self.id(), error = %e, "raw event dropped");
                Err(e.into())
            }
        }
    }

    /// Transforms buffered events into human steps without giving up control.
    pub fn flush_events(&mut self) -> Result<Transition, SessionError> {
        self.ensure_live()?;
        if self.phase != Phase::HumanControl {
            return Err(self.out_of_phase("flush_events"));
        }
        let added = self.flush_buffer(false);
        self.check_storage();
        Ok(Transition { from: Phase::HumanControl, to: self.phase, steps_added: added })
    }

    /// Ends the session without a terminal step.
    pub fn abort(&mut self, detail: Option<String>) -> Result<Transition, SessionError> {
        self.ensure_live()?;
        let from = self.phase;
        self.seal(TerminationReason::Aborted, detail);
        Ok(Transition { from, to: self.phase, steps_added: 0 })
    }

    /// Client went away. A pending suggestion is paused rather than
    /// executed, then the session is sealed.
    pub fn disconnect(&mut self) -> Result<Transition, SessionError> {
        self.ensure_live()?;
        let from = self.phase;
        if self.phase == Phase::AwaitingApproval && self.mode == SessionMode::Copilot {
            self.resolve(Signal::Pause)?;
        }
        self.seal(TerminationReason::Disconnected, None);
        Ok(Transition { from, to: self.phase, steps_added: 0 })
    }
}
