//! Scripted human driver for simulator runs.
//!
//! A human script is plain text, one move per line:
//!
//! ```text
//! # comments and blank lines are ignored
//! wait                 let the current suggestion's countdown run out
//! approve 1200         approve 1200 ms after the suggestion was issued
//! reject               reject immediately (delay defaults to 0)
//! pause 300
//! resume               hand control back to the agent
//! event {"actionType":"click","nodeID":"7","timestamp":10}
//! click(@space)        any action call; executed directly as a human step
//! abort
//! ```
//!
//! While a suggestion is pending, only `wait`, `approve`, `reject`, `pause`
//! and `abort` are consumed; any other move (or an exhausted script) lets the
//! countdown expire. A signal whose delay is at or past the deadline arrives
//! too late: the suggestion auto-executes and the signal is dropped. In human
//! control, an exhausted script resumes (copilot) or aborts (human only).

use crate::action::{parse_action, Action, ParseError};
use crate::clock::VirtualClock;
use crate::events::RawHumanEvent;
use crate::session::{Phase, Session, SessionError, SessionMode, Signal};

#[derive(Debug, Clone, PartialEq)]
pub enum HumanMove {
    Wait,
    Approve(u64),
    Reject(u64),
    Pause(u64),
    Resume,
    Event(Box<RawHumanEvent>),
    Act(Action),
    Abort,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct HumanScript {
    pub moves: Vec<HumanMove>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScriptError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error("script did not terminate the session within {0} moves")]
    Runaway(usize),
}

impl HumanScript {
    pub fn new(moves: Vec<HumanMove>) -> Self {
        Self { moves }
    }

    pub fn parse(text: &str) -> Result<Self, ScriptError> {
        let mut moves = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| ScriptError::Parse { line: i + 1, message };
            let (word, rest) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
            let rest = rest.trim();
            let delay = || -> Result<u64, ScriptError> {
                if rest.is_empty() {
                    Ok(0)
                } else {
                    rest.parse().map_err(|_| err(format!("bad delay {rest:?}")))
                }
            };
            let mv = match word {
                "wait" if rest.is_empty() => HumanMove::Wait,
                "approve" => HumanMove::Approve(delay()?),
                "reject" => HumanMove::Reject(delay()?),
                "pause" => HumanMove::Pause(delay()?),
                "resume" if rest.is_empty() => HumanMove::Resume,
                "abort" if rest.is_empty() => HumanMove::Abort,
                "event" => {
                    HumanMove::Event(Box::new(serde_json::from_str(rest).map_err(|e| err(format!("bad event: {e}")))?))
                }
                _ => HumanMove::Act(parse_action(line).map_err(|e: ParseError| err(e.to_string()))?),
            };
            moves.push(mv);
        }
        Ok(Self { moves })
    }
}

const MAX_ITERATIONS: usize = 100_000;

fn delay_signal(mv: &HumanMove) -> Option<(Signal, u64)> {
    match mv {
        HumanMove::Approve(ms) => Some((Signal::Approve, *ms)),
        HumanMove::Reject(ms) => Some((Signal::Reject, *ms)),
        HumanMove::Pause(ms) => Some((Signal::Pause, *ms)),
        _ => None,
    }
}

/// Drives `session` to termination, advancing `clock` (which must be the
/// session's clock) as the script dictates.
pub fn run_scripted(session: &mut Session, script: &HumanScript, clock: &VirtualClock) -> Result<(), ScriptError> {
    let mut moves = script.moves.iter().peekable();
    for _ in 0..MAX_ITERATIONS {
        match session.phase() {
            Phase::Terminated => return Ok(()),
            Phase::Proposing => match session.propose() {
                Ok(_) | Err(SessionError::Policy { .. }) => {}
                Err(e) => return Err(e.into()),
            },
            Phase::AwaitingApproval => {
                let pending = session.pending().expect("awaiting approval has a suggestion").clone();
                let expire = |session: &mut Session| {
                    clock.advance_to(pending.deadline);
                    session.tick();
                };
                match moves.peek().copied() {
                    Some(HumanMove::Wait) => {
                        moves.next();
                        expire(session);
                    }
                    Some(HumanMove::Abort) => {
                        moves.next();
                        session.abort(Some("human aborted".into()))?;
                    }
                    Some(mv) if delay_signal(mv).is_some() => {
                        moves.next();
                        let (signal, ms) = delay_signal(mv).expect("checked above");
                        let at = pending.issued_at + ms;
                        if at >= pending.deadline {
                            expire(session);
                        } else {
                            clock.advance_to(at);
                            session.resolve(signal)?;
                        }
                    }
                    _ => expire(session),
                }
            }
            Phase::HumanControl => match moves.next() {
                Some(HumanMove::Event(e)) => {
                    clock.advance_to(e.timestamp);
                    session.ingest_event((**e).clone())?;
                }
                Some(HumanMove::Act(a)) => {
                    session.human_step(a.clone())?;
                }
                Some(HumanMove::Resume) if session.mode() == SessionMode::Copilot => {
                    session.resume()?;
                }
                Some(HumanMove::Abort) => {
                    session.abort(Some("human aborted".into()))?;
                }
                Some(_) => {}
                None if session.mode() == SessionMode::Copilot => {
                    session.resume()?;
                }
                None => {
                    session.abort(Some("human script exhausted".into()))?;
                }
            },
            Phase::Executing => unreachable!("executing is never observable between operations"),
        }
    }
    Err(ScriptError::Runaway(MAX_ITERATIONS))
}
