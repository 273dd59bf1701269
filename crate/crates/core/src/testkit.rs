//! Random trajectory generation for property tests. Enabled by the
//! `testkit` feature.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::action::{Action, ActionOutcome, Direction, ElementRef};
use crate::events::{EventType, RawHumanEvent};
use crate::history::{Actor, AttributedStep, InterventionSegment, InterventionTrigger};
use crate::session::{SessionMode, Termination, TerminationReason};
use crate::sim::EnvironmentInfo;
use crate::store::{FeedbackEntry, FeedbackScope, Judgment, OutcomeOverride, Trajectory};

fn random_action<R: Rng>(rng: &mut R) -> Action {
    let node = ElementRef::new(rng.gen_range(1..200u32).to_string()).with_descriptor("link 'Item'");
    match rng.gen_range(0..6) {
        0 => Action::click(node),
        1 => Action::hover(node),
        2 => {
            Action::type_text(node, ["Hello world", "lamp", "a \"quoted\" value", ""].choose(rng).unwrap().to_string())
        }
        3 => Action::scroll(*[Direction::Up, Direction::Down].choose(rng).unwrap()),
        4 => Action::goto_url("http://forum.test/forums"),
        _ => Action::goto_tab(rng.gen_range(0..3)),
    }
    .described()
}

fn random_outcome<R: Rng>(rng: &mut R, i: usize) -> ActionOutcome {
    let id = format!("g{i}-{:012x}", rng.gen::<u64>() & 0xffff_ffff_ffff);
    match rng.gen_range(0..10) {
        0 => ActionOutcome::no_effect(id),
        1 => ActionOutcome::error(id, "element 7 is not part of snapshot generation 3"),
        _ => ActionOutcome::executed(id),
    }
}

fn random_event<R: Rng>(rng: &mut R, ts: u64) -> RawHumanEvent {
    match rng.gen_range(0..4) {
        0 => {
            let mut e = RawHumanEvent::click(&rng.gen_range(1..50u32).to_string(), ts).named("Submit");
            e.coordinate_x = Some(rng.gen_range(0.0..1280.0));
            e.coordinate_y = Some(rng.gen_range(0.0..800.0));
            e
        }
        1 => RawHumanEvent::text_entry(EventType::Input, "12", "Hello world", ts),
        2 => RawHumanEvent::scroll(0.0, rng.gen_range(-400.0..400.0), ts),
        _ => RawHumanEvent::tab_update("http://forum.test/", rng.gen_range(0..3), ts),
    }
}

/// A sealed trajectory satisfying the engine's structural invariants:
/// contiguous indices, terminal actions only last, human steps exactly the
/// union of segment steps, and no human activity outside copilot and
/// human-only modes.
pub fn random_trajectory<R: Rng>(rng: &mut R, id: &str) -> Trajectory {
    let mode = *[SessionMode::FullyAutonomous, SessionMode::Copilot, SessionMode::HumanOnly].choose(rng).unwrap();
    let mut t = Trajectory::new(id, "Find the space forum", mode, rng.gen_range(0..1_000_000));
    if mode != SessionMode::HumanOnly {
        t.model_id = Some(["model-a", "model-b"].choose(rng).unwrap().to_string());
    }
    t.environment = Some(EnvironmentInfo { site: "mini-forum".into(), version: 1 });
    let mut now = t.created_at;
    let mut push = |t: &mut Trajectory, actor: Actor, action: Action, rng: &mut R| {
        now += rng.gen_range(1..6000);
        let i = t.steps.len();
        let agent = actor == Actor::Agent;
        t.steps.push(AttributedStep {
            index: i,
            actor,
            action,
            outcome: random_outcome(rng, i),
            rationale: agent.then(|| "Navigate toward the target page".to_string()),
            raw_reply: agent.then(|| "{\"thought\":\"go\",\"action\":\"scroll(down)\"}".to_string()),
            suggestion_id: agent.then_some(i as u64 + 1),
            timestamp: now,
        });
        now
    };
    let blocks = rng.gen_range(0..6);
    for _ in 0..blocks {
        match mode {
            SessionMode::HumanOnly => {
                for _ in 0..rng.gen_range(0..4) {
                    let a = random_action(rng);
                    push(&mut t, Actor::Human, a, rng);
                }
            }
            SessionMode::FullyAutonomous => {
                for _ in 0..rng.gen_range(0..4) {
                    let a = random_action(rng);
                    push(&mut t, Actor::Agent, a, rng);
                }
            }
            SessionMode::Copilot => {
                for _ in 0..rng.gen_range(0..4) {
                    let a = random_action(rng);
                    push(&mut t, Actor::Agent, a, rng);
                }
                if rng.gen_bool(0.6) {
                    let trigger =
                        *[InterventionTrigger::Reject, InterventionTrigger::Pause, InterventionTrigger::Handover]
                            .choose(rng)
                            .unwrap();
                    let start = t.steps.len();
                    let n = rng.gen_range(0..4);
                    for _ in 0..n {
                        let ts = t.steps.last().map_or(t.created_at, |s| s.timestamp);
                        let e = random_event(rng, ts);
                        t.raw_events.push(e);
                        let a = random_action(rng);
                        push(&mut t, Actor::Human, a, rng);
                    }
                    let opened_at = t.steps.get(start).or(t.steps.last()).map_or(t.created_at, |s| s.timestamp);
                    t.segments.push(InterventionSegment {
                        trigger,
                        start_step: start,
                        step_count: n,
                        opened_at,
                        closed_at: Some(opened_at + 10),
                    });
                }
            }
        }
    }
    let reason = match rng.gen_range(0..4) {
        0 => TerminationReason::StepLimit,
        1 => TerminationReason::Aborted,
        _ => TerminationReason::Finished,
    };
    let mut actor = None;
    if reason == TerminationReason::Finished {
        let who = match mode {
            SessionMode::FullyAutonomous => Actor::Agent,
            SessionMode::HumanOnly => Actor::Human,
            SessionMode::Copilot => *[Actor::Agent, Actor::Human].choose(rng).unwrap(),
        };
        let terminal = match rng.gen_range(0..3) {
            0 => Action::failure(),
            1 => Action::finish_with_answer("42"),
            _ => Action::finish(),
        }
        .described();
        if who == Actor::Human {
            let start = t.steps.len();
            push(&mut t, Actor::Human, terminal, rng);
            let open_at = t.steps[start].timestamp;
            t.segments.push(InterventionSegment {
                trigger: *[InterventionTrigger::Reject, InterventionTrigger::Pause].choose(rng).unwrap(),
                start_step: start,
                step_count: 1,
                opened_at: open_at,
                closed_at: Some(open_at),
            });
        } else {
            push(&mut t, Actor::Agent, terminal, rng);
        }
        actor = Some(who);
    }
    if mode == SessionMode::HumanOnly {
        t.segments.clear();
    }
    t.self_marked_success = reason == TerminationReason::Finished
        && t.steps.last().is_some_and(|s| s.action.kind() != crate::action::ActionKind::Failure);
    let end = t.steps.last().map_or(t.created_at, |s| s.timestamp) + 1;
    t.termination = Some(Termination { reason, actor, at: end, detail: None });
    t.sealed = true;
    for k in 0..rng.gen_range(0..3) {
        let verdict = rng.gen_bool(0.5);
        let previous = t.task_success();
        t.outcome_provenance.push(OutcomeOverride {
            verdict,
            previous,
            changed: verdict != previous,
            note: format!("review {k}"),
            at: end + k,
        });
    }
    if !t.steps.is_empty() && rng.gen_bool(0.5) {
        let index = rng.gen_range(0..t.steps.len());
        let judgment = Judgment { judgment: rng.gen_bool(0.5), note: "looks right".into(), at: end };
        t.feedback.step_level.insert(index, judgment.clone());
        t.feedback.audit.push(FeedbackEntry { scope: FeedbackScope::Step { index }, judgment });
    }
    if rng.gen_bool(0.3) {
        t.task_flags.push("comments_reached".into());
    }
    t
}
