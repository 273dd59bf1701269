//! Collaboration metrics over sealed trajectories.
//!
//! Every executed action counts as a step for its actor, terminal actions
//! included. Interventions are the reject/pause takeovers, including those
//! where the human resumed without acting; hand-overs caused by a policy
//! failure are not interventions. A success is agent-driven when the last
//! step was the agent's; overrides can make a run successful without a
//! terminal action, so the terminal action itself is not required. Human-only runs report no intervention
//! count and no agent-driven flag.

mod report;

use serde::{Deserialize, Serialize};

use crate::clock::Millis;
use crate::history::{Actor, InterventionTrigger};
use crate::session::SessionMode;
use crate::store::{OutcomeOverride, Trajectory};

pub use report::{
    aggregate, render_json, render_table, render_trajectory_table, AggregateError, AggregateReport, AggregateRow,
    REPORT_SCHEMA_VERSION,
};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MetricsError {
    #[error("trajectory {0} is not sealed")]
    UnsealedTrajectory(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CollabMetrics {
    pub task_success: bool,
    pub agent_step_count: usize,
    pub human_step_count: usize,
    pub total_step_count: usize,
    pub human_intervention_count: Option<usize>,
    pub agent_driven_completion: Option<bool>,
}

pub fn compute_metrics(t: &Trajectory) -> Result<CollabMetrics, MetricsError> {
    if !t.sealed {
        return Err(MetricsError::UnsealedTrajectory(t.trajectory_id.clone()));
    }
    let agent = t.steps.iter().filter(|s| s.actor == Actor::Agent).count();
    let human = t.steps.len() - agent;
    let task_success = t.task_success();
    let human_only = t.mode == SessionMode::HumanOnly;
    let interventions = t
        .segments
        .iter()
        .filter(|s| matches!(s.trigger, InterventionTrigger::Reject | InterventionTrigger::Pause))
        .count();
    Ok(CollabMetrics {
        task_success,
        agent_step_count: agent,
        human_step_count: human,
        total_step_count: agent + human,
        human_intervention_count: (!human_only).then_some(interventions),
        agent_driven_completion: (!human_only).then(|| task_success && ended_by_agent(t)),
    })
}

/// The actor of the last step ended the run. Autonomous runs have no
/// other actor, so an overridden success there is still the agent's.
fn ended_by_agent(t: &Trajectory) -> bool {
    t.mode == SessionMode::FullyAutonomous || t.steps.last().is_some_and(|s| s.actor == Actor::Agent)
}

/// Replaces the effective task outcome with `verdict`. The self-marked
/// value is never touched; each override is appended to the provenance
/// list, including ones that change nothing.
pub fn override_outcome(
    t: &mut Trajectory,
    verdict: bool,
    note: impl Into<String>,
    at: Millis,
) -> Result<(), MetricsError> {
    if !t.sealed {
        return Err(MetricsError::UnsealedTrajectory(t.trajectory_id.clone()));
    }
    let previous = t.task_success();
    t.outcome_provenance.push(OutcomeOverride {
        verdict,
        previous,
        changed: verdict != previous,
        note: note.into(),
        at,
    });
    Ok(())
}

/// Share of all steps taken by the human; `None` when there are no steps.
pub fn human_fraction(human_steps: f64, total_steps: f64) -> Option<f64> {
    (total_steps > 0.0).then(|| human_steps / total_steps)
}
