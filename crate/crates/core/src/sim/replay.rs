//! Re-running a recorded trajectory against a site spec.

use std::sync::Arc;

use serde::Serialize;

use super::{Environment, SimEnvironment, SiteSpec};
use crate::action::ActionOutcome;
use crate::history::Actor;
use crate::store::Trajectory;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ReplayError {
    #[error("trajectory was recorded on site {recorded:?}, spec is {current:?}")]
    SiteMismatch { recorded: String, current: String },
    #[error("trajectory was recorded against {site} version {recorded}, spec is version {current}")]
    SpecVersionMismatch { site: String, recorded: u32, current: u32 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Divergence {
    pub step: usize,
    pub recorded: ActionOutcome,
    pub replayed: ActionOutcome,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ReplayReport {
    pub trajectory_id: String,
    pub steps_checked: usize,
    /// First step whose outcome differs; replay stops there.
    pub divergence: Option<Divergence>,
    pub final_state_hash: String,
}

impl ReplayReport {
    pub fn matches(&self) -> bool {
        self.divergence.is_none()
    }
}

/// Applies the recorded actions in order and compares each outcome,
/// including the resulting snapshot id, with the recording.
pub fn replay_trajectory(t: &Trajectory, spec: Arc<SiteSpec>) -> Result<ReplayReport, ReplayError> {
    if let Some(info) = &t.environment {
        if info.site != spec.name {
            return Err(ReplayError::SiteMismatch { recorded: info.site.clone(), current: spec.name.clone() });
        }
        if info.version != spec.version {
            return Err(ReplayError::SpecVersionMismatch {
                site: info.site.clone(),
                recorded: info.version,
                current: spec.version,
            });
        }
    }
    let mut env = SimEnvironment::new(spec);
    let mut report = ReplayReport {
        trajectory_id: t.trajectory_id.clone(),
        steps_checked: 0,
        divergence: None,
        final_state_hash: String::new(),
    };
    for step in &t.steps {
        let before = env.observe().snapshot_id;
        let result = match step.actor {
            Actor::Agent => env.apply(&step.action),
            Actor::Human => env.absorb_human_action(&step.action),
        };
        let replayed = match result {
            Ok((outcome, _)) => outcome,
            Err(e) => ActionOutcome::error(before, e.to_string()),
        };
        report.steps_checked += 1;
        if replayed != step.outcome {
            report.divergence = Some(Divergence { step: step.index, recorded: step.outcome.clone(), replayed });
            break;
        }
    }
    report.final_state_hash = env.state_hash();
    Ok(report)
}
