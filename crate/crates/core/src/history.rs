//! Executed-step records shared by the engine, policies, storage and metrics.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::action::{Action, ActionOutcome};
use crate::clock::Millis;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Actor {
    Agent,
    Human,
}

impl Actor {
    pub fn as_str(self) -> &'static str {
        match self {
            Actor::Agent => "agent",
            Actor::Human => "human",
        }
    }
}

impl fmt::Display for Actor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributedStep {
    pub index: usize,
    pub actor: Actor,
    pub action: Action,
    pub outcome: ActionOutcome,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rationale: Option<String>,
    /// Verbatim policy reply for agent steps.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_reply: Option<String>,
    /// Id of the suggestion this step executed; agent steps only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub suggestion_id: Option<u64>,
    pub timestamp: Millis,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterventionTrigger {
    Reject,
    Pause,
    /// Control handed to the human because the policy failed.
    Handover,
}

/// One period of human control. `step_count == 0` marks a trigger-only
/// intervention.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InterventionSegment {
    pub trigger: InterventionTrigger,
    /// Index the first human step of this segment has (or would have had).
    pub start_step: usize,
    pub step_count: usize,
    pub opened_at: Millis,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub closed_at: Option<Millis>,
}

impl InterventionSegment {
    pub fn is_trigger_only(&self) -> bool {
        self.step_count == 0
    }

    /// Inclusive index range of the segment's steps, if it has any.
    pub fn step_range(&self) -> Option<std::ops::RangeInclusive<usize>> {
        (self.step_count > 0).then(|| self.start_step..=self.start_step + self.step_count - 1)
    }
}
