use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::clock::Millis;
use crate::events::RawHumanEvent;
use crate::history::{Actor, AttributedStep, InterventionSegment};
use crate::session::{SessionMode, Termination};
use crate::sim::EnvironmentInfo;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Judgment {
    pub judgment: bool,
    #[serde(default)]
    pub note: String,
    pub at: Millis,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "scope", rename_all = "snake_case")]
pub enum FeedbackScope {
    Step { index: usize },
    Task,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackEntry {
    #[serde(flatten)]
    pub scope: FeedbackScope,
    #[serde(flatten)]
    pub judgment: Judgment,
}

/// Step- and task-level judgments. The maps hold the latest judgment;
/// `audit` keeps every submission in order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackSet {
    #[serde(default)]
    pub step_level: BTreeMap<usize, Judgment>,
    #[serde(default)]
    pub task_level: Option<Judgment>,
    #[serde(default)]
    pub audit: Vec<FeedbackEntry>,
}

/// One user override of the task outcome.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeOverride {
    pub verdict: bool,
    /// Effective success before this override.
    pub previous: bool,
    pub changed: bool,
    #[serde(default)]
    pub note: String,
    pub at: Millis,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub schema_version: u32,
    pub trajectory_id: String,
    pub task: String,
    pub mode: SessionMode,
    #[serde(default)]
    pub model_id: Option<String>,
    #[serde(default)]
    pub environment: Option<EnvironmentInfo>,
    pub steps: Vec<AttributedStep>,
    #[serde(default)]
    pub raw_events: Vec<RawHumanEvent>,
    #[serde(default)]
    pub segments: Vec<InterventionSegment>,
    pub self_marked_success: bool,
    #[serde(default)]
    pub termination: Option<Termination>,
    #[serde(default)]
    pub outcome_provenance: Vec<OutcomeOverride>,
    #[serde(default)]
    pub feedback: FeedbackSet,
    /// Ground-truth markers reported by the environment at sealing time.
    #[serde(default)]
    pub task_flags: Vec<String>,
    pub created_at: Millis,
    pub sealed: bool,
}

impl Trajectory {
    pub fn new(
        trajectory_id: impl Into<String>,
        task: impl Into<String>,
        mode: SessionMode,
        created_at: Millis,
    ) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            trajectory_id: trajectory_id.into(),
            task: task.into(),
            mode,
            model_id: None,
            environment: None,
            steps: Vec::new(),
            raw_events: Vec::new(),
            segments: Vec::new(),
            self_marked_success: false,
            termination: None,
            outcome_provenance: Vec::new(),
            feedback: FeedbackSet::default(),
            task_flags: Vec::new(),
            created_at,
            sealed: false,
        }
    }

    /// Success after applying user overrides.
    pub fn task_success(&self) -> bool {
        self.outcome_provenance.last().map_or(self.self_marked_success, |o| o.verdict)
    }

    /// Actor of the last step, if it is a terminal action.
    pub fn terminal_actor(&self) -> Option<Actor> {
        self.steps.last().filter(|s| s.action.is_terminal()).map(|s| s.actor)
    }
}
