//! Canonical action space shared by the agent and the human.
//!
//! Every executed step in a session, whoever produced it, is one of the nine
//! [`ActionKind`]s below. Payload completeness is enforced by the shape of
//! [`Command`]; the remaining value-level checks (non-empty ids, urls) live in
//! [`Action::validate`], which every construction path goes through.

mod parse;
mod validate;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use parse::{parse_action, parse_action_list, serialize_action, serialize_reply, ParseError};
pub use validate::{kind_allowed_on, validate_against_snapshot, ValidationError};

/// Reference to an interactive element inside one page snapshot.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ElementRef {
    pub node_id: String,
    /// Tag plus visible text, e.g. `link "Forums"`.
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub descriptor: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub locator_hint: Option<String>,
}

impl ElementRef {
    pub fn new(node_id: impl Into<String>) -> Self {
        Self { node_id: node_id.into(), descriptor: String::new(), locator_hint: None }
    }

    pub fn with_descriptor(mut self, descriptor: impl Into<String>) -> Self {
        self.descriptor = descriptor.into();
        self
    }

    /// Script-style reference by visible label (`@Label`), resolved against
    /// the current observation before execution.
    pub fn label(label: &str) -> Self {
        Self::new(format!("@{label}"))
    }

    pub fn label_reference(&self) -> Option<&str> {
        self.node_id.strip_prefix('@')
    }

    fn display_name(&self) -> String {
        if self.descriptor.is_empty() {
            format!("element {}", self.node_id)
        } else {
            self.descriptor.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Up,
    Down,
    Left,
    Right,
}

impl Direction {
    pub const ALL: [Direction; 4] = [Direction::Up, Direction::Down, Direction::Left, Direction::Right];

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Up => "up",
            Direction::Down => "down",
            Direction::Left => "left",
            Direction::Right => "right",
        }
    }

    pub fn opposite(self) -> Direction {
        match self {
            Direction::Up => Direction::Down,
            Direction::Down => Direction::Up,
            Direction::Left => Direction::Right,
            Direction::Right => Direction::Left,
        }
    }

    pub fn from_name(name: &str) -> Option<Direction> {
        Direction::ALL.into_iter().find(|d| d.as_str().eq_ignore_ascii_case(name.trim()))
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Payload-free discriminant of an action.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    Click,
    Hover,
    Type,
    Scroll,
    GotoUrl,
    GotoTab,
    FinishWithAnswer,
    Finish,
    Failure,
}

impl ActionKind {
    pub const ALL: [ActionKind; 9] = [
        ActionKind::Click,
        ActionKind::Hover,
        ActionKind::Type,
        ActionKind::Scroll,
        ActionKind::GotoUrl,
        ActionKind::GotoTab,
        ActionKind::FinishWithAnswer,
        ActionKind::Finish,
        ActionKind::Failure,
    ];

    pub fn is_terminal(self) -> bool {
        matches!(self, ActionKind::Finish | ActionKind::FinishWithAnswer | ActionKind::Failure)
    }

    pub fn takes_target(self) -> bool {
        matches!(self, ActionKind::Click | ActionKind::Hover | ActionKind::Type)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ActionKind::Click => "click",
            ActionKind::Hover => "hover",
            ActionKind::Type => "type",
            ActionKind::Scroll => "scroll",
            ActionKind::GotoUrl => "goto_url",
            ActionKind::GotoTab => "goto_tab",
            ActionKind::FinishWithAnswer => "finish_with_answer",
            ActionKind::Finish => "finish",
            ActionKind::Failure => "failure",
        }
    }
}

impl fmt::Display for ActionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Kind plus exactly the payload that kind requires.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Command {
    Click { target: ElementRef },
    Hover { target: ElementRef },
    Type { target: ElementRef, text: String },
    Scroll { direction: Direction },
    GotoUrl { url: String },
    GotoTab { tab_id: u32 },
    FinishWithAnswer { text: String },
    Finish,
    Failure,
}

impl Command {
    pub fn kind(&self) -> ActionKind {
        match self {
            Command::Click { .. } => ActionKind::Click,
            Command::Hover { .. } => ActionKind::Hover,
            Command::Type { .. } => ActionKind::Type,
            Command::Scroll { .. } => ActionKind::Scroll,
            Command::GotoUrl { .. } => ActionKind::GotoUrl,
            Command::GotoTab { .. } => ActionKind::GotoTab,
            Command::FinishWithAnswer { .. } => ActionKind::FinishWithAnswer,
            Command::Finish => ActionKind::Finish,
            Command::Failure => ActionKind::Failure,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ActionError {
    #[error("{0} requires a non-empty node id")]
    EmptyNodeId(ActionKind),
    #[error("goto_url requires a non-empty url")]
    EmptyUrl,
}

/// A canonical action with its natural-language gloss.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "ActionRepr")]
pub struct Action {
    #[serde(flatten)]
    pub command: Command,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
}

#[derive(Deserialize)]
struct ActionRepr {
    #[serde(flatten)]
    command: Command,
    #[serde(default)]
    description: String,
}

impl TryFrom<ActionRepr> for Action {
    type Error = ActionError;

    fn try_from(repr: ActionRepr) -> Result<Self, Self::Error> {
        let action = Action { command: repr.command, description: repr.description };
        action.validate()?;
        Ok(action)
    }
}

impl Action {
    pub fn new(command: Command) -> Self {
        Self { command, description: String::new() }
    }

    pub fn click(target: ElementRef) -> Self {
        Self::new(Command::Click { target })
    }

    pub fn hover(target: ElementRef) -> Self {
        Self::new(Command::Hover { target })
    }

    pub fn type_text(target: ElementRef, text: impl Into<String>) -> Self {
        Self::new(Command::Type { target, text: text.into() })
    }

    pub fn scroll(direction: Direction) -> Self {
        Self::new(Command::Scroll { direction })
    }

    pub fn goto_url(url: impl Into<String>) -> Self {
        Self::new(Command::GotoUrl { url: url.into() })
    }

    pub fn goto_tab(tab_id: u32) -> Self {
        Self::new(Command::GotoTab { tab_id })
    }

    pub fn finish_with_answer(text: impl Into<String>) -> Self {
        Self::new(Command::FinishWithAnswer { text: text.into() })
    }

    pub fn finish() -> Self {
        Self::new(Command::Finish)
    }

    pub fn failure() -> Self {
        Self::new(Command::Failure)
    }

    pub fn with_description(mut self, description: impl Into<String>) -> Self {
        self.description = description.into();
        self
    }

    pub fn kind(&self) -> ActionKind {
        self.command.kind()
    }

    pub fn is_terminal(&self) -> bool {
        self.kind().is_terminal()
    }

    pub fn target(&self) -> Option<&ElementRef> {
        match &self.command {
            Command::Click { target } | Command::Hover { target } | Command::Type { target, .. } => Some(target),
            _ => None,
        }
    }

    pub fn target_mut(&mut self) -> Option<&mut ElementRef> {
        match &mut self.command {
            Command::Click { target } | Command::Hover { target } | Command::Type { target, .. } => Some(target),
            _ => None,
        }
    }

    /// Kind-payload check shared by every construction site.
    pub fn validate(&self) -> Result<(), ActionError> {
        if let Some(target) = self.target() {
            if target.node_id.trim().is_empty() {
                return Err(ActionError::EmptyNodeId(self.kind()));
            }
        }
        if let Command::GotoUrl { url } = &self.command {
            if url.trim().is_empty() {
                return Err(ActionError::EmptyUrl);
            }
        }
        Ok(())
    }

    /// Fills in a generated description when none is present.
    pub fn described(mut self) -> Self {
        if self.description.trim().is_empty() {
            self.description = describe(&self);
        }
        self
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&serialize_action(self))
    }
}

/// Deterministic gloss derived from the action payload only.
pub fn describe(action: &Action) -> String {
    match &action.command {
        Command::Click { target } => format!("Click on {}", target.display_name()),
        Command::Hover { target } => format!("Hover over {}", target.display_name()),
        Command::Type { target, text } => {
            format!("Type \"{}\" into {}", text, target.display_name())
        }
        Command::Scroll { direction } => format!("Scroll the page {direction}"),
        Command::GotoUrl { url } => format!("Navigate to {url}"),
        Command::GotoTab { tab_id } => format!("Switch to tab {tab_id}"),
        Command::FinishWithAnswer { text } => format!("Finish the task with answer \"{text}\""),
        Command::Finish => "Mark the task as completed".to_string(),
        Command::Failure => "Mark the task as failed".to_string(),
    }
}

/// Outcome status of executing an action.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeStatus {
    Executed,
    NoEffect,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ActionOutcome {
    pub status: OutcomeStatus,
    pub resulting_observation_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

impl ActionOutcome {
    pub fn executed(observation_id: impl Into<String>) -> Self {
        Self { status: OutcomeStatus::Executed, resulting_observation_id: observation_id.into(), message: None }
    }

    pub fn no_effect(observation_id: impl Into<String>) -> Self {
        Self { status: OutcomeStatus::NoEffect, resulting_observation_id: observation_id.into(), message: None }
    }

    pub fn error(observation_id: impl Into<String>, message: impl Into<String>) -> Self {
        let mut message = message.into();
        if message.trim().is_empty() {
            message = "unspecified error".to_string();
        }
        Self { status: OutcomeStatus::Error, resulting_observation_id: observation_id.into(), message: Some(message) }
    }
}
