//! Prompt assembly for the LLM policy.
//!
//! History lines look like `3 [human] type(20, "x") | Type "x" into ...`.
//! When the rendered prompt exceeds the budget, the oldest agent steps are
//! folded into summary lines; human steps are always kept verbatim.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::backend::ChatMessage;
use crate::action::{serialize_action, OutcomeStatus};
use crate::events::ACTION_SPACE;
use crate::history::{Actor, AttributedStep};
use crate::observation::Observation;

const SYSTEM_TEMPLATE: &str = include_str!("../../assets/agent_system_prompt.txt");
pub const SYSTEM_PROMPT_VERSION: &str = "agent-system-prompt v1";

pub static SYSTEM_PROMPT: std::sync::LazyLock<String> =
    std::sync::LazyLock::new(|| SYSTEM_TEMPLATE.replace("{{ACTION_SPACE}}", ACTION_SPACE.trim_end()));

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PromptBudget {
    /// Upper bound on total prompt characters before agent steps get folded.
    pub max_chars: usize,
}

impl Default for PromptBudget {
    fn default() -> Self {
        Self { max_chars: 24_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptMessages {
    pub messages: Vec<ChatMessage>,
    /// Number of agent steps folded into summaries to fit the budget.
    pub summarized_steps: usize,
}

impl PromptMessages {
    pub fn char_len(&self) -> usize {
        self.messages.iter().map(|m| m.content.len()).sum()
    }
}

fn step_line(step: &AttributedStep) -> String {
    let mut line = format!("{} [{}] {}", step.index, step.actor, serialize_action(&step.action));
    if !step.action.description.is_empty() {
        let _ = write!(line, " | {}", step.action.description);
    }
    match step.outcome.status {
        OutcomeStatus::Executed => {}
        OutcomeStatus::NoEffect => line.push_str(" (no effect)"),
        OutcomeStatus::Error => {
            let _ = write!(line, " (error: {})", step.outcome.message.as_deref().unwrap_or(""));
        }
    }
    line
}

fn summary_line(steps: &[&AttributedStep]) -> String {
    let first = steps.first().map(|s| s.index).unwrap_or(0);
    let last = steps.last().map(|s| s.index).unwrap_or(0);
    let kinds: Vec<&str> = steps.iter().map(|s| s.action.kind().as_str()).collect();
    if first == last {
        format!("{first} [agent] (summarized) {}", kinds.join(", "))
    } else {
        format!("{first}-{last} [agent] (summarized) {}", kinds.join(", "))
    }
}

fn render_history(history: &[AttributedStep], folded: usize) -> String {
    if history.is_empty() {
        return "(no actions yet)\n".to_string();
    }
    let mut out = String::new();
    let mut remaining = folded;
    let mut pending: Vec<&AttributedStep> = Vec::new();
    for step in history {
        if remaining > 0 && step.actor == Actor::Agent {
            pending.push(step);
            remaining -= 1;
            continue;
        }
        if !pending.is_empty() {
            out.push_str(&summary_line(&pending));
            out.push('\n');
            pending.clear();
        }
        out.push_str(&step_line(step));
        out.push('\n');
    }
    if !pending.is_empty() {
        out.push_str(&summary_line(&pending));
        out.push('\n');
    }
    out
}

fn assemble(task: &str, history: &[AttributedStep], obs: &Observation, folded: usize) -> PromptMessages {
    let user = format!(
        "Task: {task}\n\nHistory:\n{}\nCurrent observation (step {}, url {}):\n{}\nReply with one JSON object.",
        render_history(history, folded),
        obs.step_index,
        obs.url,
        obs.ax_tree_text,
    );
    PromptMessages {
        messages: vec![ChatMessage::system(SYSTEM_PROMPT.as_str()), ChatMessage::user(user)],
        summarized_steps: folded,
    }
}

/// Deterministic prompt for one policy call.
pub fn build_prompt(task: &str, history: &[AttributedStep], obs: &Observation, budget: PromptBudget) -> PromptMessages {
    let agent_steps = history.iter().filter(|s| s.actor == Actor::Agent).count();
    let mut prompt = assemble(task, history, obs, 0);
    let mut folded = 0;
    while prompt.char_len() > budget.max_chars && folded < agent_steps {
        folded += 1;
        prompt = assemble(task, history, obs, folded);
    }
    prompt
}
