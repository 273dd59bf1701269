//! LLM-backed event transformation with a rule-engine fallback.

use tracing::warn;

use super::rules::{rule_transform_with, TransformConfig, TransformContext};
use super::RawHumanEvent;
use crate::action::{parse_action_list, Action};
use crate::policy::{ChatMessage, LlmBackend};

pub const TRANSFORM_PROMPT: &str = include_str!("../../assets/action_transform_prompt.txt");
pub const ACTION_SPACE: &str = include_str!("../../assets/action_space.txt");

const FORMAT_REMINDER: &str = "Your previous reply could not be parsed. Reply with only a JSON list of \
objects of the form {\"thought\": string, \"action\": string}, where each action is one of the \
availableActions written as name(args).";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransformPathTaken {
    Llm,
    RuleFallback,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransformOutcome {
    pub actions: Vec<Action>,
    pub path: TransformPathTaken,
    /// Why the fallback was taken, if it was.
    pub fallback_reason: Option<String>,
}

/// Fills the transformation prompt's two slots.
pub fn render_transform_prompt(events: &[RawHumanEvent]) -> String {
    let raw: Vec<String> =
        events.iter().map(|e| serde_json::to_string(e).expect("raw events always serialize")).collect();
    TRANSFORM_PROMPT
        .replace("{{ACTION_SPACE}}", &format!("\n{}", ACTION_SPACE.trim_end()))
        .replace("{{RAW_EVENTS}}", &format!("[{}]", raw.join(",\n")))
}

fn accept(actions: Vec<Action>) -> Vec<Action> {
    actions
        .into_iter()
        .filter(|a| {
            if a.is_terminal() {
                warn!(action = %a, "transformer emitted a terminal action; dropped");
            }
            !a.is_terminal() && a.validate().is_ok()
        })
        .map(Action::described)
        .collect()
}

pub fn llm_transform(
    events: &[RawHumanEvent],
    backend: &dyn LlmBackend,
    config: &TransformConfig,
    context: &TransformContext,
) -> TransformOutcome {
    let fallback = |reason: String| {
        warn!(%reason, "falling back to rule transform");
        TransformOutcome {
            actions: rule_transform_with(events, config, context),
            path: TransformPathTaken::RuleFallback,
            fallback_reason: Some(reason),
        }
    };
    if events.is_empty() {
        return TransformOutcome { actions: Vec::new(), path: TransformPathTaken::Llm, fallback_reason: None };
    }

    let mut messages = vec![ChatMessage::user(render_transform_prompt(events))];
    for attempt in 0..2 {
        let reply = match backend.chat(&messages) {
            Ok(reply) => reply,
            Err(e) => return fallback(format!("backend unavailable: {e}")),
        };
        match parse_action_list(&reply) {
            Ok(actions) => {
                return TransformOutcome {
                    actions: accept(actions),
                    path: TransformPathTaken::Llm,
                    fallback_reason: None,
                }
            }
            Err(e) if attempt == 0 => {
                warn!(error = %e, "unparseable transform reply, retrying once");
                messages.push(ChatMessage::assistant(reply));
                messages.push(ChatMessage::user(FORMAT_REMINDER));
            }
            Err(e) => return fallback(format!("unparseable after retry: {e}")),
        }
    }
    unreachable!("loop returns on every path of the second attempt")
}
