use tracing::warn;

use super::backend::{ChatMessage, LlmBackend};
use super::prompt::{build_prompt, PromptBudget};
use super::{Policy, PolicyContext, PolicyError, PolicyReply};
use crate::action::{parse_action, Action, ParseError};

const FORMAT_REMINDER: &str = "That reply could not be used. Answer with exactly one JSON object \
{\"thought\": \"...\", \"action\": \"name(args)\"} where name(args) is one of the available actions.";

pub struct LlmPolicy {
    backend: Box<dyn LlmBackend>,
    budget: PromptBudget,
}

impl std::fmt::Debug for LlmPolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LlmPolicy").field("model_id", &self.backend.model_id()).field("budget", &self.budget).finish()
    }
}

impl LlmPolicy {
    pub fn new(backend: Box<dyn LlmBackend>) -> Self {
        Self { backend, budget: PromptBudget::default() }
    }

    pub fn with_budget(mut self, budget: PromptBudget) -> Self {
        self.budget = budget;
        self
    }

    fn interpret(raw: &str) -> Result<Action, ParseError> {
        let action = parse_action(raw)?;
        action.validate().map_err(|e| ParseError::MalformedArgs {
            action: action.kind().as_str().to_string(),
            reason: e.to_string(),
        })?;
        Ok(action)
    }
}

impl Policy for LlmPolicy {
    fn model_id(&self) -> &str {
        self.backend.model_id()
    }

    fn next_action(&mut self, ctx: PolicyContext<'_>) -> Result<PolicyReply, PolicyError> {
        let mut messages = build_prompt(ctx.task, ctx.history, ctx.observation, self.budget).messages;
        let mut last_error = String::new();
        for attempt in 0..2 {
            let raw = self.backend.chat(&messages)?;
            match Self::interpret(&raw) {
                Ok(action) => {
                    let action = ctx.observation.snapshot.bind_labels(action).described();
                    return Ok(PolicyReply { rationale: action.description.clone(), action, raw_text: raw });
                }
                Err(e) => {
                    warn!(error = %e, attempt, "unparseable policy reply");
                    last_error = e.to_string();
                    messages.push(ChatMessage::assistant(raw));
                    messages.push(ChatMessage::user(FORMAT_REMINDER));
                }
            }
        }
        Err(PolicyError::UnparseableAfterRetry(last_error))
    }

    fn health_check(&self) -> Result<(), PolicyError> {
        self.backend.health_check().map_err(PolicyError::from)
    }
}
