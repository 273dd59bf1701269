//! Next-action policies: an LLM-backed policy and a scripted stand-in.

mod backend;
mod llm;
mod prompt;
mod scripted;

use crate::action::Action;
use crate::history::AttributedStep;
use crate::observation::Observation;

pub use backend::{
    ApiKey, BackendError, BackendSettings, CannedBackend, ChatMessage, LlmBackend, OpenAiCompatibleBackend, Role,
};
pub use llm::LlmPolicy;
pub use prompt::{build_prompt, PromptBudget, PromptMessages, SYSTEM_PROMPT, SYSTEM_PROMPT_VERSION};
pub use scripted::ScriptedPolicy;

/// Everything a policy may look at when choosing the next action.
#[derive(Debug, Clone, Copy)]
pub struct PolicyContext<'a> {
    pub task: &'a str,
    pub history: &'a [AttributedStep],
    pub observation: &'a Observation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyReply {
    pub action: Action,
    pub rationale: String,
    pub raw_text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PolicyError {
    #[error("backend timed out")]
    BackendTimeout,
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("reply unparseable after retry: {0}")]
    UnparseableAfterRetry(String),
}

impl From<BackendError> for PolicyError {
    fn from(e: BackendError) -> Self {
        match e {
            BackendError::Timeout => PolicyError::BackendTimeout,
            other => PolicyError::BackendUnavailable(other.to_string()),
        }
    }
}

pub trait Policy: Send {
    /// Model backbone identifier; fixed for the policy's lifetime.
    fn model_id(&self) -> &str;

    fn next_action(&mut self, ctx: PolicyContext<'_>) -> Result<PolicyReply, PolicyError>;

    fn health_check(&self) -> Result<(), PolicyError> {
        Ok(())
    }
}

impl<P: Policy + ?Sized> Policy for Box<P> {
    fn model_id(&self) -> &str {
        (**self).model_id()
    }

    fn next_action(&mut self, ctx: PolicyContext<'_>) -> Result<PolicyReply, PolicyError> {
        (**self).next_action(ctx)
    }

    fn health_check(&self) -> Result<(), PolicyError> {
        (**self).health_check()
    }
}
