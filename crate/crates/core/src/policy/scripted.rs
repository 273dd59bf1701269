use super::{Policy, PolicyContext, PolicyError, PolicyReply};
use crate::action::{describe, serialize_reply, Action};

/// Replays a fixed action list. `@label` targets are bound against the
/// current observation; once the script runs out every call returns
/// `failure()`.
#[derive(Debug, Clone)]
pub struct ScriptedPolicy {
    model_id: String,
    script: Vec<Action>,
    cursor: usize,
}

impl ScriptedPolicy {
    pub fn new(model_id: impl Into<String>, script: Vec<Action>) -> Self {
        Self { model_id: model_id.into(), script, cursor: 0 }
    }

    pub fn remaining(&self) -> usize {
        self.script.len().saturating_sub(self.cursor)
    }
}

impl Policy for ScriptedPolicy {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn next_action(&mut self, ctx: PolicyContext<'_>) -> Result<PolicyReply, PolicyError> {
        let action = match self.script.get(self.cursor) {
            Some(a) => a.clone(),
            None => Action::failure().with_description("script exhausted"),
        };
        self.cursor += 1;
        let action = ctx.observation.snapshot.bind_labels(action);
        let rationale = if action.description.is_empty() { describe(&action) } else { action.description.clone() };
        let action = action.with_description(rationale.clone());
        Ok(PolicyReply { raw_text: serialize_reply(&action), action, rationale })
    }
}
