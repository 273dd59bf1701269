//! Session configuration file.
//!
//! ```toml
//! countdown_ms = 5000        # at most 5000
//! max_steps = 30
//! transform_path = "rule"    # rule | llm
//! model = "gpt-4o"
//! endpoint = "http://localhost:4000/v1"
//! policy_retries = 0         # extra attempts after a policy error
//! backend_retries = 2        # transport-level retries inside the client
//! backend_timeout_ms = 60000
//! temperature = 0.0
//!
//! [transform]
//! micro_scroll_px = 40.0
//! reversal_window_ms = 500
//!
//! [prompt]
//! max_chars = 24000
//! ```
//!
//! API keys are never read from this file.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::events::TransformConfig;
use crate::policy::PromptBudget;

pub const MAX_COUNTDOWN_MS: u64 = 5000;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransformPath {
    #[default]
    Rule,
    Llm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionConfig {
    pub countdown_ms: u64,
    pub max_steps: usize,
    pub transform_path: TransformPath,
    pub model: Option<String>,
    pub endpoint: Option<String>,
    pub policy_retries: u32,
    pub backend_retries: u32,
    pub backend_timeout_ms: u64,
    pub temperature: f32,
    pub transform: TransformConfig,
    pub prompt: PromptBudget,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            countdown_ms: MAX_COUNTDOWN_MS,
            max_steps: 30,
            transform_path: TransformPath::Rule,
            model: None,
            endpoint: None,
            policy_retries: 0,
            backend_retries: 2,
            backend_timeout_ms: 60_000,
            temperature: 0.0,
            transform: TransformConfig::default(),
            prompt: PromptBudget::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ConfigError {
    #[error("{origin}: {message}")]
    Parse { origin: String, message: String },
    #[error("countdown_ms must be at most {MAX_COUNTDOWN_MS}, got {0}")]
    CountdownTooLong(u64),
    #[error("max_steps must be at least 1")]
    NoSteps,
}

impl SessionConfig {
    pub fn from_toml(text: &str, origin: &str) -> Result<Self, ConfigError> {
        let config: SessionConfig = toml::from_str(text)
            .map_err(|e| ConfigError::Parse { origin: origin.to_string(), message: e.to_string() })?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let origin = path.display().to_string();
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Parse { origin: origin.clone(), message: e.to_string() })?;
        Self::from_toml(&text, &origin)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.countdown_ms > MAX_COUNTDOWN_MS {
            return Err(ConfigError::CountdownTooLong(self.countdown_ms));
        }
        if self.max_steps == 0 {
            return Err(ConfigError::NoSteps);
        }
        Ok(())
    }

    /// Countdown actually armed for a suggestion.
    pub fn effective_countdown_ms(&self) -> u64 {
        self.countdown_ms.min(MAX_COUNTDOWN_MS)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_overrides() {
        let c = SessionConfig::from_toml(
            "max_steps = 12\ntransform_path = \"llm\"\n[transform]\nmicro_scroll_px = 25.0\n",
            "t",
        )
        .unwrap();
        assert_eq!(c.max_steps, 12);
        assert_eq!(c.countdown_ms, 5000);
        assert_eq!(c.transform_path, TransformPath::Llm);
        assert_eq!(c.transform.micro_scroll_px, 25.0);
        assert_eq!(c.transform.reversal_window_ms, 500);
    }

    #[test]
    fn long_countdown_rejected() {
        assert_eq!(SessionConfig::from_toml("countdown_ms = 9000", "t"), Err(ConfigError::CountdownTooLong(9000)));
    }

    #[test]
    fn api_key_is_not_a_config_key() {
        assert!(SessionConfig::from_toml("api_key = \"sk-1\"", "t").is_err());
    }
}
