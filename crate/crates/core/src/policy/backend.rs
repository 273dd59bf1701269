//! Chat-completions backends.
//!
//! [`OpenAiCompatibleBackend`] talks to any service exposing the
//! `/chat/completions` shape (a LiteLLM proxy, vLLM, OpenAI itself).

use std::fmt;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use tracing::warn;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self { role: Role::System, content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self { role: Role::User, content: content.into() }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self { role: Role::Assistant, content: content.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BackendError {
    #[error("backend timed out")]
    Timeout,
    #[error("backend unavailable: {0}")]
    Unavailable(String),
    #[error("backend returned status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed backend response: {0}")]
    Malformed(String),
}

impl BackendError {
    fn is_transient(&self) -> bool {
        match self {
            BackendError::Timeout | BackendError::Unavailable(_) => true,
            BackendError::Status { status, .. } => *status == 429 || *status >= 500,
            BackendError::Malformed(_) => false,
        }
    }
}

/// A chat model. `model_id` never changes for the lifetime of a backend.
pub trait LlmBackend: Send + Sync {
    fn model_id(&self) -> &str;
    fn chat(&self, messages: &[ChatMessage]) -> Result<String, BackendError>;
    fn health_check(&self) -> Result<(), BackendError> {
        Ok(())
    }
}

impl<T: LlmBackend + ?Sized> LlmBackend for std::sync::Arc<T> {
    fn model_id(&self) -> &str {
        (**self).model_id()
    }
    fn chat(&self, messages: &[ChatMessage]) -> Result<String, BackendError> {
        (**self).chat(messages)
    }
    fn health_check(&self) -> Result<(), BackendError> {
        (**self).health_check()
    }
}

impl<T: LlmBackend + ?Sized> LlmBackend for Box<T> {
    fn model_id(&self) -> &str {
        (**self).model_id()
    }
    fn chat(&self, messages: &[ChatMessage]) -> Result<String, BackendError> {
        (**self).chat(messages)
    }
    fn health_check(&self) -> Result<(), BackendError> {
        (**self).health_check()
    }
}

/// API key wrapper that never prints or serializes its contents.
#[derive(Clone, Default)]
pub struct ApiKey(String);

impl ApiKey {
    pub fn new(key: impl Into<String>) -> Self {
        Self(key.into())
    }

    pub fn from_env(var: &str) -> Option<Self> {
        std::env::var(var).ok().filter(|k| !k.is_empty()).map(Self)
    }

    pub fn expose(&self) -> &str {
        &self.0
    }
}

impl fmt::Debug for ApiKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("ApiKey(<redacted>)")
    }
}

#[derive(Debug, Clone)]
pub struct BackendSettings {
    pub endpoint: String,
    pub model_id: String,
    pub api_key: Option<ApiKey>,
    pub timeout: Duration,
    pub max_retries: u32,
    pub retry_backoff: Duration,
    pub temperature: f32,
}

impl BackendSettings {
    pub fn new(endpoint: impl Into<String>, model_id: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            model_id: model_id.into(),
            api_key: None,
            timeout: Duration::from_secs(60),
            max_retries: 2,
            retry_backoff: Duration::from_millis(250),
            temperature: 0.0,
        }
    }
}

#[derive(Serialize)]
struct CompletionRequest<'a> {
    model: &'a str,
    messages: &'a [ChatMessage],
    temperature: f32,
    stream: bool,
}

#[derive(Deserialize)]
struct CompletionResponse {
    choices: Vec<CompletionChoice>,
}

#[derive(Deserialize)]
struct CompletionChoice {
    message: CompletionMessage,
}

#[derive(Deserialize)]
struct CompletionMessage {
    #[serde(default)]
    content: Option<String>,
}

pub struct OpenAiCompatibleBackend {
    settings: BackendSettings,
    http: reqwest::blocking::Client,
}

impl fmt::Debug for OpenAiCompatibleBackend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OpenAiCompatibleBackend")
            .field("endpoint", &self.settings.endpoint)
            .field("model_id", &self.settings.model_id)
            .finish_non_exhaustive()
    }
}

impl OpenAiCompatibleBackend {
    pub fn new(settings: BackendSettings) -> Result<Self, BackendError> {
        let http = reqwest::blocking::Client::builder()
            .timeout(settings.timeout)
            .connect_timeout(settings.timeout.min(Duration::from_secs(10)))
            .build()
            .map_err(|e| BackendError::Unavailable(e.to_string()))?;
        Ok(Self { settings, http })
    }

    fn url(&self, path: &str) -> String {
        format!("{}/{}", self.settings.endpoint.trim_end_matches('/'), path)
    }

    fn request(&self, builder: reqwest::blocking::RequestBuilder) -> reqwest::blocking::RequestBuilder {
        match &self.settings.api_key {
            Some(key) => builder.bearer_auth(key.expose()),
            None => builder,
        }
    }

    fn map_transport(e: reqwest::Error) -> BackendError {
        if e.is_timeout() {
            BackendError::Timeout
        } else {
            BackendError::Unavailable(e.to_string())
        }
    }

    fn chat_once(&self, messages: &[ChatMessage]) -> Result<String, BackendError> {
        let body = CompletionRequest {
            model: &self.settings.model_id,
            messages,
            temperature: self.settings.temperature,
            stream: false,
        };
        let resp = self
            .request(self.http.post(self.url("chat/completions")))
            .json(&body)
            .send()
            .map_err(Self::map_transport)?;
        let status = resp.status();
        let text = resp.text().map_err(Self::map_transport)?;
        if !status.is_success() {
            return Err(BackendError::Status { status: status.as_u16(), body: text.chars().take(500).collect() });
        }
        let parsed: CompletionResponse =
            serde_json::from_str(&text).map_err(|e| BackendError::Malformed(e.to_string()))?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| BackendError::Malformed("response has no message content".into()))
    }
}

impl LlmBackend for OpenAiCompatibleBackend {
    fn model_id(&self) -> &str {
        &self.settings.model_id
    }

    fn chat(&self, messages: &[ChatMessage]) -> Result<String, BackendError> {
        let mut attempt = 0;
        loop {
            match self.chat_once(messages) {
                Ok(text) => return Ok(text),
                Err(e) if e.is_transient() && attempt < self.settings.max_retries => {
                    attempt += 1;
                    warn!(error = %e, attempt, "chat completion failed, retrying");
                    std::thread::sleep(self.settings.retry_backoff * attempt);
                }
                Err(e) => return Err(e),
            }
        }
    }

    fn health_check(&self) -> Result<(), BackendError> {
        let resp = self.request(self.http.get(self.url("models"))).send().map_err(Self::map_transport)?;
        if resp.status().is_server_error() {
            return Err(BackendError::Status { status: resp.status().as_u16(), body: String::new() });
        }
        Ok(())
    }
}

/// Backend that replays canned replies in order; handy for tests and for
/// offline runs. Once the replies run out the last one repeats.
#[derive(Debug)]
pub struct CannedBackend {
    model_id: String,
    replies: Vec<Result<String, BackendError>>,
    cursor: std::sync::Mutex<usize>,
    log: std::sync::Mutex<Vec<Vec<ChatMessage>>>,
}

impl CannedBackend {
    pub fn new(model_id: impl Into<String>, replies: Vec<Result<String, BackendError>>) -> Self {
        Self {
            model_id: model_id.into(),
            replies,
            cursor: std::sync::Mutex::new(0),
            log: std::sync::Mutex::new(Vec::new()),
        }
    }

    pub fn always(model_id: impl Into<String>, reply: impl Into<String>) -> Self {
        Self::new(model_id, vec![Ok(reply.into())])
    }

    pub fn unreachable(model_id: impl Into<String>) -> Self {
        Self::new(model_id, vec![Err(BackendError::Unavailable("connection refused".into()))])
    }

    /// Every message list this backend has been sent, in order.
    pub fn requests(&self) -> Vec<Vec<ChatMessage>> {
        self.log.lock().expect("log poisoned").clone()
    }
}

impl LlmBackend for CannedBackend {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn chat(&self, messages: &[ChatMessage]) -> Result<String, BackendError> {
        self.log.lock().expect("log poisoned").push(messages.to_vec());
        let mut cursor = self.cursor.lock().expect("cursor poisoned");
        let i = (*cursor).min(self.replies.len().saturating_sub(1));
        *cursor += 1;
        self.replies.get(i).cloned().unwrap_or_else(|| Err(BackendError::Unavailable("no replies configured".into())))
    }

    fn health_check(&self) -> Result<(), BackendError> {
        match self.replies.first() {
            Some(Err(e)) if self.replies.len() == 1 => Err(e.clone()),
            _ => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn api_key_is_redacted() {
        let k = ApiKey::new("sk-secret-123");
        assert!(!format!("{k:?}").contains("secret"));
        let mut s = BackendSettings::new("http://localhost:1", "m");
        s.api_key = Some(k);
        assert!(!format!("{s:?}").contains("sk-secret"));
    }

    #[test]
    fn canned_backend_replays_in_order() {
        let b = CannedBackend::new("m", vec![Ok("a".into()), Ok("b".into())]);
        assert_eq!(b.chat(&[]).unwrap(), "a");
        assert_eq!(b.chat(&[]).unwrap(), "b");
        assert_eq!(b.chat(&[]).unwrap(), "b");
        assert_eq!(b.requests().len(), 3);
    }

    #[test]
    fn unreachable_endpoint_is_unavailable() {
        let mut s = BackendSettings::new("http://127.0.0.1:9", "m");
        s.max_retries = 0;
        s.timeout = Duration::from_secs(2);
        let b = OpenAiCompatibleBackend::new(s).unwrap();
        assert!(matches!(
            b.chat(&[ChatMessage::user("hi")]),
            Err(BackendError::Unavailable(_) | BackendError::Timeout)
        ));
        assert!(b.health_check().is_err());
    }
}
