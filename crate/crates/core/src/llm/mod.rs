//! Completion backends: a chat-completions HTTP client and a scripted
//! fixture backend, plus retry and request tracing.

mod remote;
mod retry;
mod scripted;
mod trace;

use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use remote::{ChatCompletionsBackend, RemoteConfig, API_BASE_ENV, API_KEY_ENV, DEFAULT_API_BASE};
pub use retry::{with_retry, with_retry_using, RetryPolicy, Retrying};
pub use scripted::{fixture_key, CallRecord, BUNDLED_FIXTURES, FixtureEntry, ScriptedBackend, ScriptedFixture, REPAIR_MARKER, REPROMPT_MARKER, SCENE_TAG_MARKER};
pub use trace::TracingBackend;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ContentPart {
    Text { text: String },
    /// PNG bytes; the HTTP client sends them as a base64 data URL.
    ImagePng {
        #[serde(skip)]
        data: Vec<u8>,
        width: u32,
        height: u32,
    },
    ImageUrl { url: String },
}

impl ContentPart {
    pub fn text(t: impl Into<String>) -> Self {
        ContentPart::Text { text: t.into() }
    }

    pub fn as_text(&self) -> Option<&str> {
        match self {
            ContentPart::Text { text } => Some(text),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ResponseFormat {
    FreeText,
    #[default]
    JsonObject,
}

/// One model call.
///
/// `role` names the calling agent; it keys scripted fixtures and traces and
/// is not sent over the wire.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub role: String,
    pub system_prompt: String,
    pub user_content: Vec<ContentPart>,
    pub temperature: f64,
    pub response_format: ResponseFormat,
    pub model_name: String,
}

impl CompletionRequest {
    /// Temperature defaults to 0.0 and the reply format to a JSON object.
    pub fn new(role: impl Into<String>, model_name: impl Into<String>, system_prompt: impl Into<String>) -> Self {
        CompletionRequest {
            role: role.into(),
            system_prompt: system_prompt.into(),
            user_content: Vec::new(),
            temperature: 0.0,
            response_format: ResponseFormat::JsonObject,
            model_name: model_name.into(),
        }
    }

    pub fn with_part(mut self, part: ContentPart) -> Self {
        self.user_content.push(part);
        self
    }

    pub fn with_text(self, text: impl Into<String>) -> Self {
        self.with_part(ContentPart::text(text))
    }

    pub fn with_temperature(mut self, t: f64) -> Self {
        self.temperature = t;
        self
    }

    pub fn with_format(mut self, format: ResponseFormat) -> Self {
        self.response_format = format;
        self
    }

    pub fn check(&self) -> Result<(), LlmError> {
        if self.user_content.is_empty() {
            return Err(LlmError::InvalidRequest("user content is empty".into()));
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(LlmError::InvalidRequest(format!("temperature {} outside [0, 2]", self.temperature)));
        }
        Ok(())
    }

    /// All text parts joined by newlines.
    pub fn user_text(&self) -> String {
        self.user_content.iter().filter_map(ContentPart::as_text).collect::<Vec<_>>().join("\n")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionResult {
    pub text: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    #[serde(with = "duration_secs")]
    pub latency: Duration,
}

impl CompletionResult {
    pub fn total_tokens(&self) -> u64 {
        self.prompt_tokens + self.completion_tokens
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LlmError {
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("rate limited: {0}")]
    RateLimited(String),
    #[error("no scripted fixture for key `{key}`")]
    FixtureMiss { key: String },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("unexpected response: {0}")]
    Protocol(String),
    #[error("gave up after {attempts} attempts: {last}")]
    ExhaustedRetries { attempts: u32, last: Box<LlmError> },
}

impl LlmError {
    pub fn is_retriable(&self) -> bool {
        matches!(self, LlmError::Transport(_) | LlmError::RateLimited(_))
    }
}

/// A completion backend. Implementations are shareable across threads and
/// each call is independent and blocking.
pub trait Backend: Send + Sync {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResult, LlmError>;
}

impl<B: Backend + ?Sized> Backend for &B {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResult, LlmError> {
        (**self).complete(request)
    }
}

impl<B: Backend + ?Sized> Backend for Arc<B> {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResult, LlmError> {
        (**self).complete(request)
    }
}

impl<B: Backend + ?Sized> Backend for Box<B> {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResult, LlmError> {
        (**self).complete(request)
    }
}

/// Seconds as a float, computed from integer nanoseconds so that decimal
/// fixture values print back unchanged.
pub fn duration_to_secs(d: Duration) -> f64 {
    d.as_nanos() as f64 / 1e9
}

pub mod duration_secs {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(super::duration_to_secs(*d))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let secs = f64::deserialize(d)?;
        Duration::try_from_secs_f64(secs).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn temperature_defaults_to_zero() {
        let r = CompletionRequest::new("descriptor", "m", "sys").with_text("hi");
        assert_eq!(r.temperature, 0.0);
        assert_eq!(r.response_format, ResponseFormat::JsonObject);
        assert!(r.check().is_ok());
    }

    #[test]
    fn rejects_empty_content_and_bad_temperature() {
        let r = CompletionRequest::new("x", "m", "sys");
        assert!(matches!(r.check(), Err(LlmError::InvalidRequest(_))));
        let r = r.with_text("a").with_temperature(2.5);
        assert!(matches!(r.check(), Err(LlmError::InvalidRequest(_))));
    }

    #[test]
    fn millisecond_durations_print_as_decimals() {
        assert_eq!(duration_to_secs(Duration::from_millis(21_360)), 21.36);
        assert_eq!(duration_to_secs(Duration::from_millis(10_240)), 10.24);
    }
}
