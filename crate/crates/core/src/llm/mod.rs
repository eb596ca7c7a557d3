//! Chat-completion transport.
//!
//! Everything above this module talks to a [`ChatClient`]; the live
//! OpenAI-compatible client and the offline mock are interchangeable.

mod mock;
mod openai;
mod transcript;

use serde::{Deserialize, Serialize};

pub use mock::{
    mock_generate, mock_optimize, FnClient, MockBackend, MockNode, MockWorld, GENERATOR_MARKER,
    OPTIMIZER_MARKER,
};
pub use openai::{OpenAiClient, ProviderConfig, API_KEY_ENV};
pub use transcript::{ReplayClient, TranscriptClient, TranscriptEntry};

pub const DEFAULT_MAX_TOKENS: u32 = 4096;

#[derive(Debug, thiserror::Error)]
pub enum LlmError {
    #[error("environment variable {0} is not set")]
    MissingApiKey(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("authentication rejected (HTTP {status}): {body}")]
    Auth { status: u16, body: String },
    #[error("HTTP {status} after {attempts} attempt(s): {body}")]
    Http { status: u16, attempts: u32, body: String },
    #[error("request timed out after {attempts} attempt(s)")]
    Timeout { attempts: u32 },
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("malformed provider response: {0}")]
    Malformed(String),
    #[error("mock backend: {0}")]
    Mock(String),
}

/// One system + user exchange.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub system: String,
    pub user: String,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl ChatRequest {
    pub fn new(
        system: impl Into<String>,
        user: impl Into<String>,
        temperature: f64,
    ) -> Result<Self, LlmError> {
        if !(0.0..=2.0).contains(&temperature) {
            return Err(LlmError::InvalidRequest(format!(
                "temperature {temperature} outside [0, 2]"
            )));
        }
        Ok(Self {
            system: system.into(),
            user: user.into(),
            temperature,
            max_tokens: DEFAULT_MAX_TOKENS,
        })
    }

    /// Rough size estimate (four characters per token).
    pub fn approx_tokens(&self) -> usize {
        (self.system.len() + self.user.len()).div_ceil(4)
    }
}

pub trait ChatClient: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<String, LlmError>;
}

impl<C: ChatClient + ?Sized> ChatClient for &C {
    fn complete(&self, request: &ChatRequest) -> Result<String, LlmError> {
        (**self).complete(request)
    }
}

impl<C: ChatClient + ?Sized> ChatClient for Box<C> {
    fn complete(&self, request: &ChatRequest) -> Result<String, LlmError> {
        (**self).complete(request)
    }
}

impl<C: ChatClient + ?Sized> ChatClient for std::sync::Arc<C> {
    fn complete(&self, request: &ChatRequest) -> Result<String, LlmError> {
        (**self).complete(request)
    }
}
