//! Chat-completion clients: the OpenAI-compatible HTTP client, offline mocks
//! and an on-disk response cache.

mod cache;
mod http;
mod mock;
mod openai;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cache::CachedChat;
pub use http::{Endpoint, HttpJson, RetryPolicy};
pub use mock::{MockBehavior, MockChat};
pub use openai::OpenAiChat;

/// Default environment variable holding the bearer token.
pub const API_KEY_ENV: &str = "RAGPIPE_API_KEY";

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ClientError {
    #[error("transport error after {attempts} attempt(s) ({retries} retries): {message}")]
    Transport {
        attempts: u32,
        retries: u32,
        message: String,
    },
    #[error("HTTP {status} after {attempts} attempt(s) ({retries} retries): {body}")]
    Status {
        status: u16,
        attempts: u32,
        retries: u32,
        body: String,
    },
    #[error("malformed response: {0}")]
    Decode(String),
    #[error("backend unavailable: {0}")]
    Unavailable(String),
}

impl ClientError {
    pub fn retries(&self) -> u32 {
        match self {
            ClientError::Transport { retries, .. } | ClientError::Status { retries, .. } => *retries,
            _ => 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub prompt: String,
    pub max_tokens: usize,
    pub temperature: f64,
    /// Distinguishes repeated samples of the same prompt.
    #[serde(default)]
    pub sample_index: usize,
    /// Grounding texts already rendered into `prompt`. Not sent over the
    /// wire; offline backends read them instead of parsing the prompt.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub context: Vec<String>,
}

impl ChatRequest {
    pub fn new(prompt: impl Into<String>, max_tokens: usize, temperature: f64) -> Self {
        Self {
            prompt: prompt.into(),
            max_tokens,
            temperature,
            sample_index: 0,
            context: Vec::new(),
        }
    }

    pub fn with_context(mut self, context: Vec<String>) -> Self {
        self.context = context;
        self
    }

    pub fn with_sample(mut self, index: usize) -> Self {
        self.sample_index = index;
        self
    }
}

pub trait ChatClient: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<String, ClientError>;

    fn model_tag(&self) -> String;

    fn is_remote(&self) -> bool {
        false
    }
}

impl<T: ChatClient + ?Sized> ChatClient for &T {
    fn complete(&self, request: &ChatRequest) -> Result<String, ClientError> {
        (**self).complete(request)
    }
    fn model_tag(&self) -> String {
        (**self).model_tag()
    }
    fn is_remote(&self) -> bool {
        (**self).is_remote()
    }
}

impl<T: ChatClient + ?Sized> ChatClient for Box<T> {
    fn complete(&self, request: &ChatRequest) -> Result<String, ClientError> {
        (**self).complete(request)
    }
    fn model_tag(&self) -> String {
        (**self).model_tag()
    }
    fn is_remote(&self) -> bool {
        (**self).is_remote()
    }
}

impl<T: ChatClient + ?Sized> ChatClient for std::sync::Arc<T> {
    fn complete(&self, request: &ChatRequest) -> Result<String, ClientError> {
        (**self).complete(request)
    }
    fn model_tag(&self) -> String {
        (**self).model_tag()
    }
    fn is_remote(&self) -> bool {
        (**self).is_remote()
    }
}
