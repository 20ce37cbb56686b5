//! Answer generation through a chat client.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::client::{ChatClient, ChatRequest, ClientError};

/// Word budget for the documents placed in a generation prompt.
pub const DEFAULT_MAX_CONTEXT_WORDS: usize = 2048;
pub const QA_MAX_NEW_TOKENS: usize = 100;
pub const OTHER_MAX_NEW_TOKENS: usize = 50;

/// Generation length for question answering vs. other tasks.
pub fn default_max_new_tokens(question_answering: bool) -> usize {
    if question_answering {
        QA_MAX_NEW_TOKENS
    } else {
        OTHER_MAX_NEW_TOKENS
    }
}

/// Keeps documents in order until `max_words` whitespace-separated words
/// are used; the last admitted document is cut after its final fitting
/// word and later documents are dropped.
pub fn truncate_context(docs: &[String], max_words: usize) -> Vec<String> {
    let mut left = max_words;
    let mut out = Vec::new();
    for doc in docs {
        if left == 0 {
            break;
        }
        let mut words = doc.split_whitespace();
        let n = words.clone().count();
        if n <= left {
            out.push(doc.clone());
            left -= n;
            continue;
        }
        let last = words.nth(left - 1).expect("doc has more than `left` words");
        // `last` borrows from `doc`, so its end offset is a word boundary.
        let end = last.as_ptr() as usize - doc.as_ptr() as usize + last.len();
        out.push(doc[..end].trim_start().to_string());
        left = 0;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decoding {
    #[default]
    Greedy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Remote,
    Mock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub prompt: String,
    pub max_new_tokens: usize,
    pub decoding: Decoding,
    pub model_tag: String,
    /// The documents rendered into `prompt`, for offline backends.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub context: Vec<String>,
}

impl GenerationRequest {
    pub fn new(prompt: impl Into<String>, max_new_tokens: usize, model_tag: impl Into<String>) -> Self {
        Self {
            prompt: prompt.into(),
            max_new_tokens,
            decoding: Decoding::Greedy,
            model_tag: model_tag.into(),
            context: Vec::new(),
        }
    }

    pub fn with_context(mut self, context: Vec<String>) -> Self {
        self.context = context;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationResult {
    pub text: String,
    /// Wall-clock seconds.
    pub latency: f64,
    pub backend: Backend,
}

pub fn generate(client: &dyn ChatClient, request: &GenerationRequest) -> Result<GenerationResult, ClientError> {
    let temperature = match request.decoding {
        Decoding::Greedy => 0.0,
    };
    let chat = ChatRequest::new(request.prompt.clone(), request.max_new_tokens, temperature)
        .with_context(request.context.clone());
    let start = Instant::now();
    let text = client.complete(&chat)?;
    Ok(GenerationResult {
        text: text.trim().to_string(),
        latency: start.elapsed().as_secs_f64(),
        backend: if client.is_remote() { Backend::Remote } else { Backend::Mock },
    })
}
