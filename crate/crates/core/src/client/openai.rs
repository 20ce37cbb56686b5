use serde_json::{json, Value};

use super::{ChatClient, ChatRequest, ClientError, Endpoint, HttpJson, RetryPolicy};

/// Client for an OpenAI-compatible `/chat/completions` endpoint.
#[derive(Debug, Clone)]
pub struct OpenAiChat {
    http: HttpJson,
    model: String,
}

impl OpenAiChat {
    pub fn new(endpoint: &Endpoint, policy: RetryPolicy) -> Result<Self, ClientError> {
        Ok(Self {
            http: HttpJson::new(endpoint, policy)?,
            model: endpoint.model.clone(),
        })
    }

    pub fn with_trace(mut self, trace: bool) -> Self {
        self.http = self.http.with_trace(trace);
        self
    }

    pub fn request_body(&self, request: &ChatRequest) -> Value {
        json!({
            "model": self.model,
            "messages": [{"role": "user", "content": request.prompt}],
            "max_tokens": request.max_tokens,
            "temperature": request.temperature,
        })
    }
}

impl ChatClient for OpenAiChat {
    fn complete(&self, request: &ChatRequest) -> Result<String, ClientError> {
        let resp = self.http.post_json("chat/completions", &self.request_body(request))?;
        resp.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| ClientError::Decode(format!("no choices[0].message.content in {resp}")))
    }

    fn model_tag(&self) -> String {
        self.model.clone()
    }

    fn is_remote(&self) -> bool {
        true
    }
}
