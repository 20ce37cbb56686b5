use std::time::Duration;

use log::debug;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{ClientError, API_KEY_ENV};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub retries: u32,
    pub initial_backoff_ms: u64,
    pub timeout_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            retries: 3,
            initial_backoff_ms: 250,
            timeout_ms: 60_000,
        }
    }
}

impl RetryPolicy {
    fn backoff(&self, attempt: u32) -> Duration {
        Duration::from_millis(self.initial_backoff_ms.saturating_mul(1 << attempt.min(16)))
    }
}

/// Where a remote service lives and how to authenticate against it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Endpoint {
    pub url: String,
    #[serde(default)]
    pub model: String,
    #[serde(default = "default_key_env")]
    pub api_key_env: String,
}

fn default_key_env() -> String {
    API_KEY_ENV.to_string()
}

impl Endpoint {
    pub fn new(url: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            url: url.into(),
            model: model.into(),
            api_key_env: default_key_env(),
        }
    }

    pub fn api_key(&self) -> Option<String> {
        std::env::var(&self.api_key_env).ok().filter(|k| !k.is_empty())
    }
}

/// JSON-over-HTTP POST with bearer auth and exponential backoff.
///
/// Transport errors, 429 and 5xx responses are retried; other statuses
/// fail immediately.
#[derive(Debug, Clone)]
pub struct HttpJson {
    base_url: String,
    api_key: Option<String>,
    policy: RetryPolicy,
    trace: bool,
    client: reqwest::blocking::Client,
}

impl HttpJson {
    pub fn new(endpoint: &Endpoint, policy: RetryPolicy) -> Result<Self, ClientError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(policy.timeout_ms))
            .build()
            .map_err(|e| ClientError::Unavailable(e.to_string()))?;
        Ok(Self {
            base_url: endpoint.url.trim_end_matches('/').to_string(),
            api_key: endpoint.api_key(),
            policy,
            trace: false,
            client,
        })
    }

    /// Log request and response bodies at debug level. Credentials are
    /// never logged.
    pub fn with_trace(mut self, trace: bool) -> Self {
        self.trace = trace;
        self
    }

    pub fn url(&self, path: &str) -> String {
        format!("{}/{}", self.base_url, path.trim_start_matches('/'))
    }

    pub fn post_json(&self, path: &str, body: &Value) -> Result<Value, ClientError> {
        let url = self.url(path);
        let retries = self.policy.retries;
        let mut attempt = 0u32;
        loop {
            if self.trace {
                let auth = if self.api_key.is_some() { "Bearer [REDACTED]" } else { "none" };
                debug!("POST {url} authorization={auth} body={body}");
            }
            let mut req = self.client.post(&url).json(body);
            if let Some(key) = &self.api_key {
                req = req.bearer_auth(key);
            }
            let outcome = req.send();
            attempt += 1;
            let retryable_err = match outcome {
                Ok(resp) => {
                    let status = resp.status();
                    let text = resp
                        .text()
                        .map_err(|e| ClientError::Decode(e.to_string()))?;
                    if self.trace {
                        debug!("{url} -> {status} {text}");
                    }
                    if status.is_success() {
                        return serde_json::from_str(&text)
                            .map_err(|e| ClientError::Decode(format!("{e}: {text}")));
                    }
                    let err = ClientError::Status {
                        status: status.as_u16(),
                        attempts: attempt,
                        retries: attempt - 1,
                        body: text,
                    };
                    if !(status.is_server_error() || status.as_u16() == 429) {
                        return Err(err);
                    }
                    err
                }
                Err(e) => ClientError::Transport {
                    attempts: attempt,
                    retries: attempt - 1,
                    message: e.to_string(),
                },
            };
            if attempt > retries {
                return Err(retryable_err);
            }
            std::thread::sleep(self.policy.backoff(attempt - 1));
        }
    }
}
