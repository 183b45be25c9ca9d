//! OpenAI-compatible chat-completion client.

use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::QaError;
use crate::chunker::estimate_tokens;
use crate::http::{HttpClient, HttpError, RateLimiter, RetryPolicy};

pub const DEFAULT_MODEL: &str = "vicuna-7b-16k-v1.5";
pub const DEFAULT_CONTEXT_LIMIT: usize = 16_384;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EndpointConfig {
    /// Base URL; `/chat/completions` is appended.
    pub base_url: String,
    #[serde(skip_serializing)]
    pub api_key: Option<String>,
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
    /// Prompt plus completion budget of the served model, in estimated tokens.
    pub context_limit: usize,
    pub timeout_secs: u64,
    pub max_attempts: u32,
}

impl Default for EndpointConfig {
    fn default() -> Self {
        Self {
            base_url: "http://127.0.0.1:8000/v1".into(),
            api_key: None,
            model: DEFAULT_MODEL.into(),
            temperature: 0.7,
            max_tokens: 2048,
            context_limit: DEFAULT_CONTEXT_LIMIT,
            timeout_secs: 600,
            max_attempts: 5,
        }
    }
}

#[derive(Clone)]
pub struct Endpoint {
    config: EndpointConfig,
    client: HttpClient,
}

impl Endpoint {
    pub fn new(config: EndpointConfig) -> Self {
        let retry = RetryPolicy {
            max_attempts: config.max_attempts.max(1),
            ..RetryPolicy::default()
        };
        let client = HttpClient::new(
            retry,
            Arc::new(RateLimiter::new(Duration::ZERO)),
            Duration::from_secs(config.timeout_secs),
        );
        Self { config, client }
    }

    pub fn with_client(config: EndpointConfig, client: HttpClient) -> Self {
        Self { config, client }
    }

    pub fn config(&self) -> &EndpointConfig {
        &self.config
    }

    pub fn url(&self) -> String {
        format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'))
    }

    /// Fails with `ContextOverflow` before any network traffic when the
    /// prompt plus the completion budget exceeds the context limit.
    pub fn check_fits(&self, prompt: &str) -> Result<(), QaError> {
        let est_tokens = estimate_tokens(prompt);
        if est_tokens + self.config.max_tokens as usize > self.config.context_limit {
            return Err(QaError::ContextOverflow {
                est_tokens,
                limit: self.config.context_limit,
            });
        }
        Ok(())
    }

    /// Assistant text of a single-message chat completion.
    pub fn request_generation(&self, prompt: &str) -> Result<String, QaError> {
        self.check_fits(prompt)?;
        let body = json!({
            "model": self.config.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.config.temperature,
            "max_tokens": self.config.max_tokens,
        });
        let headers: Vec<(&str, String)> = match &self.config.api_key {
            Some(key) => vec![("Authorization", format!("Bearer {key}"))],
            None => Vec::new(),
        };
        let reply = self
            .client
            .post_json(&self.url(), &headers, &body)
            .map_err(|e| match e {
                HttpError::Status { status, body } => QaError::Endpoint { status, body },
                HttpError::RateLimited { status, .. } => QaError::Endpoint {
                    status,
                    body: "retries exhausted".into(),
                },
                HttpError::Network(m) => QaError::Network(m),
            })?;
        let value: serde_json::Value = serde_json::from_slice(&reply.body)
            .map_err(|e| QaError::MalformedResponse(format!("body is not JSON: {e}")))?;
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| QaError::MalformedResponse("no choices[0].message.content".into()))
    }
}
