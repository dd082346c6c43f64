//! HTTP completion provider for OpenAI-compatible chat-completion endpoints.

use super::provider::{CompletionProvider, CompletionRequest, ProviderError, Speaker};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::time::Duration;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpConfig {
    /// Full URL of the chat-completions endpoint.
    pub endpoint: String,
    pub model: String,
    /// Environment variable holding a bearer token; `None` sends no key.
    pub api_key_env: Option<String>,
    #[serde(with = "secs")]
    pub timeout: Duration,
    /// Attempts after the first one for retryable failures.
    pub retries: u32,
    #[serde(with = "secs")]
    pub backoff: Duration,
    pub temperature: f64,
}

mod secs {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Duration::try_from_secs_f64(f64::deserialize(d)?).map_err(serde::de::Error::custom)
    }
}

pub const DEFAULT_API_KEY_ENV: &str = "BUGSMITH_API_KEY";

impl HttpConfig {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        HttpConfig {
            endpoint: endpoint.into(),
            model: model.into(),
            api_key_env: Some(DEFAULT_API_KEY_ENV.into()),
            timeout: Duration::from_secs(120),
            retries: 3,
            backoff: Duration::from_millis(500),
            temperature: 0.0,
        }
    }
}

pub struct HttpProvider {
    config: HttpConfig,
    agent: ureq::Agent,
    key: Option<String>,
}

impl HttpProvider {
    /// Reads the API key from the configured variable when one is named and set.
    pub fn new(config: HttpConfig) -> Self {
        let key = match &config.api_key_env {
            Some(var) => std::env::var(var).ok().filter(|k| !k.is_empty()),
            None => None,
        };
        Self::with_key(config, key)
    }

    /// Like [`HttpProvider::new`] but fails when the key is missing.
    pub fn new_requiring_key(config: HttpConfig) -> Result<Self, ProviderError> {
        let p = Self::new(config);
        match (&p.key, &p.config.api_key_env) {
            (None, Some(var)) => Err(ProviderError::MissingKey(var.clone())),
            _ => Ok(p),
        }
    }

    pub fn with_key(config: HttpConfig, key: Option<String>) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        HttpProvider { config, agent, key }
    }

    /// Request body sent for `request`.
    pub fn body(&self, request: &CompletionRequest) -> Value {
        let mut messages = vec![
            json!({"role": "system", "content": request.system}),
            json!({"role": "user", "content": request.context}),
        ];
        for turn in &request.history {
            let role = match turn.speaker {
                Speaker::Agent => "assistant",
                Speaker::Environment => "user",
            };
            messages.push(json!({"role": role, "content": turn.content}));
        }
        json!({
            "model": self.config.model,
            "messages": messages,
            "temperature": self.config.temperature,
        })
    }

    fn attempt(&self, body: &Value) -> Result<String, (bool, ProviderError)> {
        let mut req = self.agent.post(&self.config.endpoint).header("Content-Type", "application/json");
        if let Some(k) = &self.key {
            req = req.header("Authorization", format!("Bearer {k}"));
        }
        let mut resp = req
            .send_json(body)
            .map_err(|e| (true, ProviderError::Transport(e.to_string())))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| (true, ProviderError::Transport(e.to_string())))?;
        if !(200..300).contains(&status) {
            let retryable = status == 429 || status >= 500;
            return Err((retryable, ProviderError::Http { status, body: text }));
        }
        extract_content(&text).map_err(|e| (false, e))
    }
}

/// Pulls `choices[0].message.content` out of a response body.
pub fn extract_content(body: &str) -> Result<String, ProviderError> {
    let v: Value = serde_json::from_str(body).map_err(|e| ProviderError::InvalidResponse(e.to_string()))?;
    v.pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| ProviderError::InvalidResponse("missing choices[0].message.content".into()))
}

impl CompletionProvider for HttpProvider {
    fn name(&self) -> &str {
        "http"
    }

    fn complete(&self, request: &CompletionRequest) -> Result<String, ProviderError> {
        let body = self.body(request);
        let mut delay = self.config.backoff;
        let mut attempt = 0;
        loop {
            match self.attempt(&body) {
                Ok(text) => return Ok(text),
                Err((true, e)) if attempt < self.config.retries => {
                    tracing::warn!(attempt, "completion request failed, retrying: {e}");
                    std::thread::sleep(delay);
                    delay *= 2;
                    attempt += 1;
                }
                Err((_, e)) => return Err(e),
            }
        }
    }
}
