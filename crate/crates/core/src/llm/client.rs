use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{GenerationRequest, LlmError, TextGenerator};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientConfig {
    /// Full URL of a chat-completions endpoint.
    pub endpoint: String,
    pub model: String,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "default_retries")]
    pub retries: u32,
    /// Sent as a bearer token when present.
    #[serde(default)]
    pub api_key: Option<String>,
}

fn default_temperature() -> f64 {
    0.7
}

fn default_timeout_ms() -> u64 {
    30_000
}

fn default_retries() -> u32 {
    1
}

impl ClientConfig {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            model: model.into(),
            temperature: default_temperature(),
            timeout_ms: default_timeout_ms(),
            retries: default_retries(),
            api_key: None,
        }
    }
}

/// Blocking client for an OpenAI-style `/chat/completions` endpoint.
#[derive(Debug, Clone)]
pub struct HttpGenerator {
    config: ClientConfig,
    http: reqwest::blocking::Client,
}

impl HttpGenerator {
    pub fn new(config: ClientConfig) -> Result<Self, LlmError> {
        if config.timeout_ms == 0 {
            return Err(LlmError::Request("timeout must be positive".into()));
        }
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(config.timeout_ms))
            .build()
            .map_err(|e| LlmError::Request(e.to_string()))?;
        Ok(Self { config, http })
    }

    pub fn config(&self) -> &ClientConfig {
        &self.config
    }

    fn once(&self, prompt: &str) -> Result<String, LlmError> {
        let body = json!({
            "model": self.config.model,
            "temperature": self.config.temperature,
            "messages": [{"role": "user", "content": prompt}],
        });
        let mut req = self.http.post(&self.config.endpoint).json(&body);
        if let Some(key) = &self.config.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| if e.is_timeout() { LlmError::Timeout } else { LlmError::Request(e.to_string()) })?;
        let status = resp.status();
        if !status.is_success() {
            return Err(LlmError::Request(format!("HTTP {status}")));
        }
        let value: serde_json::Value = resp.json().map_err(|e| LlmError::MalformedResponse(e.to_string()))?;
        let text = value
            .pointer("/choices/0/message/content")
            .and_then(|v| v.as_str())
            .ok_or_else(|| LlmError::MalformedResponse("missing choices[0].message.content".into()))?;
        if text.trim().is_empty() {
            return Err(LlmError::EmptyGeneration);
        }
        Ok(text.to_string())
    }
}

impl TextGenerator for HttpGenerator {
    fn generate(&self, request: &GenerationRequest) -> Result<String, LlmError> {
        let mut last = None;
        for attempt in 0..=self.config.retries {
            match self.once(&request.prompt) {
                Ok(t) => return Ok(t),
                Err(e) => {
                    log::warn!("generation attempt {} failed: {e}", attempt + 1);
                    last = Some(e);
                }
            }
        }
        Err(last.expect("at least one attempt"))
    }
}
