//! Live adapter for OpenAI-compatible chat-completion endpoints.

use std::fmt;
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{AdapterRequest, LanguageModel, TransportError};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmAdapterConfig {
    /// Base URL; requests go to `{endpoint}/chat/completions`.
    pub endpoint: String,
    pub model: String,
    pub temperature: f64,
    /// Per-request timeout in seconds.
    pub timeout_secs: f64,
    /// Retries after the first attempt, for timeouts, network errors, 429 and 5xx.
    pub max_retries: u32,
    /// First backoff delay; doubles after each retry.
    pub backoff_ms: u64,
    /// Environment variable holding the API key.
    pub api_key_env: String,
    /// Concurrent requests allowed through one adapter.
    pub max_in_flight: usize,
}

impl Default for LlmAdapterConfig {
    fn default() -> Self {
        Self {
            endpoint: "https://api.openai.com/v1".into(),
            model: "gpt-4o".into(),
            temperature: 0.2,
            timeout_secs: 60.0,
            max_retries: 3,
            backoff_ms: 500,
            api_key_env: "LLM_API_KEY".into(),
            max_in_flight: 4,
        }
    }
}

impl LlmAdapterConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.timeout_secs > 0.0) || !self.timeout_secs.is_finite() {
            return Err(Error::Config(format!("timeout must be positive, got {}", self.timeout_secs)));
        }
        if self.max_in_flight == 0 {
            return Err(Error::Config("max_in_flight must be at least 1".into()));
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(Error::Config(format!("temperature must lie in [0, 2], got {}", self.temperature)));
        }
        if self.endpoint.is_empty() || self.model.is_empty() {
            return Err(Error::Config("endpoint and model must be set".into()));
        }
        Ok(())
    }
}

/// Counting semaphore bounding requests in flight.
struct Gate {
    in_flight: Mutex<usize>,
    freed: Condvar,
    cap: usize,
}

struct Permit<'a>(&'a Gate);

impl Gate {
    fn acquire(&self) -> Permit<'_> {
        let mut n = self.in_flight.lock().unwrap();
        while *n >= self.cap {
            n = self.freed.wait(n).unwrap();
        }
        *n += 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.in_flight.lock().unwrap() -= 1;
        self.0.freed.notify_one();
    }
}

enum Failure {
    Transient(TransportError),
    Fatal(TransportError),
}

pub struct LlmAdapter {
    cfg: LlmAdapterConfig,
    api_key: String,
    agent: ureq::Agent,
    gate: Gate,
}

impl fmt::Debug for LlmAdapter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LlmAdapter")
            .field("cfg", &self.cfg)
            .field("api_key", &"<redacted>")
            .finish()
    }
}

/// Builds the live adapter, reading the credential from the configured
/// environment variable.
pub fn llm_adapter(cfg: LlmAdapterConfig) -> Result<LlmAdapter> {
    let key = std::env::var(&cfg.api_key_env)
        .ok()
        .filter(|k| !k.trim().is_empty())
        .ok_or_else(|| Error::Config(format!("credential variable {} is not set", cfg.api_key_env)))?;
    LlmAdapter::with_credential(cfg, key)
}

impl LlmAdapter {
    pub fn with_credential(cfg: LlmAdapterConfig, api_key: String) -> Result<Self> {
        cfg.validate()?;
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(cfg.timeout_secs)))
            .http_status_as_error(false)
            .build();
        Ok(Self {
            agent: ureq::Agent::new_with_config(config),
            gate: Gate {
                in_flight: Mutex::new(0),
                freed: Condvar::new(),
                cap: cfg.max_in_flight,
            },
            cfg,
            api_key,
        })
    }

    pub fn config(&self) -> &LlmAdapterConfig {
        &self.cfg
    }

    fn send_once(&self, prompt: &str) -> std::result::Result<String, Failure> {
        let url = format!("{}/chat/completions", self.cfg.endpoint.trim_end_matches('/'));
        let body = json!({
            "model": self.cfg.model,
            "temperature": self.cfg.temperature,
            "messages": [{"role": "user", "content": prompt}],
        });
        let mut resp = match self
            .agent
            .post(&url)
            .header("Authorization", format!("Bearer {}", self.api_key))
            .send_json(&body)
        {
            Ok(r) => r,
            Err(ureq::Error::Timeout(_)) => return Err(Failure::Transient(TransportError::Timeout)),
            Err(e) => return Err(Failure::Transient(TransportError::Network(e.to_string()))),
        };
        let status = resp.status().as_u16();
        if !(200..300).contains(&status) {
            let mut text = resp.body_mut().read_to_string().unwrap_or_default();
            text.truncate(500);
            let err = TransportError::Status { status, body: text };
            return Err(if status == 429 || status >= 500 {
                Failure::Transient(err)
            } else {
                Failure::Fatal(err)
            });
        }
        let value: Value = match resp.body_mut().read_json() {
            Ok(v) => v,
            Err(ureq::Error::Timeout(_)) => return Err(Failure::Transient(TransportError::Timeout)),
            Err(e) => return Err(Failure::Fatal(TransportError::Body(e.to_string()))),
        };
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(String::from)
            .ok_or_else(|| Failure::Fatal(TransportError::Body("missing choices[0].message.content".into())))
    }
}

impl LanguageModel for LlmAdapter {
    fn name(&self) -> &str {
        &self.cfg.model
    }

    fn complete(&self, request: &AdapterRequest<'_>) -> std::result::Result<String, TransportError> {
        let _permit = self.gate.acquire();
        let mut delay = Duration::from_millis(self.cfg.backoff_ms);
        let mut attempt = 0;
        loop {
            match self.send_once(request.prompt) {
                Ok(text) => return Ok(text),
                Err(Failure::Fatal(e)) => return Err(e),
                Err(Failure::Transient(e)) if attempt >= self.cfg.max_retries => return Err(e),
                Err(Failure::Transient(_)) => {
                    std::thread::sleep(delay);
                    delay *= 2;
                    attempt += 1;
                }
            }
        }
    }
}
