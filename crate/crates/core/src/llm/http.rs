use std::time::Duration;

use serde::Serialize;
use serde_json::Value;

use super::{check_request, BackendState, LlmBackend, LlmError, Message};

pub const ENV_BASE_URL: &str = "TEXT2ML_LLM_BASE_URL";
pub const ENV_API_KEY: &str = "TEXT2ML_LLM_API_KEY";
pub const ENV_MODEL: &str = "TEXT2ML_LLM_MODEL";

#[derive(Debug, Clone)]
pub struct HttpConfig {
    /// Base URL; requests go to `{base_url}/chat/completions`.
    pub base_url: String,
    pub api_key: Option<String>,
    /// First retry delay; doubled on every further retry.
    pub backoff: Duration,
}

impl HttpConfig {
    /// Reads the endpoint and key from the environment.
    pub fn from_env() -> Option<Self> {
        let base_url = std::env::var(ENV_BASE_URL).ok()?;
        Some(Self {
            base_url,
            api_key: std::env::var(ENV_API_KEY).ok(),
            backoff: Duration::from_millis(500),
        })
    }
}

/// Chat-completion client: a role-tagged message array goes in, the first
/// choice's message content comes out.
pub struct HttpBackend {
    config: HttpConfig,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: &'a [Message],
    temperature: f64,
}

enum Failure {
    Transient(String),
    Fatal(LlmError),
}

impl HttpBackend {
    pub fn new(config: HttpConfig) -> Self {
        Self { config }
    }

    fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'))
    }

    fn attempt(&self, body: &str, timeout: Duration) -> Result<String, Failure> {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        let mut request = agent
            .post(self.endpoint())
            .header("Content-Type", "application/json");
        if let Some(key) = &self.config.api_key {
            request = request.header("Authorization", format!("Bearer {key}"));
        }
        let response = request
            .send(body)
            .map_err(|e| Failure::Transient(e.to_string()))?;
        let status = response.status().as_u16();
        let text = response
            .into_body()
            .read_to_string()
            .map_err(|e| Failure::Transient(e.to_string()))?;
        match status {
            200..=299 => parse_choice(&text).map_err(Failure::Fatal),
            408 | 429 | 500..=599 => Err(Failure::Transient(format!("HTTP {status}: {text}"))),
            _ => Err(Failure::Fatal(LlmError::BadResponse(format!(
                "HTTP {status}: {text}"
            )))),
        }
    }
}

fn parse_choice(text: &str) -> Result<String, LlmError> {
    let value: Value =
        serde_json::from_str(text).map_err(|e| LlmError::BadResponse(e.to_string()))?;
    value
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_owned)
        .ok_or_else(|| LlmError::BadResponse("missing choices[0].message.content".into()))
}

impl LlmBackend for HttpBackend {
    fn complete(&self, messages: &[Message], state: &BackendState) -> Result<String, LlmError> {
        check_request(messages)?;
        let body = serde_json::to_string(&ChatRequest {
            model: &state.model,
            messages,
            temperature: state.temperature,
        })
        .expect("request serializes");
        let mut delay = self.config.backoff;
        let mut attempts = 0;
        loop {
            attempts += 1;
            match self.attempt(&body, state.timeout) {
                Ok(text) => return Ok(text),
                Err(Failure::Fatal(e)) => return Err(e),
                Err(Failure::Transient(message)) => {
                    if attempts > state.retry_budget {
                        return Err(LlmError::Unavailable { attempts, message });
                    }
                    std::thread::sleep(delay);
                    delay = delay.saturating_mul(2);
                }
            }
        }
    }
}
