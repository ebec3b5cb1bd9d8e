//! Chat-completion client over HTTP.

use std::time::{Duration, Instant};

use medconsult_core::genbackend::{BackendError, GenerationRequest, GenerationResult, Generator, HealthStatus};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};

pub const DEFAULT_SYSTEM_PROMPT: &str = "You are a careful, empathetic physician answering a patient in an online consultation.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RemoteConfig {
    pub endpoint: String,
    pub model: String,
    #[serde(skip_serializing)]
    pub api_key: Option<String>,
    pub timeout_ms: u64,
    pub max_attempts: u32,
    pub backoff_base_ms: u64,
    pub system_prompt: String,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        RemoteConfig {
            endpoint: String::new(),
            model: "default".into(),
            api_key: None,
            timeout_ms: 30_000,
            max_attempts: 3,
            backoff_base_ms: 250,
            system_prompt: DEFAULT_SYSTEM_PROMPT.into(),
        }
    }
}

impl RemoteConfig {
    /// Overrides endpoint, model and key from `GEN_ENDPOINT`, `GEN_MODEL`
    /// and `GEN_API_KEY` when set.
    pub fn apply_env(mut self) -> Self {
        self.apply_vars(|k| std::env::var(k).ok());
        self
    }

    fn apply_vars(&mut self, get: impl Fn(&str) -> Option<String>) {
        if let Some(v) = get("GEN_ENDPOINT") {
            self.endpoint = v;
        }
        if let Some(v) = get("GEN_MODEL") {
            self.model = v;
        }
        if let Some(v) = get("GEN_API_KEY") {
            self.api_key = Some(v);
        }
    }
}

#[derive(Debug, Deserialize)]
struct Completion {
    choices: Vec<Choice>,
}

#[derive(Debug, Deserialize)]
struct Choice {
    message: Message,
    #[serde(default)]
    finish_reason: Option<String>,
}

#[derive(Debug, Deserialize)]
struct Message {
    #[serde(default)]
    content: Option<String>,
}

enum Attempt {
    Done(String, bool),
    Retry(BackendError),
    Fail(BackendError),
}

pub struct RemoteBackend {
    config: RemoteConfig,
    agent: ureq::Agent,
    id: String,
}

fn excerpt(body: &str) -> String {
    body.chars().take(200).collect()
}

fn transient(status: u16) -> bool {
    status == 408 || status == 429 || status >= 500
}

impl RemoteBackend {
    pub fn new(config: RemoteConfig) -> Result<Self> {
        if config.endpoint.is_empty() {
            return Err(Error::Config("remote backend needs an endpoint (GEN_ENDPOINT)".into()));
        }
        if config.max_attempts == 0 {
            return Err(Error::Config("max_attempts must be at least 1".into()));
        }
        let agent = ureq::Agent::new_with_config(
            ureq::Agent::config_builder()
                .timeout_global(Some(Duration::from_millis(config.timeout_ms)))
                .http_status_as_error(false)
                .build(),
        );
        let id = format!("remote:{}", config.model);
        Ok(RemoteBackend { config, agent, id })
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.config
    }

    fn body(&self, req: &GenerationRequest) -> serde_json::Value {
        let mut body = json!({
            "model": self.config.model,
            "messages": [
                {"role": "system", "content": self.config.system_prompt},
                {"role": "user", "content": req.prompt},
            ],
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
        });
        if let Some(stop) = &req.stop {
            body["stop"] = json!(stop);
        }
        body
    }

    fn map_transport(&self, e: ureq::Error) -> Attempt {
        match e {
            ureq::Error::Timeout(_) => Attempt::Retry(BackendError::Timeout { timeout_ms: self.config.timeout_ms }),
            ureq::Error::ConnectionFailed | ureq::Error::HostNotFound | ureq::Error::Io(_) => {
                Attempt::Retry(BackendError::Failure { status: None, body: e.to_string() })
            }
            other => Attempt::Fail(BackendError::Failure { status: None, body: other.to_string() }),
        }
    }

    fn attempt(&self, body: &serde_json::Value) -> Attempt {
        let mut request = self.agent.post(&self.config.endpoint).header("Content-Type", "application/json");
        if let Some(key) = &self.config.api_key {
            request = request.header("Authorization", format!("Bearer {key}"));
        }
        let mut resp = match request.send_json(body) {
            Ok(r) => r,
            Err(e) => return self.map_transport(e),
        };
        let status = resp.status().as_u16();
        let text = match resp.body_mut().read_to_string() {
            Ok(t) => t,
            Err(e) => return self.map_transport(e),
        };
        if !(200..300).contains(&status) {
            let err = BackendError::Failure { status: Some(status), body: excerpt(&text) };
            return if transient(status) { Attempt::Retry(err) } else { Attempt::Fail(err) };
        }
        match serde_json::from_str::<Completion>(&text) {
            Ok(c) => match c.choices.into_iter().next() {
                Some(Choice { message: Message { content: Some(content) }, finish_reason }) => {
                    Attempt::Done(content, finish_reason.as_deref() == Some("length"))
                }
                _ => Attempt::Fail(BackendError::Failure { status: Some(status), body: excerpt(&text) }),
            },
            Err(_) => Attempt::Fail(BackendError::Failure { status: Some(status), body: excerpt(&text) }),
        }
    }
}

impl Generator for RemoteBackend {
    fn backend_id(&self) -> &str {
        &self.id
    }

    fn generate(&self, req: &GenerationRequest) -> Result<GenerationResult, BackendError> {
        req.validate()?;
        let body = self.body(req);
        let start = Instant::now();
        let mut attempts = 0;
        loop {
            attempts += 1;
            match self.attempt(&body) {
                Attempt::Done(text, truncated) => {
                    return Ok(GenerationResult {
                        text,
                        backend_id: self.id.clone(),
                        latency_ms: start.elapsed().as_millis() as u64,
                        truncated,
                        attempts,
                    })
                }
                Attempt::Fail(e) => return Err(e),
                Attempt::Retry(e) if attempts >= self.config.max_attempts => return Err(e),
                Attempt::Retry(_) => {
                    let wait = self.config.backoff_base_ms.saturating_mul(1 << (attempts - 1).min(16));
                    std::thread::sleep(Duration::from_millis(wait));
                }
            }
        }
    }

    /// A single GET to the endpoint. Any answer below 500 counts as reachable;
    /// chat endpoints commonly reject GET with 404 or 405.
    fn health_check(&self) -> HealthStatus {
        let start = Instant::now();
        match self.agent.get(&self.config.endpoint).call() {
            Ok(resp) if resp.status().as_u16() < 500 => HealthStatus::Ok { latency_ms: start.elapsed().as_millis() as u64 },
            Ok(resp) => HealthStatus::Unreachable {
                cause: format!("endpoint answered {}", resp.status()),
                status: Some(resp.status().as_u16()),
            },
            Err(e) => HealthStatus::Unreachable { cause: e.to_string(), status: None },
        }
    }
}
