//! Text-generation backends.
//!
//! [`Generator`] is the seam between the engine and a language model. The
//! [`ScriptedBackend`] replays canned responses and makes the whole pipeline
//! deterministic; the HTTP chat-completion client lives in the `medconsult`
//! crate.

use alloc::string::String;
use alloc::vec::Vec;
use core::sync::atomic::{AtomicU64, AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub prompt: String,
    pub max_tokens: u32,
    pub temperature: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop: Option<Vec<String>>,
}

impl GenerationRequest {
    pub fn new(prompt: impl Into<String>) -> Self {
        GenerationRequest { prompt: prompt.into(), max_tokens: 512, temperature: 0.0, stop: None }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if self.prompt.trim().is_empty() {
            return Err(BackendError::InvalidRequest("prompt is empty"));
        }
        if self.max_tokens == 0 {
            return Err(BackendError::InvalidRequest("max_tokens must be at least 1"));
        }
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(BackendError::InvalidRequest("temperature must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationResult {
    pub text: String,
    pub backend_id: String,
    pub latency_ms: u64,
    pub truncated: bool,
    /// Requests made, including retries.
    pub attempts: u32,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BackendError {
    #[error("invalid request: {0}")]
    InvalidRequest(&'static str),
    #[error("backend failure (status {status:?}): {body}")]
    Failure { status: Option<u16>, body: String },
    #[error("backend timed out after {timeout_ms} ms")]
    Timeout { timeout_ms: u64 },
    #[error("script has no responses")]
    EmptyScript,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum HealthStatus {
    Ok { latency_ms: u64 },
    Unreachable {
        cause: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        status: Option<u16>,
    },
}

impl HealthStatus {
    pub fn is_ok(&self) -> bool {
        matches!(self, HealthStatus::Ok { .. })
    }
}

pub trait Generator: Send + Sync {
    fn backend_id(&self) -> &str;
    fn generate(&self, req: &GenerationRequest) -> Result<GenerationResult, BackendError>;
    fn health_check(&self) -> HealthStatus;
}

/// Replays a fixed list of responses, cycling when exhausted.
#[derive(Debug)]
pub struct ScriptedBackend {
    script: Vec<String>,
    cursor: AtomicUsize,
    calls: AtomicU64,
}

impl ScriptedBackend {
    pub fn new<I, S>(script: I) -> Result<Self, BackendError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let script: Vec<String> = script.into_iter().map(Into::into).collect();
        if script.is_empty() {
            return Err(BackendError::EmptyScript);
        }
        Ok(ScriptedBackend { script, cursor: AtomicUsize::new(0), calls: AtomicU64::new(0) })
    }

    /// Total successful `generate` calls so far.
    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn script(&self) -> &[String] {
        &self.script
    }
}

impl Generator for ScriptedBackend {
    fn backend_id(&self) -> &str {
        "scripted"
    }

    fn generate(&self, req: &GenerationRequest) -> Result<GenerationResult, BackendError> {
        req.validate()?;
        let n = self.script.len();
        let i = self.cursor.fetch_add(1, Ordering::SeqCst) % n;
        self.calls.fetch_add(1, Ordering::SeqCst);
        Ok(GenerationResult {
            text: self.script[i].clone(),
            backend_id: "scripted".into(),
            latency_ms: 0,
            truncated: false,
            attempts: 1,
        })
    }

    fn health_check(&self) -> HealthStatus {
        HealthStatus::Ok { latency_ms: 0 }
    }
}

impl<G: Generator + ?Sized> Generator for &G {
    fn backend_id(&self) -> &str {
        (**self).backend_id()
    }
    fn generate(&self, req: &GenerationRequest) -> Result<GenerationResult, BackendError> {
        (**self).generate(req)
    }
    fn health_check(&self) -> HealthStatus {
        (**self).health_check()
    }
}

impl<G: Generator + ?Sized> Generator for alloc::boxed::Box<G> {
    fn backend_id(&self) -> &str {
        (**self).backend_id()
    }
    fn generate(&self, req: &GenerationRequest) -> Result<GenerationResult, BackendError> {
        (**self).generate(req)
    }
    fn health_check(&self) -> HealthStatus {
        (**self).health_check()
    }
}

impl<G: Generator + ?Sized> Generator for alloc::sync::Arc<G> {
    fn backend_id(&self) -> &str {
        (**self).backend_id()
    }
    fn generate(&self, req: &GenerationRequest) -> Result<GenerationResult, BackendError> {
        (**self).generate(req)
    }
    fn health_check(&self) -> HealthStatus {
        (**self).health_check()
    }
}
