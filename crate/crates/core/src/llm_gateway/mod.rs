//! Chat-completion client shared by the teacher and both student models.
//!
//! A [`Gateway`] wraps a [`Backend`] (HTTP or mock) with retry and backoff.
//! [`Gateway::complete_batch`] runs requests on a bounded pool of scoped
//! threads and returns results in input order.

mod http;
mod mock;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use http::{HttpBackend, HttpEndpoint, API_KEY_ENV};
pub use mock::{fixture_key, MockBackend, Responder};

/// Upper bound on `n_samples` unless an endpoint overrides it.
pub const DEFAULT_SAMPLE_CAP: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self { role: Role::System, content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self { role: Role::User, content: content.into() }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self { role: Role::Assistant, content: content.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenRequest {
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub n_samples: usize,
    pub max_tokens: u32,
    pub model_id: String,
}

impl GenRequest {
    pub fn validate(&self, sample_cap: usize) -> Result<(), GatewayError> {
        let bad = |m: String| Err(GatewayError::InvalidRequest(m));
        if self.messages.is_empty() {
            return bad("no messages".into());
        }
        if let Some(m) = self
            .messages
            .iter()
            .find(|m| m.role != Role::Assistant && m.content.trim().is_empty())
        {
            return bad(format!("empty {:?} message", m.role));
        }
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return bad(format!("temperature {} is negative", self.temperature));
        }
        if self.n_samples == 0 || self.n_samples > sample_cap {
            return bad(format!("n_samples {} outside 1..={sample_cap}", self.n_samples));
        }
        if self.max_tokens == 0 {
            return bad("max_tokens must be at least 1".into());
        }
        Ok(())
    }
}

/// Model id, decoding temperature and token budget for one role.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenSettings {
    pub model_id: String,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl GenSettings {
    pub fn request(&self, messages: Vec<ChatMessage>, n_samples: usize) -> GenRequest {
        GenRequest {
            messages,
            temperature: self.temperature,
            n_samples,
            max_tokens: self.max_tokens,
            model_id: self.model_id.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Http,
    Mock,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenResult {
    pub completions: Vec<String>,
    pub backend: BackendKind,
    pub latency: Duration,
}

/// Failure reported by a backend for a single attempt.
#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum BackendError {
    /// Worth retrying: HTTP 408/429/5xx, timeouts, refused connections.
    #[error("transient failure{}: {message}", fmt_status(*status))]
    Transient {
        status: Option<u16>,
        message: String,
        retry_after: Option<Duration>,
    },
    #[error("request rejected{}: {message}", fmt_status(*status))]
    Fatal { status: Option<u16>, message: String },
    #[error("no mock fixture for key {key}")]
    MissingFixture { key: String },
}

fn fmt_status(status: Option<u16>) -> String {
    status.map(|s| format!(" (HTTP {s})")).unwrap_or_default()
}

impl BackendError {
    pub fn transient(status: Option<u16>, message: impl Into<String>) -> Self {
        BackendError::Transient { status, message: message.into(), retry_after: None }
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum GatewayError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("transport failed after {attempts} attempts{}: {message}", fmt_status(*status))]
    Transport {
        attempts: u32,
        status: Option<u16>,
        message: String,
    },
    #[error("request rejected{}: {message}", fmt_status(*status))]
    Rejected { status: Option<u16>, message: String },
    #[error("no mock fixture for key {key}")]
    MissingFixture { key: String },
    #[error("backend returned {got} completions, expected {expected}")]
    Incomplete { expected: usize, got: usize },
}

/// Produces completions for a request. Implementations must be shareable
/// across the batch worker threads.
pub trait Backend: Send + Sync {
    fn kind(&self) -> BackendKind;

    /// One attempt; the gateway handles retries.
    fn generate(&self, req: &GenRequest) -> Result<Vec<String>, BackendError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    /// Total attempts, including the first.
    pub max_attempts: u32,
    pub initial_backoff: Duration,
    pub max_backoff: Duration,
    pub multiplier: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            initial_backoff: Duration::from_millis(500),
            max_backoff: Duration::from_secs(30),
            multiplier: 2.0,
        }
    }
}

impl RetryPolicy {
    /// Delay before attempt `attempt + 1`, where `attempt` counts from 1.
    pub fn backoff(&self, attempt: u32) -> Duration {
        let factor = self.multiplier.powi(attempt.saturating_sub(1) as i32);
        self.initial_backoff.mul_f64(factor).min(self.max_backoff)
    }
}

#[derive(Clone)]
pub struct Gateway {
    backend: Arc<dyn Backend>,
    retry: RetryPolicy,
    sample_cap: usize,
}

impl std::fmt::Debug for Gateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Gateway")
            .field("backend", &self.backend.kind())
            .field("retry", &self.retry)
            .field("sample_cap", &self.sample_cap)
            .finish()
    }
}

impl Gateway {
    pub fn new(backend: impl Backend + 'static) -> Self {
        Self::from_arc(Arc::new(backend))
    }

    pub fn from_arc(backend: Arc<dyn Backend>) -> Self {
        Self {
            backend,
            retry: RetryPolicy::default(),
            sample_cap: DEFAULT_SAMPLE_CAP,
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_sample_cap(mut self, cap: usize) -> Self {
        self.sample_cap = cap;
        self
    }

    pub fn backend_kind(&self) -> BackendKind {
        self.backend.kind()
    }

    /// Generates `req.n_samples` completions, retrying transient failures
    /// with exponential backoff.
    pub fn complete(&self, req: &GenRequest) -> Result<GenResult, GatewayError> {
        req.validate(self.sample_cap)?;
        let started = Instant::now();
        let attempts = self.retry.max_attempts.max(1);
        let mut attempt = 0;
        loop {
            attempt += 1;
            match self.backend.generate(req) {
                Ok(completions) if completions.len() == req.n_samples => {
                    return Ok(GenResult {
                        completions,
                        backend: self.backend.kind(),
                        latency: started.elapsed(),
                    });
                }
                Ok(completions) => {
                    return Err(GatewayError::Incomplete {
                        expected: req.n_samples,
                        got: completions.len(),
                    })
                }
                Err(BackendError::Transient { status, message, retry_after }) => {
                    if attempt >= attempts {
                        return Err(GatewayError::Transport { attempts: attempt, status, message });
                    }
                    let delay = retry_after
                        .map(|d| d.min(self.retry.max_backoff))
                        .unwrap_or_else(|| self.retry.backoff(attempt));
                    tracing::debug!(attempt, ?status, ?delay, "retrying after transient failure");
                    std::thread::sleep(delay);
                }
                Err(BackendError::Fatal { status, message }) => {
                    return Err(GatewayError::Rejected { status, message })
                }
                Err(BackendError::MissingFixture { key }) => {
                    return Err(GatewayError::MissingFixture { key })
                }
            }
        }
    }

    /// Runs `reqs` with at most `parallelism` in flight. Results keep input
    /// order and failures stay per item.
    pub fn complete_batch(&self, reqs: &[GenRequest], parallelism: usize) -> BatchReport {
        let workers = parallelism.max(1).min(reqs.len().max(1));
        let next = AtomicUsize::new(0);
        let slots: Mutex<Vec<Option<Result<GenResult, GatewayError>>>> =
            Mutex::new(vec![None; reqs.len()]);
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    if i >= reqs.len() {
                        break;
                    }
                    let result = self.complete(&reqs[i]);
                    slots.lock().expect("batch slots poisoned")[i] = Some(result);
                });
            }
        });
        let results = slots
            .into_inner()
            .expect("batch slots poisoned")
            .into_iter()
            .map(|r| r.expect("every batch slot is filled"))
            .collect();
        BatchReport { results }
    }
}

#[derive(Debug, Clone)]
pub struct BatchReport {
    pub results: Vec<Result<GenResult, GatewayError>>,
}

impl BatchReport {
    pub fn success_count(&self) -> usize {
        self.results.iter().filter(|r| r.is_ok()).count()
    }

    /// `(index, error)` for every failed item.
    pub fn failures(&self) -> Vec<(usize, &GatewayError)> {
        self.results
            .iter()
            .enumerate()
            .filter_map(|(i, r)| r.as_ref().err().map(|e| (i, e)))
            .collect()
    }
}
