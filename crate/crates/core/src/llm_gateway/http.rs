use std::time::Duration;

use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde::{Deserialize, Serialize};

use super::{Backend, BackendError, BackendKind, ChatMessage, GenRequest};

/// Environment variable holding the bearer token for HTTP endpoints.
pub const API_KEY_ENV: &str = "TEN_API_KEY";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpEndpoint {
    /// Full chat-completions URL, e.g. `http://localhost:8000/v1/chat/completions`.
    pub url: String,
    pub timeout: Duration,
}

#[derive(Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    messages: &'a [ChatMessage],
    temperature: f64,
    n: usize,
    max_tokens: u32,
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireMessage,
}

#[derive(Deserialize)]
struct WireMessage {
    #[serde(default)]
    content: Option<String>,
}

/// Chat-completions client speaking `{model, messages, temperature, n,
/// max_tokens}` and reading `choices[].message.content`.
pub struct HttpBackend {
    client: Client,
    endpoint: HttpEndpoint,
    api_key: Option<String>,
}

impl HttpBackend {
    /// Reads the API key from [`API_KEY_ENV`] if set.
    pub fn new(endpoint: HttpEndpoint) -> Result<Self, BackendError> {
        let api_key = std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty());
        Self::with_api_key(endpoint, api_key)
    }

    pub fn with_api_key(endpoint: HttpEndpoint, api_key: Option<String>) -> Result<Self, BackendError> {
        let client = Client::builder()
            .timeout(endpoint.timeout)
            .build()
            .map_err(|e| BackendError::Fatal { status: None, message: e.to_string() })?;
        Ok(Self { client, endpoint, api_key })
    }

    fn call(&self, req: &GenRequest, n: usize) -> Result<Vec<String>, BackendError> {
        let body = WireRequest {
            model: &req.model_id,
            messages: &req.messages,
            temperature: req.temperature,
            n,
            max_tokens: req.max_tokens,
        };
        let mut builder = self.client.post(&self.endpoint.url).json(&body);
        if let Some(key) = &self.api_key {
            builder = builder.bearer_auth(key);
        }
        let response = builder.send().map_err(|e| {
            if e.is_timeout() || e.is_connect() || e.is_request() {
                BackendError::transient(None, e.to_string())
            } else {
                BackendError::Fatal { status: None, message: e.to_string() }
            }
        })?;

        let status = response.status();
        if !status.is_success() {
            let retry_after = response
                .headers()
                .get(reqwest::header::RETRY_AFTER)
                .and_then(|v| v.to_str().ok())
                .and_then(|v| v.trim().parse::<u64>().ok())
                .map(Duration::from_secs);
            let text = response.text().unwrap_or_default();
            let message = truncate(&text, 500);
            return Err(if is_retryable(status) {
                BackendError::Transient { status: Some(status.as_u16()), message, retry_after }
            } else {
                BackendError::Fatal { status: Some(status.as_u16()), message }
            });
        }

        let parsed: WireResponse = response
            .json()
            .map_err(|e| BackendError::Fatal { status: Some(status.as_u16()), message: e.to_string() })?;
        Ok(parsed
            .choices
            .into_iter()
            .map(|c| c.message.content.unwrap_or_default())
            .collect())
    }
}

fn is_retryable(status: StatusCode) -> bool {
    status == StatusCode::TOO_MANY_REQUESTS
        || status == StatusCode::REQUEST_TIMEOUT
        || status.is_server_error()
}

fn truncate(text: &str, max: usize) -> String {
    match text.char_indices().nth(max) {
        Some((i, _)) => format!("{}…", &text[..i]),
        None => text.to_string(),
    }
}

impl Backend for HttpBackend {
    fn kind(&self) -> BackendKind {
        BackendKind::Http
    }

    /// Servers that ignore `n` return fewer choices; the remainder is
    /// requested again until `n_samples` completions are collected.
    fn generate(&self, req: &GenRequest) -> Result<Vec<String>, BackendError> {
        let mut out = Vec::with_capacity(req.n_samples);
        while out.len() < req.n_samples {
            let got = self.call(req, req.n_samples - out.len())?;
            if got.is_empty() {
                return Err(BackendError::Fatal { status: None, message: "response had no choices".into() });
            }
            out.extend(got);
        }
        out.truncate(req.n_samples);
        Ok(out)
    }
}
