//! JSON-over-HTTP with bounded exponential backoff, shared by the chat and
//! embedding clients.

use std::time::Duration;

use log::{debug, warn};
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    /// Retries after the first attempt.
    pub max_retries: u32,
    pub base_delay_ms: u64,
    pub max_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 3,
            base_delay_ms: 500,
            max_delay_ms: 30_000,
        }
    }
}

impl RetryPolicy {
    pub fn delay_for(&self, retry: u32) -> Duration {
        let factor = 1u64.checked_shl(retry).unwrap_or(u64::MAX);
        Duration::from_millis(self.base_delay_ms.saturating_mul(factor).min(self.max_delay_ms))
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TransportError {
    #[error("request timed out: {0}")]
    Timeout(String),
    #[error("connection failed: {0}")]
    Connect(String),
    #[error("server returned status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("gave up after {attempts} attempts: {last}")]
    RetriesExhausted { attempts: u32, last: Box<TransportError> },
}

impl TransportError {
    pub fn is_retryable(&self) -> bool {
        match self {
            TransportError::Timeout(_) | TransportError::Connect(_) => true,
            TransportError::Status { status, .. } => *status == 429 || *status >= 500,
            TransportError::Malformed(_) | TransportError::RetriesExhausted { .. } => false,
        }
    }

    /// Attempts made before this error surfaced.
    pub fn attempts(&self) -> u32 {
        match self {
            TransportError::RetriesExhausted { attempts, .. } => *attempts,
            _ => 1,
        }
    }
}

/// Endpoint settings common to both remote clients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointConfig {
    pub base_url: String,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: f64,
    #[serde(default)]
    pub retry: RetryPolicy,
}

fn default_timeout_secs() -> f64 {
    60.0
}

/// Blocking JSON poster with retry.
#[derive(Debug, Clone)]
pub struct JsonClient {
    http: ureq::Agent,
    base_url: String,
    api_key: Option<String>,
    retry: RetryPolicy,
}

/// Outcome of a successful call.
#[derive(Debug, Clone)]
pub struct JsonReply {
    pub body: Value,
    pub attempts: u32,
}

impl JsonClient {
    pub fn new(config: &EndpointConfig, api_key: Option<String>) -> Result<Self, TransportError> {
        if !(config.timeout_secs > 0.0 && config.timeout_secs.is_finite()) {
            return Err(TransportError::Connect(format!("invalid timeout {}", config.timeout_secs)));
        }
        let http: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(config.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self {
            http,
            base_url: config.base_url.trim_end_matches('/').to_string(),
            api_key,
            retry: config.retry.clone(),
        })
    }

    pub fn post(&self, path: &str, body: &Value) -> Result<JsonReply, TransportError> {
        let url = format!("{}/{}", self.base_url, path.trim_start_matches('/'));
        let mut attempt = 0;
        loop {
            attempt += 1;
            match self.post_once(&url, body) {
                Ok(body) => return Ok(JsonReply { body, attempts: attempt }),
                Err(err) if !err.is_retryable() => return Err(err),
                Err(err) => {
                    if attempt > self.retry.max_retries {
                        return Err(TransportError::RetriesExhausted {
                            attempts: attempt,
                            last: Box::new(err),
                        });
                    }
                    let delay = self.retry.delay_for(attempt - 1);
                    warn!("{url}: attempt {attempt} failed ({err}); retrying in {delay:?}");
                    std::thread::sleep(delay);
                }
            }
        }
    }

    fn post_once(&self, url: &str, body: &Value) -> Result<Value, TransportError> {
        let mut req = self.http.post(url).header("content-type", "application/json");
        if let Some(key) = &self.api_key {
            req = req.header("authorization", format!("Bearer {key}"));
        }
        let mut resp = req.send(body.to_string()).map_err(classify)?;
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().map_err(classify)?;
        debug!("{url} -> {status}");
        if !(200..300).contains(&status) {
            return Err(TransportError::Status { status, body: text });
        }
        serde_json::from_str(&text).map_err(|e| TransportError::Malformed(e.to_string()))
    }
}

fn classify(err: ureq::Error) -> TransportError {
    match err {
        ureq::Error::Timeout(_) => TransportError::Timeout(err.to_string()),
        ureq::Error::Io(ref io) if io.kind() == std::io::ErrorKind::TimedOut || io.kind() == std::io::ErrorKind::WouldBlock => {
            TransportError::Timeout(err.to_string())
        }
        ureq::Error::Protocol(_) | ureq::Error::BodyExceedsLimit(_) => TransportError::Malformed(err.to_string()),
        other => TransportError::Connect(other.to_string()),
    }
}
