//! Prompt dispatch to inference backends, with an append-only response cache.
//!
//! Transport problems never surface as errors here: they are recorded in
//! [`RawResponse::transport_status`] and the harness decides what to do with
//! them. The only hard failures come from the cache, which is the source of
//! truth for resumable runs.

mod cache;
mod http;
mod stub;

use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{mpsc, Arc};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use cache::{CacheError, ResponseCache};
pub use http::HttpBackend;
pub use stub::StubBackend;

use crate::label::RowId;

/// Hex SHA-256 of the prompt bytes.
pub fn fingerprint(prompt: &str) -> String {
    hex::encode(Sha256::digest(prompt.as_bytes()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransportStatus {
    Ok,
    Timeout,
    HttpError(u16),
    /// The server answered but carried no completion text.
    Empty,
    /// Connection could not be established.
    Unreachable,
}

impl TransportStatus {
    pub fn is_ok(self) -> bool {
        self == TransportStatus::Ok
    }

    fn is_retryable(self) -> bool {
        match self {
            TransportStatus::Timeout | TransportStatus::Unreachable => true,
            TransportStatus::HttpError(code) => code == 429 || (500..600).contains(&code),
            TransportStatus::Ok | TransportStatus::Empty => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawResponse {
    pub row_id: RowId,
    pub model_id: String,
    pub prompt_fingerprint: String,
    pub completion_text: String,
    pub transport_status: TransportStatus,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    #[default]
    HttpCompletion,
    Stub,
}

/// Only greedy decoding is supported; temperature is always 0.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decoding {
    #[default]
    Greedy,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BackendConfigError {
    #[error("backend `{0}`: max_new_tokens must be at least 1")]
    MaxNewTokens(String),
    #[error("backend `{0}`: max_in_flight must be at least 1")]
    MaxInFlight(String),
    #[error("backend `{0}`: http_completion requires endpoint_url")]
    MissingEndpoint(String),
    #[error("backend `{0}`: request_timeout_secs must be positive")]
    Timeout(String),
    #[error("backend has an empty model_id")]
    EmptyModelId,
}

fn default_max_new_tokens() -> u32 {
    8
}
fn default_timeout_secs() -> f64 {
    60.0
}
fn default_max_retries() -> u32 {
    3
}
fn default_max_in_flight() -> usize {
    4
}
fn default_backoff_ms() -> u64 {
    500
}
fn default_auth_header() -> String {
    "Authorization".to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    #[serde(default)]
    pub kind: BackendKind,
    pub model_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint_url: Option<String>,
    #[serde(default = "default_max_new_tokens")]
    pub max_new_tokens: u32,
    #[serde(default)]
    pub decoding: Decoding,
    #[serde(default = "default_timeout_secs")]
    pub request_timeout_secs: f64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default = "default_max_in_flight")]
    pub max_in_flight: usize,
    /// First retry delay; doubles on every further attempt.
    #[serde(default = "default_backoff_ms")]
    pub retry_backoff_ms: u64,
    /// Name of the environment variable holding the API key, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api_key_env: Option<String>,
    #[serde(default = "default_auth_header")]
    pub auth_header: String,
    /// Stub only: completion returned when the prompt is not in the table.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stub_default: Option<String>,
    /// Stub only: prompt fingerprint to completion.
    #[serde(default, skip_serializing_if = "std::collections::BTreeMap::is_empty")]
    pub stub_responses: std::collections::BTreeMap<String, String>,
}

impl BackendConfig {
    pub fn new(kind: BackendKind, model_id: impl Into<String>) -> Self {
        BackendConfig {
            kind,
            model_id: model_id.into(),
            endpoint_url: None,
            max_new_tokens: default_max_new_tokens(),
            decoding: Decoding::Greedy,
            request_timeout_secs: default_timeout_secs(),
            max_retries: default_max_retries(),
            max_in_flight: default_max_in_flight(),
            retry_backoff_ms: default_backoff_ms(),
            api_key_env: None,
            auth_header: default_auth_header(),
            stub_default: None,
            stub_responses: Default::default(),
        }
    }

    pub fn validate(&self) -> Result<(), BackendConfigError> {
        if self.model_id.trim().is_empty() {
            return Err(BackendConfigError::EmptyModelId);
        }
        if self.max_new_tokens < 1 {
            return Err(BackendConfigError::MaxNewTokens(self.model_id.clone()));
        }
        if self.max_in_flight < 1 {
            return Err(BackendConfigError::MaxInFlight(self.model_id.clone()));
        }
        if self.request_timeout_secs.is_nan() || self.request_timeout_secs <= 0.0 {
            return Err(BackendConfigError::Timeout(self.model_id.clone()));
        }
        if self.kind == BackendKind::HttpCompletion && self.endpoint_url.is_none() {
            return Err(BackendConfigError::MissingEndpoint(self.model_id.clone()));
        }
        Ok(())
    }

    pub fn retry_policy(&self) -> RetryPolicy {
        RetryPolicy { max_retries: self.max_retries, base_delay: Duration::from_millis(self.retry_backoff_ms) }
    }

    /// Instantiates the configured backend.
    pub fn build(&self) -> Result<Arc<dyn Backend>, BackendConfigError> {
        self.validate()?;
        Ok(match self.kind {
            BackendKind::HttpCompletion => Arc::new(HttpBackend::new(self.clone())),
            BackendKind::Stub => {
                let mut stub = StubBackend::new(&self.model_id).with_retry_policy(self.retry_policy());
                if let Some(default) = &self.stub_default {
                    stub = stub.with_default(default.clone());
                }
                for (fp, text) in &self.stub_responses {
                    stub.insert_fingerprint(fp.clone(), text.clone());
                }
                Arc::new(stub)
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay: Duration,
}

impl RetryPolicy {
    pub const NONE: RetryPolicy = RetryPolicy { max_retries: 0, base_delay: Duration::ZERO };

    fn delay(&self, retry: u32) -> Duration {
        self.base_delay.saturating_mul(1u32 << retry.min(16))
    }
}

/// An inference service that answers one prompt per call.
pub trait Backend: Send + Sync {
    fn model_id(&self) -> &str;

    /// A single attempt; `Err` carries the failed transport status.
    fn complete(&self, prompt: &str) -> Result<String, TransportStatus>;

    fn retry_policy(&self) -> RetryPolicy {
        RetryPolicy::NONE
    }
}

/// Sends one prompt, retrying transient failures with exponential backoff.
pub fn classify_prompt(row_id: &RowId, prompt: &str, backend: &dyn Backend) -> RawResponse {
    let policy = backend.retry_policy();
    let mut attempt = 0;
    let (completion_text, transport_status) = loop {
        match backend.complete(prompt) {
            Ok(text) => break (text, TransportStatus::Ok),
            Err(status) if status.is_retryable() && attempt < policy.max_retries => {
                log::debug!("{}: {status:?} on row {row_id}, retrying", backend.model_id());
                thread::sleep(policy.delay(attempt));
                attempt += 1;
            }
            Err(status) => break (String::new(), status),
        }
    };
    RawResponse {
        row_id: row_id.clone(),
        model_id: backend.model_id().to_string(),
        prompt_fingerprint: fingerprint(prompt),
        completion_text,
        transport_status,
    }
}

/// Cache-first dispatch. Only successful responses are stored.
pub fn cached_classify(
    row_id: &RowId,
    prompt: &str,
    backend: &dyn Backend,
    cache: &ResponseCache,
) -> Result<RawResponse, CacheError> {
    let fp = fingerprint(prompt);
    if let Some(mut hit) = cache.lookup(backend.model_id(), &fp) {
        hit.row_id = row_id.clone();
        return Ok(hit);
    }
    let response = classify_prompt(row_id, prompt, backend);
    if response.transport_status.is_ok() {
        cache.append(&response)?;
    }
    Ok(response)
}

/// Dispatches a batch with at most `max_in_flight` outstanding requests.
///
/// Output order matches input order regardless of completion order.
pub fn classify_batch(
    items: &[(RowId, String)],
    backend: &dyn Backend,
    cache: &ResponseCache,
    max_in_flight: usize,
) -> Result<Vec<RawResponse>, CacheError> {
    let workers = max_in_flight.max(1).min(items.len().max(1));
    let next = AtomicUsize::new(0);
    let abort = AtomicBool::new(false);
    let (tx, rx) = mpsc::channel();

    thread::scope(|scope| {
        for _ in 0..workers {
            let tx = tx.clone();
            let (next, abort) = (&next, &abort);
            scope.spawn(move || loop {
                if abort.load(Ordering::Relaxed) {
                    break;
                }
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some((row_id, prompt)) = items.get(i) else { break };
                let result = cached_classify(row_id, prompt, backend, cache);
                if result.is_err() {
                    abort.store(true, Ordering::Relaxed);
                }
                if tx.send((i, result)).is_err() {
                    break;
                }
            });
        }
    });
    drop(tx);

    let mut slots: Vec<Option<RawResponse>> = vec![None; items.len()];
    for (i, result) in rx {
        slots[i] = Some(result?);
    }
    Ok(slots.into_iter().map(|s| s.expect("every item dispatched")).collect())
}
