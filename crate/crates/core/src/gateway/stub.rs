use std::collections::{HashMap, VecDeque};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Mutex, RwLock};
use std::thread;
use std::time::Duration;

use super::{fingerprint, Backend, RetryPolicy, TransportStatus};

/// Table-driven backend for tests and offline runs.
///
/// Looks the prompt fingerprint up in a table, falling back to an optional
/// default completion; a prompt with neither yields `TransportStatus::Empty`.
/// Every call is counted and concurrent calls are tracked so tests can assert
/// on dispatch counts and the in-flight bound.
#[derive(Debug, Default)]
pub struct StubBackend {
    model_id: String,
    table: RwLock<HashMap<String, String>>,
    default: Option<String>,
    scripted_failures: Mutex<VecDeque<TransportStatus>>,
    latency: Duration,
    retry: Option<RetryPolicy>,
    calls: AtomicUsize,
    in_flight: AtomicUsize,
    peak_in_flight: AtomicUsize,
}

impl StubBackend {
    pub fn new(model_id: impl Into<String>) -> Self {
        StubBackend { model_id: model_id.into(), ..Default::default() }
    }

    pub fn with_default(mut self, text: impl Into<String>) -> Self {
        self.default = Some(text.into());
        self
    }

    /// Sleep this long inside every call.
    pub fn with_latency(mut self, latency: Duration) -> Self {
        self.latency = latency;
        self
    }

    pub fn with_retry_policy(mut self, policy: RetryPolicy) -> Self {
        self.retry = Some(policy);
        self
    }

    /// Failures returned, in order, by the next calls before normal lookup resumes.
    pub fn with_failures(self, failures: impl IntoIterator<Item = TransportStatus>) -> Self {
        self.scripted_failures.lock().unwrap().extend(failures);
        self
    }

    pub fn insert(&self, prompt: &str, completion: impl Into<String>) {
        self.insert_fingerprint(fingerprint(prompt), completion);
    }

    pub fn insert_fingerprint(&self, prompt_fingerprint: String, completion: impl Into<String>) {
        self.table.write().unwrap().insert(prompt_fingerprint, completion.into());
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn peak_in_flight(&self) -> usize {
        self.peak_in_flight.load(Ordering::SeqCst)
    }

    pub fn reset_counters(&self) {
        self.calls.store(0, Ordering::SeqCst);
        self.peak_in_flight.store(0, Ordering::SeqCst);
    }
}

impl Backend for StubBackend {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn complete(&self, prompt: &str) -> Result<String, TransportStatus> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let now = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        self.peak_in_flight.fetch_max(now, Ordering::SeqCst);
        if !self.latency.is_zero() {
            thread::sleep(self.latency);
        }

        let result = match self.scripted_failures.lock().unwrap().pop_front() {
            Some(status) => Err(status),
            None => self
                .table
                .read()
                .unwrap()
                .get(&fingerprint(prompt))
                .cloned()
                .or_else(|| self.default.clone())
                .ok_or(TransportStatus::Empty),
        };

        self.in_flight.fetch_sub(1, Ordering::SeqCst);
        result
    }

    fn retry_policy(&self) -> RetryPolicy {
        self.retry.unwrap_or(RetryPolicy::NONE)
    }
}
