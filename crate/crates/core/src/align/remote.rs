//! HTTP client for an alignment service.
//!
//! `POST {endpoint}/v1/align` takes `{"pairs": [{"summary_prop", "doc_prop"}]}`
//! and answers `{"scores": [..]}` positionally; `GET {endpoint}/v1/health`
//! answers `{"status": "ok", "model_id": ..}`.

use std::sync::{Condvar, Mutex};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{Scorer, ScorerSpec};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub attempts: u32,
    /// Delay before the second attempt; doubles after every further failure.
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            attempts: 3,
            base_delay: Duration::from_secs(1),
        }
    }
}

#[derive(Serialize)]
struct PairBody<'a> {
    summary_prop: &'a str,
    doc_prop: &'a str,
}

#[derive(Serialize)]
struct AlignRequest<'a> {
    pairs: Vec<PairBody<'a>>,
}

#[derive(Deserialize)]
struct AlignResponse {
    scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct Health {
    pub status: String,
    pub model_id: String,
}

/// Counting gate for in-flight requests.
#[derive(Debug)]
struct Gate {
    free: Mutex<usize>,
    released: Condvar,
}

impl Gate {
    fn new(slots: usize) -> Self {
        Gate {
            free: Mutex::new(slots),
            released: Condvar::new(),
        }
    }

    fn acquire(&self) -> GateSlot<'_> {
        let mut free = self.free.lock().expect("gate lock");
        while *free == 0 {
            free = self.released.wait(free).expect("gate lock");
        }
        *free -= 1;
        GateSlot(self)
    }
}

struct GateSlot<'a>(&'a Gate);

impl Drop for GateSlot<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().expect("gate lock") += 1;
        self.0.released.notify_one();
    }
}

enum Failure {
    Retryable(String),
    Fatal(String),
}

#[derive(Debug)]
pub struct RemoteScorer {
    endpoint: String,
    batch_size: usize,
    retry: RetryPolicy,
    agent: ureq::Agent,
    gate: Gate,
}

impl RemoteScorer {
    pub fn new(spec: &ScorerSpec) -> Result<Self> {
        let endpoint = spec
            .endpoint()
            .ok_or_else(|| Error::Invalid("remote scorer needs an endpoint".into()))?;
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(120)))
            .build()
            .into();
        Ok(RemoteScorer {
            endpoint: endpoint.trim_end_matches('/').to_string(),
            batch_size: spec.batch_size(),
            retry: RetryPolicy::default(),
            agent,
            gate: Gate::new(spec.max_in_flight()),
        })
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    fn transport(&self, message: impl Into<String>) -> Error {
        Error::Transport {
            endpoint: self.endpoint.clone(),
            message: message.into(),
        }
    }

    fn protocol(&self, message: impl Into<String>) -> Error {
        Error::Protocol {
            endpoint: self.endpoint.clone(),
            message: message.into(),
        }
    }

    pub fn health(&self) -> Result<Health> {
        let url = format!("{}/v1/health", self.endpoint);
        let mut response = self
            .agent
            .get(&url)
            .call()
            .map_err(|e| self.transport(e.to_string()))?;
        if !response.status().is_success() {
            return Err(self.transport(format!("status {}", response.status())));
        }
        response
            .body_mut()
            .read_json()
            .map_err(|e| self.protocol(e.to_string()))
    }

    fn post_once(&self, request: &AlignRequest<'_>) -> std::result::Result<String, Failure> {
        let url = format!("{}/v1/align", self.endpoint);
        let mut response = self
            .agent
            .post(&url)
            .send_json(request)
            .map_err(|e| Failure::Retryable(e.to_string()))?;
        let status = response.status();
        let body = response
            .body_mut()
            .read_to_string()
            .map_err(|e| Failure::Retryable(e.to_string()))?;
        if status.is_success() {
            Ok(body)
        } else if status.is_server_error() {
            Err(Failure::Retryable(format!("status {status}: {body}")))
        } else {
            Err(Failure::Fatal(format!("status {status}: {body}")))
        }
    }

    fn post_with_retry(&self, request: &AlignRequest<'_>) -> Result<String> {
        let _slot = self.gate.acquire();
        let mut delay = self.retry.base_delay;
        let mut last = String::new();
        for attempt in 0..self.retry.attempts.max(1) {
            if attempt > 0 {
                thread::sleep(delay);
                delay *= 2;
            }
            match self.post_once(request) {
                Ok(body) => return Ok(body),
                Err(Failure::Fatal(message)) => return Err(self.transport(message)),
                Err(Failure::Retryable(message)) => last = message,
            }
        }
        Err(self.transport(format!(
            "failed after {} attempts: {last}",
            self.retry.attempts.max(1)
        )))
    }
}

impl Scorer for RemoteScorer {
    fn scorer_id(&self) -> String {
        format!("remote:{}", self.endpoint)
    }

    /// Score one batch; replies are checked for length and range before use.
    fn score_batch(&self, pairs: &[(&str, &str)]) -> Result<Vec<f64>> {
        if pairs.is_empty() {
            return Err(Error::Invalid("empty scoring batch".into()));
        }
        if pairs.len() > self.batch_size {
            return Err(Error::Invalid(format!(
                "batch of {} pairs exceeds batch size {}",
                pairs.len(),
                self.batch_size
            )));
        }
        let request = AlignRequest {
            pairs: pairs
                .iter()
                .map(|&(summary_prop, doc_prop)| PairBody {
                    summary_prop,
                    doc_prop,
                })
                .collect(),
        };
        let body = self.post_with_retry(&request)?;
        let response: AlignResponse =
            serde_json::from_str(&body).map_err(|e| self.protocol(e.to_string()))?;
        if response.scores.len() != pairs.len() {
            return Err(self.protocol(format!(
                "{} scores returned for {} pairs",
                response.scores.len(),
                pairs.len()
            )));
        }
        for (i, &score) in response.scores.iter().enumerate() {
            if !(0.0..=1.0).contains(&score) {
                return Err(Error::ScoreRange {
                    what: format!("response index {i} from {}", self.endpoint),
                    score,
                });
            }
        }
        Ok(response.scores)
    }
}
