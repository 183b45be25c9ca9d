//! Blocking HTTP plumbing shared by acquisition and QA generation: a retrying
//! client with exponential backoff and a per-host politeness limiter.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use thiserror::Error;

/// Response bodies above this size are refused (arXiv e-prints are well below).
const MAX_BODY_BYTES: u64 = 512 * 1024 * 1024;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum HttpError {
    #[error("network error: {0}")]
    Network(String),
    #[error("rate limited after {attempts} attempts (last status {status})")]
    RateLimited { attempts: u32, status: u16 },
    #[error("http status {status}: {body}")]
    Status { status: u16, body: String },
}

/// Exponential backoff: delay before attempt `n+1` is `base * factor^(n-1)`,
/// raised to the server's `Retry-After` hint when one is given.
#[derive(Debug, Clone, PartialEq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
    pub factor: f64,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 5,
            base_delay: Duration::from_secs(1),
            factor: 2.0,
            max_delay: Duration::from_secs(120),
        }
    }
}

impl RetryPolicy {
    /// A policy that retries without sleeping. Used by tests and mock runs.
    pub fn immediate(max_attempts: u32) -> Self {
        Self {
            max_attempts,
            base_delay: Duration::ZERO,
            factor: 2.0,
            max_delay: Duration::ZERO,
        }
    }

    /// Delay after the `failed_attempts`-th failure (1-based).
    pub fn delay_after(&self, failed_attempts: u32, retry_after: Option<Duration>) -> Duration {
        let exp = failed_attempts.saturating_sub(1).min(30) as i32;
        let backoff = self.base_delay.mul_f64(self.factor.powi(exp));
        let backoff = backoff.min(self.max_delay);
        match retry_after {
            Some(hint) => backoff.max(hint.min(self.max_delay)),
            None => backoff,
        }
    }
}

/// Minimum spacing between requests to the same host.
#[derive(Debug)]
pub struct RateLimiter {
    min_interval: Duration,
    next_slot: Mutex<HashMap<String, Instant>>,
}

impl RateLimiter {
    pub fn new(min_interval: Duration) -> Self {
        Self {
            min_interval,
            next_slot: Mutex::new(HashMap::new()),
        }
    }

    pub fn min_interval(&self) -> Duration {
        self.min_interval
    }

    /// Blocks until the caller may issue a request to `host`.
    pub fn acquire(&self, host: &str) {
        if self.min_interval.is_zero() {
            return;
        }
        let wait = {
            let mut slots = self.next_slot.lock().expect("rate limiter poisoned");
            let now = Instant::now();
            let slot = slots.get(host).copied().unwrap_or(now).max(now);
            slots.insert(host.to_string(), slot + self.min_interval);
            slot - now
        };
        if !wait.is_zero() {
            thread::sleep(wait);
        }
    }
}

impl Default for RateLimiter {
    fn default() -> Self {
        Self::new(Duration::from_secs(3))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reply {
    pub status: u16,
    pub body: Vec<u8>,
}

#[derive(Clone)]
pub struct HttpClient {
    agent: ureq::Agent,
    retry: RetryPolicy,
    limiter: Arc<RateLimiter>,
}

impl HttpClient {
    pub fn new(retry: RetryPolicy, limiter: Arc<RateLimiter>, timeout: Duration) -> Self {
        let config = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(timeout))
            .user_agent(concat!("corpusforge/", env!("CARGO_PKG_VERSION")))
            .build();
        Self {
            agent: ureq::Agent::new_with_config(config),
            retry,
            limiter,
        }
    }

    pub fn retry_policy(&self) -> &RetryPolicy {
        &self.retry
    }

    pub fn get(&self, url: &str) -> Result<Vec<u8>, HttpError> {
        self.execute(url, |agent| agent.get(url).call()).map(|reply| reply.body)
    }

    /// POSTs a JSON body. `headers` are added verbatim.
    pub fn post_json(
        &self,
        url: &str,
        headers: &[(&str, String)],
        body: &serde_json::Value,
    ) -> Result<Reply, HttpError> {
        let payload = serde_json::to_vec(body).map_err(|e| HttpError::Network(e.to_string()))?;
        self.execute(url, |agent| {
            let mut req = agent.post(url).header("Content-Type", "application/json");
            for (name, value) in headers {
                req = req.header(*name, value.as_str());
            }
            req.send(&payload[..])
        })
    }

    fn execute<F>(&self, url: &str, send: F) -> Result<Reply, HttpError>
    where
        F: Fn(&ureq::Agent) -> Result<ureq::http::Response<ureq::Body>, ureq::Error>,
    {
        let host = host_of(url);
        let mut attempt = 0;
        loop {
            attempt += 1;
            self.limiter.acquire(&host);
            let (failure, hint) = match send(&self.agent) {
                Ok(mut resp) => {
                    let status = resp.status().as_u16();
                    let hint = retry_after(&resp);
                    let body = resp
                        .body_mut()
                        .with_config()
                        .limit(MAX_BODY_BYTES)
                        .read_to_vec()
                        .map_err(|e| HttpError::Network(e.to_string()))?;
                    if (200..300).contains(&status) {
                        return Ok(Reply { status, body });
                    }
                    let text = String::from_utf8_lossy(&body).into_owned();
                    if !is_retryable(status) {
                        return Err(HttpError::Status { status, body: text });
                    }
                    if attempt >= self.retry.max_attempts {
                        return Err(match status {
                            429 | 503 => HttpError::RateLimited {
                                attempts: attempt,
                                status,
                            },
                            _ => HttpError::Status { status, body: text },
                        });
                    }
                    (status, hint)
                }
                Err(e) => {
                    if attempt >= self.retry.max_attempts {
                        return Err(HttpError::Network(e.to_string()));
                    }
                    (0, None)
                }
            };
            let delay = self.retry.delay_after(attempt, hint);
            log::debug!(target: "http", "attempt {attempt} to {url} failed (status {failure}), retrying in {delay:?}");
            if !delay.is_zero() {
                thread::sleep(delay);
            }
        }
    }
}

fn is_retryable(status: u16) -> bool {
    status == 429 || (500..600).contains(&status)
}

fn retry_after(resp: &ureq::http::Response<ureq::Body>) -> Option<Duration> {
    resp.headers()
        .get("retry-after")
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.trim().parse::<u64>().ok())
        .map(Duration::from_secs)
}

/// Host (with port) of an absolute URL; the whole string if it has no scheme.
pub fn host_of(url: &str) -> String {
    let rest = url.split_once("://").map(|(_, r)| r).unwrap_or(url);
    rest.split(['/', '?', '#']).next().unwrap_or("").to_string()
}
