//! Blocking HTTP adapters for text-to-image and detector services.
//!
//! Credentials are read from environment variables named in the config, at
//! request time, and are sent only as an `Authorization: Bearer` header to
//! the configured submit, poll and detector endpoints. Image downloads are
//! unauthenticated.

mod detector;
mod json_path;
mod t2i;

use std::fmt;
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use log::debug;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use detector::{DetectorClient, DetectorClientConfig};
pub use json_path::select_json;
pub use t2i::{T2IClient, T2IClientConfig};

/// Bodies quoted in errors are cut to this many characters.
pub const ERROR_BODY_LIMIT: usize = 512;

const MAX_BODY_BYTES: u64 = 64 * 1024 * 1024;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RequestFailure {
    Timeout,
    Status { status: u16, body: String },
    Transport { message: String, retryable: bool },
}

impl RequestFailure {
    /// Timeouts, connection failures, 429 and 5xx are worth retrying.
    pub fn is_retryable(&self) -> bool {
        match self {
            RequestFailure::Timeout => true,
            RequestFailure::Status { status, .. } => *status == 429 || *status >= 500,
            RequestFailure::Transport { retryable, .. } => *retryable,
        }
    }
}

impl fmt::Display for RequestFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RequestFailure::Timeout => f.write_str("timed out"),
            RequestFailure::Status { status, body } => write!(f, "HTTP {status}: {body}"),
            RequestFailure::Transport { message, .. } => f.write_str(message),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{failure} (after {attempts} attempt(s))")]
pub struct RequestError {
    pub attempts: u32,
    pub failure: RequestFailure,
}

impl RequestError {
    pub fn status(&self) -> Option<u16> {
        match self.failure {
            RequestFailure::Status { status, .. } => Some(status),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ClientError {
    #[error("credential environment variable `{var}` is not set")]
    MissingCredential { var: String },
    #[error("task submission rejected: {0}")]
    Submit(RequestError),
    #[error("task status poll failed: {0}")]
    Poll(RequestError),
    #[error("task {task_id} ended in state {state}")]
    TaskFailed { task_id: String, state: String },
    #[error("task {task_id} still not finished after {polls} polls")]
    PollExhausted { task_id: String, polls: u32 },
    #[error("image download failed: {0}")]
    Download(RequestError),
    #[error("detector request failed: {0}")]
    Detect(RequestError),
    #[error("response field `{selector}` missing or malformed in {body}")]
    Protocol { selector: String, body: String },
    #[error("detector probability {0} outside [0, 1]")]
    OutOfRange(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetryPolicy {
    /// Total attempts per request, first one included.
    pub max_attempts: u32,
    pub initial_backoff_ms: u64,
    pub backoff_multiplier: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 3,
            initial_backoff_ms: 500,
            backoff_multiplier: 2.0,
        }
    }
}

impl RetryPolicy {
    fn backoff(&self, retry: u32) -> Duration {
        let factor = self.backoff_multiplier.max(1.0).powi(retry as i32);
        Duration::from_secs_f64(self.initial_backoff_ms as f64 / 1000.0 * factor)
    }

    /// Runs `attempt` until it succeeds, fails with a non-retryable
    /// failure, or `max_attempts` is used up.
    pub fn run<T>(&self, mut attempt: impl FnMut() -> Result<T, RequestFailure>) -> Result<T, RequestError> {
        let max = self.max_attempts.max(1);
        let mut n = 0;
        loop {
            n += 1;
            match attempt() {
                Ok(v) => return Ok(v),
                Err(failure) if failure.is_retryable() && n < max => {
                    let wait = self.backoff(n - 1);
                    debug!("attempt {n}/{max} failed ({failure}); retrying in {wait:?}");
                    thread::sleep(wait);
                }
                Err(failure) => return Err(RequestError { attempts: n, failure }),
            }
        }
    }
}

/// Client-side token bucket. Holds at most one token; refills at
/// `requests_per_minute / 60` tokens per second. A rate of zero disables
/// limiting.
#[derive(Debug)]
pub struct RateLimiter {
    per_second: f64,
    state: Mutex<(f64, Instant)>,
}

impl RateLimiter {
    pub fn per_minute(requests_per_minute: f64) -> Self {
        RateLimiter {
            per_second: requests_per_minute.max(0.0) / 60.0,
            state: Mutex::new((1.0, Instant::now())),
        }
    }

    /// Blocks until a request may be sent.
    pub fn acquire(&self) {
        if self.per_second <= 0.0 {
            return;
        }
        let mut guard = self.state.lock().unwrap_or_else(|p| p.into_inner());
        loop {
            let (tokens, last) = *guard;
            let now = Instant::now();
            let tokens = (tokens + now.duration_since(last).as_secs_f64() * self.per_second).min(1.0);
            if tokens >= 1.0 {
                *guard = (tokens - 1.0, now);
                return;
            }
            *guard = (tokens, now);
            thread::sleep(Duration::from_secs_f64((1.0 - tokens) / self.per_second));
        }
    }
}

pub(crate) fn truncate_body(body: &[u8]) -> String {
    let text = String::from_utf8_lossy(body);
    if text.chars().count() <= ERROR_BODY_LIMIT {
        text.into_owned()
    } else {
        let mut cut: String = text.chars().take(ERROR_BODY_LIMIT).collect();
        cut.push('…');
        cut
    }
}

pub(crate) fn credential(var: Option<&str>) -> Result<Option<String>, ClientError> {
    match var {
        None => Ok(None),
        Some(var) => match std::env::var(var) {
            Ok(v) if !v.is_empty() => Ok(Some(v)),
            _ => Err(ClientError::MissingCredential { var: var.to_string() }),
        },
    }
}

pub(crate) fn agent(timeout: Duration) -> ureq::Agent {
    ureq::Agent::config_builder()
        .timeout_global(Some(timeout))
        .http_status_as_error(false)
        .build()
        .into()
}

fn classify(err: ureq::Error) -> RequestFailure {
    match err {
        ureq::Error::Timeout(_) => RequestFailure::Timeout,
        ureq::Error::Io(e) if matches!(e.kind(), std::io::ErrorKind::TimedOut | std::io::ErrorKind::WouldBlock) => {
            RequestFailure::Timeout
        }
        e @ (ureq::Error::Io(_) | ureq::Error::ConnectionFailed | ureq::Error::HostNotFound | ureq::Error::BodyStalled) => {
            RequestFailure::Transport {
                message: e.to_string(),
                retryable: true,
            }
        }
        e => RequestFailure::Transport {
            message: e.to_string(),
            retryable: false,
        },
    }
}

/// Reads a response into `Ok(body)` for 2xx and a [`RequestFailure`]
/// otherwise.
pub(crate) fn read_response(
    result: Result<ureq::http::Response<ureq::Body>, ureq::Error>,
) -> Result<Vec<u8>, RequestFailure> {
    let mut response = result.map_err(classify)?;
    let status = response.status().as_u16();
    let body = response
        .body_mut()
        .with_config()
        .limit(MAX_BODY_BYTES)
        .read_to_vec()
        .map_err(classify)?;
    if (200..300).contains(&status) {
        Ok(body)
    } else {
        Err(RequestFailure::Status {
            status,
            body: truncate_body(&body),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::cell::Cell;

    fn fast() -> RetryPolicy {
        RetryPolicy {
            max_attempts: 3,
            initial_backoff_ms: 0,
            backoff_multiplier: 1.0,
        }
    }

    #[test]
    fn retries_are_bounded() {
        let calls = Cell::new(0);
        let err = fast()
            .run::<()>(|| {
                calls.set(calls.get() + 1);
                Err(RequestFailure::Timeout)
            })
            .unwrap_err();
        assert_eq!(calls.get(), 3);
        assert_eq!(err.attempts, 3);
    }

    #[test]
    fn client_errors_are_not_retried() {
        let calls = Cell::new(0);
        let err = fast()
            .run::<()>(|| {
                calls.set(calls.get() + 1);
                Err(RequestFailure::Status {
                    status: 400,
                    body: "bad".into(),
                })
            })
            .unwrap_err();
        assert_eq!(calls.get(), 1);
        assert_eq!(err.status(), Some(400));
    }

    #[test]
    fn throttling_is_retried() {
        let calls = Cell::new(0);
        let out = fast().run(|| {
            calls.set(calls.get() + 1);
            if calls.get() == 1 {
                Err(RequestFailure::Status {
                    status: 429,
                    body: String::new(),
                })
            } else {
                Ok(7)
            }
        });
        assert_eq!(out, Ok(7));
        assert_eq!(calls.get(), 2);
    }

    #[test]
    fn retryable_set() {
        assert!(RequestFailure::Status { status: 503, body: String::new() }.is_retryable());
        assert!(!RequestFailure::Status { status: 404, body: String::new() }.is_retryable());
        assert!(RequestFailure::Timeout.is_retryable());
    }

    #[test]
    fn backoff_grows() {
        let p = RetryPolicy::default();
        assert_eq!(p.backoff(0), Duration::from_millis(500));
        assert_eq!(p.backoff(2), Duration::from_millis(2000));
    }

    #[test]
    fn rate_limiter_spaces_requests() {
        let limiter = RateLimiter::per_minute(1200.0); // one per 50 ms
        let start = Instant::now();
        for _ in 0..4 {
            limiter.acquire();
        }
        assert!(start.elapsed() >= Duration::from_millis(140), "{:?}", start.elapsed());
        let unlimited = RateLimiter::per_minute(0.0);
        let start = Instant::now();
        for _ in 0..1000 {
            unlimited.acquire();
        }
        assert!(start.elapsed() < Duration::from_millis(100));
    }

    #[test]
    fn long_bodies_are_truncated() {
        let body = "x".repeat(2000);
        let cut = truncate_body(body.as_bytes());
        assert_eq!(cut.chars().count(), ERROR_BODY_LIMIT + 1);
    }
}
