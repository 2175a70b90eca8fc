use std::collections::BTreeMap;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{agent, credential, read_response, select_json, truncate_body, ClientError, RateLimiter, RetryPolicy};

/// Detector endpoint that accepts raw image bytes in a POST body and answers
/// with JSON containing the AI probability at `probability_field`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorClientConfig {
    pub url: String,
    pub auth_env_var: Option<String>,
    pub probability_field: String,
    pub content_type: String,
    pub timeout_ms: u64,
    pub extra_headers: BTreeMap<String, String>,
    pub requests_per_minute: f64,
    pub retry: RetryPolicy,
}

impl Default for DetectorClientConfig {
    fn default() -> Self {
        DetectorClientConfig {
            url: String::new(),
            auth_env_var: None,
            probability_field: "ai_probability".to_string(),
            content_type: "application/octet-stream".to_string(),
            timeout_ms: 30_000,
            extra_headers: BTreeMap::new(),
            requests_per_minute: 10.0,
            retry: RetryPolicy::default(),
        }
    }
}

pub struct DetectorClient {
    cfg: DetectorClientConfig,
    agent: ureq::Agent,
    limiter: RateLimiter,
}

impl DetectorClient {
    pub fn new(cfg: DetectorClientConfig) -> Self {
        let agent = agent(Duration::from_millis(cfg.timeout_ms));
        let limiter = RateLimiter::per_minute(cfg.requests_per_minute);
        DetectorClient { cfg, agent, limiter }
    }

    pub fn config(&self) -> &DetectorClientConfig {
        &self.cfg
    }

    /// Posts `image` and returns the probability it is AI-generated.
    pub fn detect_image(&self, image: &[u8]) -> Result<f64, ClientError> {
        let key = credential(self.cfg.auth_env_var.as_deref())?;
        let body = self
            .cfg
            .retry
            .run(|| {
                self.limiter.acquire();
                let mut req = self.agent.post(&self.cfg.url).header("Content-Type", &self.cfg.content_type);
                for (k, v) in &self.cfg.extra_headers {
                    req = req.header(k, v);
                }
                if let Some(key) = &key {
                    req = req.header("Authorization", format!("Bearer {key}"));
                }
                read_response(req.send(image))
            })
            .map_err(ClientError::Detect)?;
        extract_probability(&body, &self.cfg.probability_field)
    }
}

/// Pulls a numeric probability out of a detector response body.
pub(crate) fn extract_probability(body: &[u8], selector: &str) -> Result<f64, ClientError> {
    let protocol = || ClientError::Protocol {
        selector: selector.to_string(),
        body: truncate_body(body),
    };
    let value: Value = serde_json::from_slice(body).map_err(|_| protocol())?;
    let p = select_json(&value, selector).and_then(Value::as_f64).ok_or_else(protocol)?;
    if (0.0..=1.0).contains(&p) {
        Ok(p)
    } else {
        Err(ClientError::OutOfRange(p))
    }
}
