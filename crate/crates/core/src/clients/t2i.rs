use std::collections::BTreeMap;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{
    agent, credential, read_response, select_json, truncate_body, ClientError, RateLimiter, RetryPolicy,
};

/// Asynchronous submit / poll / download text-to-image API.
///
/// The submit body is `{"model": model_name, "input": {"prompt": ...}}`.
/// Responses are read through the `*_field` selectors (see
/// [`select_json`]). A submit response that already reports success with an
/// image URL is downloaded without polling, which covers synchronous APIs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct T2IClientConfig {
    pub submit_url: String,
    /// URL with a `{task_id}` placeholder.
    pub poll_url_template: String,
    pub model_name: String,
    /// Environment variable holding the API key; `None` sends no auth.
    pub auth_env_var: Option<String>,
    pub poll_interval_ms: u64,
    pub max_poll: u32,
    pub timeout_ms: u64,
    pub task_id_field: String,
    pub status_field: String,
    pub image_url_field: String,
    pub success_states: Vec<String>,
    pub failure_states: Vec<String>,
    /// Non-secret headers sent with submit and poll requests.
    pub extra_headers: BTreeMap<String, String>,
    pub requests_per_minute: f64,
    pub retry: RetryPolicy,
}

impl Default for T2IClientConfig {
    fn default() -> Self {
        T2IClientConfig {
            submit_url: String::new(),
            poll_url_template: String::new(),
            model_name: String::new(),
            auth_env_var: Some("T2I_API_KEY".to_string()),
            poll_interval_ms: 2000,
            max_poll: 60,
            timeout_ms: 30_000,
            task_id_field: "output.task_id".to_string(),
            status_field: "output.task_status".to_string(),
            image_url_field: "output.results.0.url".to_string(),
            success_states: vec!["SUCCEEDED".to_string()],
            failure_states: vec!["FAILED".to_string(), "CANCELED".to_string(), "UNKNOWN".to_string()],
            extra_headers: BTreeMap::new(),
            requests_per_minute: 10.0,
            retry: RetryPolicy::default(),
        }
    }
}

pub struct T2IClient {
    cfg: T2IClientConfig,
    agent: ureq::Agent,
    limiter: RateLimiter,
}

enum TaskState {
    Done(String),
    Pending,
}

impl T2IClient {
    pub fn new(cfg: T2IClientConfig) -> Self {
        let agent = agent(Duration::from_millis(cfg.timeout_ms));
        let limiter = RateLimiter::per_minute(cfg.requests_per_minute);
        T2IClient { cfg, agent, limiter }
    }

    pub fn config(&self) -> &T2IClientConfig {
        &self.cfg
    }

    /// Submits `prompt`, polls until the task finishes, and returns the
    /// downloaded image bytes exactly as served.
    pub fn generate_image(&self, prompt: &str) -> Result<Vec<u8>, ClientError> {
        let key = credential(self.cfg.auth_env_var.as_deref())?;
        let body = json!({"model": self.cfg.model_name, "input": {"prompt": prompt}});
        let submitted = self
            .cfg
            .retry
            .run(|| {
                self.limiter.acquire();
                let mut req = self.agent.post(&self.cfg.submit_url);
                for (k, v) in &self.cfg.extra_headers {
                    req = req.header(k, v);
                }
                if let Some(key) = &key {
                    req = req.header("Authorization", format!("Bearer {key}"));
                }
                read_response(req.send_json(&body))
            })
            .map_err(ClientError::Submit)?;
        let submitted = parse_json(&submitted, &self.cfg.task_id_field)?;

        let url = match self.task_state(&submitted, None)? {
            TaskState::Done(url) => url,
            TaskState::Pending => {
                let task_id = match select_json(&submitted, &self.cfg.task_id_field) {
                    Some(Value::String(id)) => id.clone(),
                    Some(Value::Number(n)) => n.to_string(),
                    _ => {
                        return Err(ClientError::Protocol {
                            selector: self.cfg.task_id_field.clone(),
                            body: truncate_body(submitted.to_string().as_bytes()),
                        })
                    }
                };
                self.poll(&task_id, key.as_deref())?
            }
        };
        self.cfg
            .retry
            .run(|| read_response(self.agent.get(&url).call()))
            .map_err(ClientError::Download)
    }

    fn poll(&self, task_id: &str, key: Option<&str>) -> Result<String, ClientError> {
        let url = self.cfg.poll_url_template.replace("{task_id}", task_id);
        for _ in 0..self.cfg.max_poll {
            thread::sleep(Duration::from_millis(self.cfg.poll_interval_ms));
            let body = self
                .cfg
                .retry
                .run(|| {
                    let mut req = self.agent.get(&url);
                    for (k, v) in &self.cfg.extra_headers {
                        req = req.header(k, v);
                    }
                    if let Some(key) = key {
                        req = req.header("Authorization", format!("Bearer {key}"));
                    }
                    read_response(req.call())
                })
                .map_err(ClientError::Poll)?;
            let status = parse_json(&body, &self.cfg.status_field)?;
            if let TaskState::Done(url) = self.task_state(&status, Some(task_id))? {
                return Ok(url);
            }
        }
        Err(ClientError::PollExhausted {
            task_id: task_id.to_string(),
            polls: self.cfg.max_poll,
        })
    }

    /// `task_id` is `None` for the submit response, where a missing status
    /// simply means "not finished yet".
    fn task_state(&self, body: &Value, task_id: Option<&str>) -> Result<TaskState, ClientError> {
        let state = select_json(body, &self.cfg.status_field).and_then(Value::as_str);
        let url = select_json(body, &self.cfg.image_url_field).and_then(Value::as_str);
        let protocol = |selector: &str| ClientError::Protocol {
            selector: selector.to_string(),
            body: truncate_body(body.to_string().as_bytes()),
        };
        match state {
            Some(s) if self.cfg.success_states.iter().any(|ok| ok == s) => match url {
                Some(url) => Ok(TaskState::Done(url.to_string())),
                None => Err(protocol(&self.cfg.image_url_field)),
            },
            Some(s) if self.cfg.failure_states.iter().any(|bad| bad == s) => Err(ClientError::TaskFailed {
                task_id: task_id
                    .map(str::to_string)
                    .or_else(|| select_json(body, &self.cfg.task_id_field).map(|v| v.to_string()))
                    .unwrap_or_default(),
                state: s.to_string(),
            }),
            None if task_id.is_none() => Ok(url.map_or(TaskState::Pending, |u| TaskState::Done(u.to_string()))),
            None => Err(protocol(&self.cfg.status_field)),
            Some(_) => Ok(TaskState::Pending),
        }
    }
}

fn parse_json(body: &[u8], selector: &str) -> Result<Value, ClientError> {
    serde_json::from_slice(body).map_err(|_| ClientError::Protocol {
        selector: selector.to_string(),
        body: truncate_body(body),
    })
}
