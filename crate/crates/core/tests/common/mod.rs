#![allow(dead_code)]

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use grammar_uct::grammar::{Grammar, RuleBody, Symbol};
use indexmap::IndexMap;
use proptest::prelude::*;
use proptest::strategy::ValueTree;
use proptest::test_runner::{Config, TestRng, TestRunner, RngAlgorithm};

pub fn shipped(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("examples").join(name)
}

pub const SHIPPED_GRAMMARS: [&str; 3] = ["texture_attack.gram", "lighting_attack.gram", "full_tree.gram"];

// ---------------------------------------------------------------------------
// random grammars

fn terminal_text() -> impl Strategy<Value = String> {
    prop_oneof![
        "[a-z]{1,8}( [a-z]{1,8}){0,2}",
        "[a-z \"\\\\]{1,6}",
        Just("周杰伦 live".to_string()),
        Just("say \"hi\"".to_string()),
    ]
}

#[derive(Debug, Clone)]
enum ChildPick {
    Terminal(String),
    /// Index offset among later rules.
    Rule(usize),
}

fn child_pick() -> impl Strategy<Value = ChildPick> {
    prop_oneof![
        terminal_text().prop_map(ChildPick::Terminal),
        (0usize..100).prop_map(ChildPick::Rule),
    ]
}

#[derive(Debug, Clone)]
enum KindPick {
    And(Vec<ChildPick>),
    Or(Vec<ChildPick>),
    Rand(u32, u32, ChildPick),
}

fn kind_pick() -> impl Strategy<Value = KindPick> {
    prop_oneof![
        prop::collection::vec(child_pick(), 1..4).prop_map(KindPick::And),
        prop::collection::vec(child_pick(), 1..5).prop_map(KindPick::Or),
        (0u32..3, 1u32..3, child_pick()).prop_map(|(a, b, c)| {
            let (lo, hi) = (a.min(b), a.max(b).max(1));
            KindPick::Rand(lo, hi, c)
        }),
    ]
}

/// Random valid grammars: rule `i` only references rules `j > i`, so the
/// reference graph is acyclic; OR alternatives are de-duplicated.
pub fn valid_grammar() -> impl Strategy<Value = Grammar> {
    (prop::collection::vec(kind_pick(), 1..8), any::<bool>()).prop_map(|(kinds, prompt_root)| {
        let n = kinds.len();
        let name = |i: usize| {
            if i == 0 && prompt_root {
                "PROMPT".to_string()
            } else {
                format!("R{i}")
            }
        };
        let resolve = |i: usize, pick: &ChildPick| match pick {
            ChildPick::Rule(off) if i + 1 < n => Symbol::Rule(name(i + 1 + off % (n - i - 1))),
            ChildPick::Rule(off) => Symbol::Terminal(format!("t{off}")),
            ChildPick::Terminal(t) => Symbol::Terminal(t.clone()),
        };
        let mut rules = IndexMap::new();
        for (i, kind) in kinds.iter().enumerate() {
            let body = match kind {
                KindPick::And(c) => RuleBody::And(c.iter().map(|p| resolve(i, p)).collect()),
                KindPick::Or(c) => {
                    let mut alts: Vec<Symbol> = Vec::new();
                    for p in c {
                        let s = resolve(i, p);
                        if !alts.contains(&s) {
                            alts.push(s);
                        }
                    }
                    RuleBody::Or(alts)
                }
                KindPick::Rand(lo, hi, c) => RuleBody::Rand {
                    min: *lo,
                    max: *hi,
                    child: resolve(i, c),
                },
            };
            rules.insert(name(i), body);
        }
        Grammar::new(rules).unwrap()
    })
}

/// Draws `count` grammars deterministically from `seed`.
pub fn sample_grammars(count: usize, seed: u8) -> Vec<Grammar> {
    let mut runner = TestRunner::new_with_rng(Config::default(), TestRng::from_seed(RngAlgorithm::ChaCha, &[seed; 32]));
    let strategy = valid_grammar();
    (0..count)
        .map(|_| strategy.new_tree(&mut runner).unwrap().current())
        .collect()
}

/// Pure pseudo-random score in [0, 1] derived from the prompt bytes (FNV-1a).
pub fn hash_score(prompt: &str) -> f64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in prompt.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x100000001b3);
    }
    (h % 1001) as f64 / 1000.0
}

// ---------------------------------------------------------------------------
// stub HTTP server

#[derive(Debug, Clone)]
pub struct Seen {
    pub method: String,
    pub path: String,
    pub headers: HashMap<String, String>,
    pub body: Vec<u8>,
}

pub struct Reply {
    pub status: u16,
    pub body: Vec<u8>,
    pub delay: Duration,
}

impl Reply {
    pub fn json(status: u16, body: serde_json::Value) -> Self {
        Reply {
            status,
            body: body.to_string().into_bytes(),
            delay: Duration::ZERO,
        }
    }

    pub fn bytes(body: &[u8]) -> Self {
        Reply {
            status: 200,
            body: body.to_vec(),
            delay: Duration::ZERO,
        }
    }

    pub fn status(status: u16) -> Self {
        Reply {
            status,
            body: Vec::new(),
            delay: Duration::ZERO,
        }
    }

    pub fn after(mut self, delay: Duration) -> Self {
        self.delay = delay;
        self
    }
}

type Handler = dyn Fn(&Seen, usize) -> Reply + Send + Sync;

/// Local HTTP server answering from a handler closure. The handler also gets
/// the number of earlier requests to the same path.
pub struct StubServer {
    server: Arc<tiny_http::Server>,
    pub base: String,
    seen: Arc<Mutex<Vec<Seen>>>,
}

impl StubServer {
    pub fn start(handler: impl Fn(&Seen, usize) -> Reply + Send + Sync + 'static) -> Self {
        let server = Arc::new(tiny_http::Server::http("127.0.0.1:0").unwrap());
        let port = server.server_addr().to_ip().unwrap().port();
        let seen: Arc<Mutex<Vec<Seen>>> = Arc::default();
        let handler: Arc<Handler> = Arc::new(handler);
        {
            let server = server.clone();
            let seen = seen.clone();
            thread::spawn(move || {
                for mut req in server.incoming_requests() {
                    let mut body = Vec::new();
                    let _ = req.as_reader().read_to_end(&mut body);
                    let s = Seen {
                        method: req.method().to_string(),
                        path: req.url().to_string(),
                        headers: req
                            .headers()
                            .iter()
                            .map(|h| (h.field.as_str().as_str().to_ascii_lowercase(), h.value.as_str().to_string()))
                            .collect(),
                        body,
                    };
                    let prior = {
                        let mut log = seen.lock().unwrap();
                        let prior = log.iter().filter(|x| x.path == s.path).count();
                        log.push(s.clone());
                        prior
                    };
                    let handler = handler.clone();
                    thread::spawn(move || {
                        let reply = handler(&s, prior);
                        thread::sleep(reply.delay);
                        let resp = tiny_http::Response::from_data(reply.body).with_status_code(reply.status);
                        let _ = req.respond(resp);
                    });
                }
            });
        }
        StubServer {
            server,
            base: format!("http://127.0.0.1:{port}"),
            seen,
        }
    }

    pub fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }

    pub fn seen(&self) -> Vec<Seen> {
        self.seen.lock().unwrap().clone()
    }

    pub fn hits(&self, path_prefix: &str) -> usize {
        self.seen().iter().filter(|s| s.path.starts_with(path_prefix)).count()
    }
}

impl Drop for StubServer {
    fn drop(&mut self) {
        self.server.unblock();
    }
}

pub const PNG_BYTES: &[u8] = b"\x89PNG\r\n\x1a\nstub-image-bytes\x00\x01\x02\xff";

/// A wanx-style T2I service plus detector on one stub server:
/// `POST /submit` -> task `t1`, `GET /tasks/t1` -> PENDING `pending_polls`
/// times then SUCCEEDED, `GET /img/t1.png` -> [`PNG_BYTES`],
/// `POST /detect` -> `{"ai_probability": p}`.
pub fn t2i_and_detector(pending_polls: usize, probability: f64) -> StubServer {
    let base = Arc::new(Mutex::new(String::new()));
    let base2 = base.clone();
    let server = StubServer::start(move |req, prior| {
        let base = base2.lock().unwrap().clone();
        match (req.method.as_str(), req.path.as_str()) {
            ("POST", "/submit") => Reply::json(200, serde_json::json!({"output": {"task_id": "t1", "task_status": "PENDING"}})),
            ("GET", "/tasks/t1") if prior < pending_polls => {
                Reply::json(200, serde_json::json!({"output": {"task_id": "t1", "task_status": "RUNNING"}}))
            }
            ("GET", "/tasks/t1") => Reply::json(
                200,
                serde_json::json!({"output": {"task_id": "t1", "task_status": "SUCCEEDED", "results": [{"url": format!("{base}/img/t1.png")}]}}),
            ),
            ("GET", "/img/t1.png") => Reply::bytes(PNG_BYTES),
            ("POST", "/detect") => Reply::json(200, serde_json::json!({"ai_probability": probability})),
            _ => Reply::status(404),
        }
    });
    *base.lock().unwrap() = server.base.clone();
    server
}

pub fn t2i_config(server: &StubServer) -> grammar_uct::clients::T2IClientConfig {
    grammar_uct::clients::T2IClientConfig {
        submit_url: server.url("/submit"),
        poll_url_template: server.url("/tasks/{task_id}"),
        model_name: "stub-model".into(),
        auth_env_var: None,
        poll_interval_ms: 0,
        max_poll: 5,
        timeout_ms: 2000,
        requests_per_minute: 0.0,
        retry: fast_retry(),
        ..Default::default()
    }
}

pub fn detector_config(server: &StubServer) -> grammar_uct::clients::DetectorClientConfig {
    grammar_uct::clients::DetectorClientConfig {
        url: server.url("/detect"),
        timeout_ms: 2000,
        requests_per_minute: 0.0,
        retry: fast_retry(),
        ..Default::default()
    }
}

pub fn fast_retry() -> grammar_uct::clients::RetryPolicy {
    grammar_uct::clients::RetryPolicy {
        max_attempts: 3,
        initial_backoff_ms: 1,
        backoff_multiplier: 1.0,
    }
}
