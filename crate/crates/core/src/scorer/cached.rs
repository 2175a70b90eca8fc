use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::Mutex;

use log::warn;
use serde::{Deserialize, Serialize};

use super::{Score, Scorer, ScorerError};

#[derive(Serialize, Deserialize)]
struct CacheLine {
    prompt: String,
    score: f64,
}

struct Inner {
    scores: HashMap<String, f64>,
    file: Option<File>,
}

/// Memoizes an inner scorer on the exact prompt bytes, optionally backed by
/// an append-only JSONL file so scores survive restarts.
///
/// Disk problems never fail a score: the cache warns and carries on in
/// memory.
pub struct CachedScorer<S> {
    inner: S,
    state: Mutex<Inner>,
}

impl<S: Scorer> CachedScorer<S> {
    pub fn new(inner: S) -> Self {
        CachedScorer {
            inner,
            state: Mutex::new(Inner {
                scores: HashMap::new(),
                file: None,
            }),
        }
    }

    pub fn persistent(inner: S, path: &Path) -> Self {
        let mut scores = HashMap::new();
        match File::open(path) {
            Ok(f) => {
                for (n, line) in BufReader::new(f).lines().enumerate() {
                    let line = match line {
                        Ok(l) => l,
                        Err(e) => {
                            warn!("cannot read score cache {}: {e}", path.display());
                            break;
                        }
                    };
                    match serde_json::from_str::<CacheLine>(&line) {
                        Ok(entry) if Score::new(entry.score).is_ok() => {
                            scores.insert(entry.prompt, entry.score);
                        }
                        Ok(entry) => warn!("{}:{}: cached score {} out of range, ignored", path.display(), n + 1, entry.score),
                        Err(e) => warn!("{}:{}: unreadable cache line ({e}), ignored", path.display(), n + 1),
                    }
                }
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
            Err(e) => warn!("cannot read score cache {}: {e}", path.display()),
        }
        let file = match OpenOptions::new().create(true).append(true).open(path) {
            Ok(f) => Some(f),
            Err(e) => {
                warn!("score cache {} not writable ({e}); caching in memory only", path.display());
                None
            }
        };
        CachedScorer {
            inner,
            state: Mutex::new(Inner { scores, file }),
        }
    }

    pub fn inner(&self) -> &S {
        &self.inner
    }

    pub fn len(&self) -> usize {
        self.lock().scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, Inner> {
        self.state.lock().unwrap_or_else(|p| p.into_inner())
    }

    fn lookup(&self, prompt: &str) -> Option<Score> {
        self.lock().scores.get(prompt).map(|&v| Score::new(v).expect("stored scores are in range"))
    }

    fn store(&self, prompt: &str, score: Score) {
        let mut guard = self.lock();
        guard.scores.insert(prompt.to_string(), score.value());
        if let Some(file) = guard.file.as_mut() {
            let line = serde_json::to_string(&CacheLine {
                prompt: prompt.to_string(),
                score: score.value(),
            })
            .expect("cache line serializes");
            if let Err(e) = writeln!(file, "{line}").and_then(|_| file.flush()) {
                warn!("score cache write failed ({e}); caching in memory only");
                guard.file = None;
            }
        }
    }
}

impl<S: Scorer> Scorer for CachedScorer<S> {
    fn id(&self) -> &str {
        self.inner.id()
    }

    fn score(&self, prompt: &str) -> Result<Score, ScorerError> {
        if let Some(hit) = self.lookup(prompt) {
            return Ok(hit);
        }
        let score = self.inner.score(prompt)?;
        self.store(prompt, score);
        Ok(score)
    }

    fn score_iteration(&self, iteration: u64, prompt: &str) -> Result<Score, ScorerError> {
        if let Some(hit) = self.lookup(prompt) {
            return Ok(hit);
        }
        let score = self.inner.score_iteration(iteration, prompt)?;
        self.store(prompt, score);
        Ok(score)
    }
}

#[cfg(test)]
mod tests {
    use std::sync::atomic::{AtomicUsize, Ordering};

    use super::super::FnScorer;
    use super::*;

    fn counting(calls: &AtomicUsize) -> FnScorer<impl Fn(&str) -> f64 + Send + Sync + '_> {
        FnScorer::new("count", move |p: &str| {
            calls.fetch_add(1, Ordering::SeqCst);
            (p.len() % 7) as f64 / 7.0
        })
    }

    #[test]
    fn identical_prompts_hit_once() {
        let calls = AtomicUsize::new(0);
        let cached = CachedScorer::new(counting(&calls));
        let a = cached.score("a portrait").unwrap();
        let b = cached.score("a portrait").unwrap();
        assert_eq!(a, b);
        assert_eq!(calls.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn one_byte_difference_misses() {
        let calls = AtomicUsize::new(0);
        let cached = CachedScorer::new(counting(&calls));
        cached.score("a portrait").unwrap();
        cached.score("a portrait ").unwrap();
        assert_eq!(calls.load(Ordering::SeqCst), 2);
    }

    #[test]
    fn failures_are_not_cached() {
        let cached = CachedScorer::new(FnScorer::new("bad", |_: &str| 3.0));
        assert!(cached.score("x").is_err());
        assert!(cached.is_empty());
    }

    #[test]
    fn unwritable_path_degrades_to_memory() {
        let dir = tempfile::tempdir().unwrap();
        let calls = AtomicUsize::new(0);
        // a directory cannot be opened for appending
        let cached = CachedScorer::persistent(counting(&calls), dir.path());
        cached.score("x").unwrap();
        cached.score("x").unwrap();
        assert_eq!(calls.load(Ordering::SeqCst), 1);
    }
}
