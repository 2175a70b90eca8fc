//! The black-box scoring contract: prompt in, probability of "AI-generated"
//! out.

mod cached;
mod pipeline;
mod simulated;

use thiserror::Error;

use crate::clients::ClientError;

pub use cached::CachedScorer;
pub use pipeline::PipelineScorer;
pub use simulated::{SimulatedScorer, SimulatedScorerSpec};

/// Detector probability that an image is AI-generated, in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Score(f64);

impl Score {
    /// Rejects anything outside `[0, 1]` (including NaN). Never clamps.
    pub fn new(value: f64) -> Result<Self, ScorerError> {
        if (0.0..=1.0).contains(&value) {
            Ok(Score(value))
        } else {
            Err(ScorerError::OutOfRange(value))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

#[derive(Debug, Error)]
pub enum ScorerError {
    #[error("score {0} outside [0, 1]")]
    OutOfRange(f64),
    #[error("image generation failed: {0}")]
    Generation(#[source] ClientError),
    #[error("detector failed: {0}")]
    Detection(#[source] ClientError),
    #[error("image archive failed: {0}")]
    Archive(#[source] std::io::Error),
    #[error("empty prompt")]
    EmptyPrompt,
    #[error("{0}")]
    Other(String),
}

/// Something that rates prompts. Implementations must tolerate repeated
/// calls with the same prompt and be shareable across threads.
pub trait Scorer: Send + Sync {
    /// Short identifier written to every log record.
    fn id(&self) -> &str;

    fn score(&self, prompt: &str) -> Result<Score, ScorerError>;

    /// Like [`score`](Self::score), with the iteration index available for
    /// scorers that archive per-iteration artifacts.
    fn score_iteration(&self, iteration: u64, prompt: &str) -> Result<Score, ScorerError> {
        let _ = iteration;
        self.score(prompt)
    }
}

impl<S: Scorer + ?Sized> Scorer for &S {
    fn id(&self) -> &str {
        (**self).id()
    }

    fn score(&self, prompt: &str) -> Result<Score, ScorerError> {
        (**self).score(prompt)
    }

    fn score_iteration(&self, iteration: u64, prompt: &str) -> Result<Score, ScorerError> {
        (**self).score_iteration(iteration, prompt)
    }
}

impl<S: Scorer + ?Sized> Scorer for Box<S> {
    fn id(&self) -> &str {
        (**self).id()
    }

    fn score(&self, prompt: &str) -> Result<Score, ScorerError> {
        (**self).score(prompt)
    }

    fn score_iteration(&self, iteration: u64, prompt: &str) -> Result<Score, ScorerError> {
        (**self).score_iteration(iteration, prompt)
    }
}

/// Adapts a closure returning a raw probability. The value is range-checked.
pub struct FnScorer<F> {
    id: String,
    f: F,
}

impl<F> FnScorer<F>
where
    F: Fn(&str) -> f64 + Send + Sync,
{
    pub fn new(id: impl Into<String>, f: F) -> Self {
        FnScorer { id: id.into(), f }
    }
}

impl<F> Scorer for FnScorer<F>
where
    F: Fn(&str) -> f64 + Send + Sync,
{
    fn id(&self) -> &str {
        &self.id
    }

    fn score(&self, prompt: &str) -> Result<Score, ScorerError> {
        Score::new((self.f)(prompt))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn score_range_is_enforced() {
        assert!(Score::new(0.0).is_ok());
        assert!(Score::new(1.0).is_ok());
        assert!(matches!(Score::new(1.7), Err(ScorerError::OutOfRange(v)) if v == 1.7));
        assert!(Score::new(-0.0001).is_err());
        assert!(Score::new(f64::NAN).is_err());
    }

    #[test]
    fn fn_scorer_checks_range() {
        let s = FnScorer::new("bad", |_: &str| 2.0);
        assert!(s.score("x").is_err());
    }
}
