use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Mutex;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Score, Scorer, ScorerError};

/// Parameters of the offline stand-in for text-to-image plus detector.
///
/// `score(prompt) = clamp(base + sum of deltas whose token occurs in
/// prompt + noise, 0, 1)`. Each token counts once regardless of how many
/// times it occurs.
///
/// Noise for iteration `i` comes from ChaCha8 stream `i` of `seed`, so a
/// campaign resumed mid-way sees the same noise as an uninterrupted one.
/// Plain [`Scorer::score`] calls draw from one shared sequential stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulatedScorerSpec {
    pub base: f64,
    pub token_deltas: BTreeMap<String, f64>,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for SimulatedScorerSpec {
    fn default() -> Self {
        SimulatedScorerSpec {
            base: 0.9,
            token_deltas: BTreeMap::new(),
            noise_sigma: 0.0,
            seed: 0,
        }
    }
}

impl SimulatedScorerSpec {
    pub fn load(path: &Path) -> Result<Self, ScorerError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ScorerError::Other(format!("reading {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| ScorerError::Other(format!("parsing {}: {e}", path.display())))
    }

    pub fn with_delta(mut self, token: impl Into<String>, delta: f64) -> Self {
        self.token_deltas.insert(token.into(), delta);
        self
    }
}

pub struct SimulatedScorer {
    spec: SimulatedScorerSpec,
    noise: Option<(Normal<f64>, Mutex<ChaCha8Rng>)>,
}

impl SimulatedScorer {
    pub fn new(spec: SimulatedScorerSpec) -> Result<Self, ScorerError> {
        if !spec.base.is_finite() || spec.token_deltas.values().any(|d| !d.is_finite()) {
            return Err(ScorerError::Other("simulated scorer values must be finite".into()));
        }
        if !(spec.noise_sigma >= 0.0 && spec.noise_sigma.is_finite()) {
            return Err(ScorerError::Other(format!(
                "noise_sigma must be finite and >= 0, got {}",
                spec.noise_sigma
            )));
        }
        let noise = (spec.noise_sigma > 0.0).then(|| {
            (
                Normal::new(0.0, spec.noise_sigma).expect("sigma checked"),
                Mutex::new(ChaCha8Rng::seed_from_u64(spec.seed)),
            )
        });
        Ok(SimulatedScorer { spec, noise })
    }

    /// Scorer that returns `value` for every prompt.
    pub fn constant(value: f64) -> Result<Self, ScorerError> {
        SimulatedScorer::new(SimulatedScorerSpec {
            base: value,
            ..SimulatedScorerSpec::default()
        })
    }

    pub fn spec(&self) -> &SimulatedScorerSpec {
        &self.spec
    }

    /// True when the score is a pure function of the prompt.
    pub fn is_deterministic(&self) -> bool {
        self.noise.is_none()
    }
}

impl Scorer for SimulatedScorer {
    fn id(&self) -> &str {
        "simulated"
    }

    fn score(&self, prompt: &str) -> Result<Score, ScorerError> {
        let noise = match &self.noise {
            Some((normal, rng)) => {
                let mut rng = rng.lock().unwrap_or_else(|p| p.into_inner());
                normal.sample(&mut *rng)
            }
            None => 0.0,
        };
        self.finish(prompt, noise)
    }

    fn score_iteration(&self, iteration: u64, prompt: &str) -> Result<Score, ScorerError> {
        let noise = match &self.noise {
            Some((normal, _)) => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.spec.seed);
                rng.set_stream(iteration);
                normal.sample(&mut rng)
            }
            None => 0.0,
        };
        self.finish(prompt, noise)
    }
}

impl SimulatedScorer {
    fn finish(&self, prompt: &str, noise: f64) -> Result<Score, ScorerError> {
        let value = self.spec.base
            + self
                .spec
                .token_deltas
                .iter()
                .filter(|(token, _)| prompt.contains(token.as_str()))
                .map(|(_, delta)| delta)
                .sum::<f64>()
            + noise;
        Score::new(value.clamp(0.0, 1.0))
    }
}
