use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use super::report::{DEFAULT_BUCKET_SIZE, DEFAULT_THRESHOLD, DEFAULT_TOP_K};
use super::Timestamps;
use crate::clients::{DetectorClientConfig, T2IClientConfig};
use crate::scorer::SimulatedScorerSpec;
use crate::search::{SearchParams, DEFAULT_EXPLORATION};

#[derive(Debug, Clone, PartialEq)]
pub enum ScorerConfig {
    Simulated {
        spec: SimulatedScorerSpec,
        cache: bool,
    },
    Pipeline {
        t2i: T2IClientConfig,
        detector: DetectorClientConfig,
        cache: bool,
        archive_images: bool,
    },
}

/// Everything needed to run (or resume) one campaign.
#[derive(Debug, Clone, PartialEq)]
pub struct CampaignConfig {
    pub grammar_path: PathBuf,
    pub root_override: Option<String>,
    pub scorer: ScorerConfig,
    pub seed: u64,
    pub iterations: u64,
    pub threshold: f64,
    pub bucket_size: u64,
    pub join: String,
    pub checkpoint_every: u64,
    pub output_dir: PathBuf,
    pub exploration: f64,
    pub timestamps: Timestamps,
    pub top_k: usize,
}

impl CampaignConfig {
    /// Config with every optional field at its default.
    pub fn new(grammar_path: impl Into<PathBuf>, scorer: ScorerConfig) -> Self {
        CampaignConfig {
            grammar_path: grammar_path.into(),
            root_override: None,
            scorer,
            seed: 0,
            iterations: 200,
            threshold: DEFAULT_THRESHOLD,
            bucket_size: DEFAULT_BUCKET_SIZE,
            join: ", ".to_string(),
            checkpoint_every: 10,
            output_dir: PathBuf::from("campaign"),
            exploration: DEFAULT_EXPLORATION,
            timestamps: Timestamps::Wall,
            top_k: DEFAULT_TOP_K,
        }
    }

    pub fn search_params(&self) -> SearchParams {
        SearchParams {
            join: self.join.clone(),
            exploration: self.exploration,
        }
    }

    /// Reads a TOML config. Relative paths are resolved against the config
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::from_toml(&text, base)
    }

    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self, ConfigError> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        let resolve = |p: PathBuf| if p.is_absolute() { p } else { base_dir.join(p) };

        let scorer = match (raw.scorer.simulated, raw.scorer.pipeline) {
            (Some(_), Some(_)) => {
                return Err(ConfigError::Invalid(
                    "configure exactly one of [scorer.simulated] and [scorer.pipeline]".into(),
                ))
            }
            (None, None) => return Err(ConfigError::Invalid("missing [scorer.simulated] or [scorer.pipeline]".into())),
            (Some(sim), None) => {
                let mut spec = match sim.spec {
                    Some(p) => {
                        let p = resolve(p);
                        SimulatedScorerSpec::load(&p).map_err(|e| ConfigError::Invalid(e.to_string()))?
                    }
                    None => SimulatedScorerSpec::default(),
                };
                if let Some(base) = sim.base {
                    spec.base = base;
                }
                if let Some(deltas) = sim.token_deltas {
                    spec.token_deltas = deltas;
                }
                if let Some(sigma) = sim.noise_sigma {
                    spec.noise_sigma = sigma;
                }
                if let Some(seed) = sim.seed {
                    spec.seed = seed;
                }
                ScorerConfig::Simulated {
                    spec,
                    cache: sim.cache.unwrap_or(false),
                }
            }
            (None, Some(pipe)) => {
                let t2i = raw.t2i.ok_or_else(|| ConfigError::Invalid("pipeline scorer needs a [t2i] section".into()))?;
                let detector = raw
                    .detector
                    .ok_or_else(|| ConfigError::Invalid("pipeline scorer needs a [detector] section".into()))?;
                ScorerConfig::Pipeline {
                    t2i,
                    detector,
                    cache: pipe.cache.unwrap_or(true),
                    archive_images: pipe.archive_images.unwrap_or(true),
                }
            }
        };

        let c = raw.campaign;
        let mut cfg = CampaignConfig::new(resolve(c.grammar), scorer);
        cfg.root_override = c.root;
        if let Some(v) = c.seed {
            cfg.seed = v;
        }
        if let Some(v) = c.iterations {
            cfg.iterations = v;
        }
        if let Some(v) = c.threshold {
            cfg.threshold = v;
        }
        if let Some(v) = c.bucket_size {
            cfg.bucket_size = v;
        }
        if let Some(v) = c.join {
            cfg.join = v;
        }
        if let Some(v) = c.checkpoint_every {
            cfg.checkpoint_every = v;
        }
        if let Some(v) = c.output_dir {
            cfg.output_dir = resolve(v);
        }
        if let Some(v) = c.exploration {
            cfg.exploration = v;
        }
        if let Some(v) = c.timestamps {
            cfg.timestamps = v;
        }
        if let Some(v) = c.top_k {
            cfg.top_k = v;
        }
        cfg.check()?;
        Ok(cfg)
    }

    pub fn check(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.iterations < 1 {
            return bad("iterations must be at least 1".into());
        }
        if self.bucket_size < 1 {
            return bad("bucket_size must be at least 1".into());
        }
        if self.checkpoint_every < 1 {
            return bad("checkpoint_every must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return bad(format!("threshold {} outside [0, 1]", self.threshold));
        }
        if !(self.exploration >= 0.0 && self.exploration.is_finite()) {
            return bad(format!("exploration {} must be finite and >= 0", self.exploration));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    campaign: RawCampaign,
    scorer: RawScorer,
    t2i: Option<T2IClientConfig>,
    detector: Option<DetectorClientConfig>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCampaign {
    grammar: PathBuf,
    root: Option<String>,
    seed: Option<u64>,
    iterations: Option<u64>,
    threshold: Option<f64>,
    bucket_size: Option<u64>,
    join: Option<String>,
    checkpoint_every: Option<u64>,
    output_dir: Option<PathBuf>,
    exploration: Option<f64>,
    timestamps: Option<Timestamps>,
    top_k: Option<usize>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScorer {
    simulated: Option<RawSimulated>,
    pipeline: Option<RawPipeline>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSimulated {
    spec: Option<PathBuf>,
    base: Option<f64>,
    token_deltas: Option<std::collections::BTreeMap<String, f64>>,
    noise_sigma: Option<f64>,
    seed: Option<u64>,
    cache: Option<bool>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPipeline {
    cache: Option<bool>,
    archive_images: Option<bool>,
}
