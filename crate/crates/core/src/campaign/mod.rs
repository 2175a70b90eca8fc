//! Resumable campaigns: the search loop plus its on-disk artifacts.
//!
//! An output directory holds
//!
//! - `run.jsonl`: one [`IterationRecord`] per round, append-only;
//! - `checkpoint.json`: the latest [`Checkpoint`], rewritten atomically
//!   every `checkpoint_every` rounds and at the end;
//! - `report.csv` / `report.txt`: derived from the log after a run;
//! - `images/` (pipeline scorer) and `score_cache.jsonl` (cached scorers);
//! - `campaign.lock` while a run is in progress.
//!
//! Resuming restores the checkpoint and then replays any log records
//! written after it, re-deriving each prompt and crediting the logged
//! score, so no round is scored twice and no log line is rewritten.

mod config;
mod record;
mod report;

use std::fs::{self, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use log::{info, warn};
use thiserror::Error;

use crate::clients::{DetectorClient, T2IClient};
use crate::grammar::{parse_grammar, Grammar, ParseError};
use crate::scorer::{CachedScorer, PipelineScorer, Scorer, ScorerError, SimulatedScorer};
use crate::search::{run_iteration, Checkpoint, SearchError, Searcher};

pub use config::{CampaignConfig, ConfigError, ScorerConfig};
pub use record::{parse_log, read_log, IterationRecord, LogError, LogWriter, Timestamps};
pub use report::{
    lowest_scores, BestPrompt, Bucket, CampaignReport, Totals, CSV_HEADER, DEFAULT_BUCKET_SIZE,
    DEFAULT_THRESHOLD, DEFAULT_TOP_K,
};

pub const LOG_FILE: &str = "run.jsonl";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const REPORT_CSV: &str = "report.csv";
pub const REPORT_TXT: &str = "report.txt";
pub const LOCK_FILE: &str = "campaign.lock";
pub const IMAGES_DIR: &str = "images";
pub const CACHE_FILE: &str = "score_cache.jsonl";

#[derive(Debug, Error)]
pub enum CampaignError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("{path}: {source}")]
    Grammar {
        path: String,
        #[source]
        source: ParseError,
    },
    #[error("{0}")]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Search(#[from] SearchError),
    #[error("{0}")]
    Log(#[from] LogError),
    #[error("{0}")]
    Scorer(#[from] ScorerError),
    #[error("{0} exists: another campaign is running in this directory (delete the file if it is stale)")]
    Locked(String),
    #[error("checkpoint seed {found} differs from configured seed {expected}; use --fresh to start over")]
    SeedMismatch { expected: u64, found: u64 },
    #[error("log has {logged} records but the checkpoint is at iteration {checkpoint}")]
    LogBehindCheckpoint { logged: u64, checkpoint: u64 },
}

impl CampaignError {
    /// Whether the failure comes from the environment (files, network,
    /// credentials) rather than from the campaign's own content.
    pub fn is_environmental(&self) -> bool {
        matches!(
            self,
            CampaignError::Io { .. } | CampaignError::Locked(_) | CampaignError::Log(LogError::Io { .. })
        ) || matches!(self, CampaignError::Config(ConfigError::Io { .. }))
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CampaignError + '_ {
    move |source| CampaignError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Reads and parses a grammar file, applying an optional root override.
/// Validation is left to the caller.
pub fn load_grammar(path: &Path, root_override: Option<&str>) -> Result<Grammar, CampaignError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let g = parse_grammar(&text).map_err(|source| CampaignError::Grammar {
        path: path.display().to_string(),
        source,
    })?;
    Ok(match root_override {
        Some(root) => g.with_root(root),
        None => g,
    })
}

/// Instantiates the configured scorer. Caches live in `output_dir`.
pub fn build_scorer(cfg: &CampaignConfig) -> Result<Box<dyn Scorer>, CampaignError> {
    let cache_path = cfg.output_dir.join(CACHE_FILE);
    Ok(match &cfg.scorer {
        ScorerConfig::Simulated { spec, cache } => {
            let sim = SimulatedScorer::new(spec.clone())?;
            if *cache && !sim.is_deterministic() {
                warn!("not caching a noisy simulated scorer");
                Box::new(sim)
            } else if *cache {
                fs::create_dir_all(&cfg.output_dir).map_err(io_err(&cfg.output_dir))?;
                Box::new(CachedScorer::persistent(sim, &cache_path))
            } else {
                Box::new(sim)
            }
        }
        ScorerConfig::Pipeline {
            t2i,
            detector,
            cache,
            archive_images,
        } => {
            let mut pipeline = PipelineScorer::new(T2IClient::new(t2i.clone()), DetectorClient::new(detector.clone()));
            if *archive_images {
                pipeline = pipeline.with_archive(cfg.output_dir.join(IMAGES_DIR));
            }
            if *cache {
                fs::create_dir_all(&cfg.output_dir).map_err(io_err(&cfg.output_dir))?;
                Box::new(CachedScorer::persistent(pipeline, &cache_path))
            } else {
                Box::new(pipeline)
            }
        }
    })
}

/// Exclusive claim on an output directory, released on drop.
struct DirLock {
    path: PathBuf,
}

impl DirLock {
    fn acquire(dir: &Path) -> Result<Self, CampaignError> {
        let path = dir.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(DirLock { path })
            }
            Err(e) if e.kind() == io::ErrorKind::AlreadyExists => {
                Err(CampaignError::Locked(path.display().to_string()))
            }
            Err(e) => Err(io_err(&path)(e)),
        }
    }
}

impl Drop for DirLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Discard any existing log, checkpoint and report first.
    pub fresh: bool,
    /// Stop before iteration `n` without a final checkpoint or report, as
    /// if the process had been killed there.
    pub stop_before: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CampaignOutcome {
    /// `None` when the run was stopped early.
    pub report: Option<CampaignReport>,
    pub resumed_from_checkpoint: Option<u64>,
    /// Log records credited from disk instead of being scored.
    pub replayed: u64,
    /// Rounds scored by this invocation.
    pub scored: u64,
    pub skipped: u64,
}

fn write_atomic(path: &Path, contents: &str) -> Result<(), CampaignError> {
    let tmp = path.with_extension("tmp");
    (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents.as_bytes())?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })()
    .map_err(io_err(path))
}

/// Report files written for a log; identical to what `report` computes.
pub fn write_report(dir: &Path, report: &CampaignReport) -> Result<(), CampaignError> {
    write_atomic(&dir.join(REPORT_CSV), &report.to_csv())?;
    write_atomic(&dir.join(REPORT_TXT), &report.to_text())
}

/// Runs a campaign to `cfg.iterations` rounds, resuming from whatever is in
/// `cfg.output_dir`.
pub fn run_campaign(
    grammar: &Grammar,
    cfg: &CampaignConfig,
    scorer: &dyn Scorer,
    opts: RunOptions,
) -> Result<CampaignOutcome, CampaignError> {
    cfg.check()?;
    let dir = &cfg.output_dir;
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let _lock = DirLock::acquire(dir)?;

    let log_path = dir.join(LOG_FILE);
    let checkpoint_path = dir.join(CHECKPOINT_FILE);
    if opts.fresh {
        for name in [LOG_FILE, CHECKPOINT_FILE, REPORT_CSV, REPORT_TXT] {
            let p = dir.join(name);
            match fs::remove_file(&p) {
                Ok(()) => {}
                Err(e) if e.kind() == io::ErrorKind::NotFound => {}
                Err(e) => return Err(io_err(&p)(e)),
            }
        }
    }

    let params = cfg.search_params();
    let (mut searcher, resumed_from_checkpoint) = match fs::read_to_string(&checkpoint_path) {
        Ok(text) => {
            let cp = Checkpoint::from_json(&text)?;
            if cp.rng_seed != cfg.seed {
                return Err(CampaignError::SeedMismatch {
                    expected: cfg.seed,
                    found: cp.rng_seed,
                });
            }
            let at = cp.iteration;
            (Searcher::from_checkpoint(grammar, params, &cp)?, Some(at))
        }
        Err(e) if e.kind() == io::ErrorKind::NotFound => (Searcher::new(grammar, params, cfg.seed)?, None),
        Err(e) => return Err(io_err(&checkpoint_path)(e)),
    };
    if resumed_from_checkpoint.is_none() {
        // Pins the grammar hash and seed before the first round, so a crash
        // before the first periodic checkpoint still resumes safely.
        write_atomic(&checkpoint_path, &searcher.checkpoint().to_json())?;
    }

    let existing = record::load_for_resume(&log_path)?;
    let start = searcher.iteration();
    if (existing.len() as u64) < start {
        return Err(CampaignError::LogBehindCheckpoint {
            logged: existing.len() as u64,
            checkpoint: start,
        });
    }
    let mut replayed = 0;
    for rec in existing.iter().skip(start as usize) {
        searcher.replay(rec)?;
        replayed += 1;
    }
    if let Some(at) = resumed_from_checkpoint {
        info!("resumed at iteration {at}, replayed {replayed} logged rounds");
    }

    let mut log = LogWriter::append(&log_path)?;
    let mut scored = 0;
    let mut skipped = 0;
    while searcher.iteration() < cfg.iterations {
        let i = searcher.iteration();
        if opts.stop_before == Some(i) {
            return Ok(CampaignOutcome {
                report: None,
                resumed_from_checkpoint,
                replayed,
                scored,
                skipped,
            });
        }
        let record = match run_iteration(&mut searcher, scorer, cfg.threshold, &cfg.timestamps) {
            Ok(r) => {
                scored += 1;
                r
            }
            Err(e) => {
                warn!("{e}; round skipped");
                searcher.skip();
                skipped += 1;
                IterationRecord::skipped(i, e.prompt, e.source.to_string(), cfg.timestamps.now(), scorer.id().to_string())
            }
        };
        log.write(&record).map_err(io_err(&log_path))?;
        if searcher.iteration() % cfg.checkpoint_every == 0 {
            write_atomic(&checkpoint_path, &searcher.checkpoint().to_json())?;
        }
    }
    write_atomic(&checkpoint_path, &searcher.checkpoint().to_json())?;

    let records = read_log(&log_path)?;
    let report = CampaignReport::from_records(&records, cfg.bucket_size, cfg.threshold, cfg.top_k);
    write_report(dir, &report)?;
    Ok(CampaignOutcome {
        report: Some(report),
        resumed_from_checkpoint,
        replayed,
        scored,
        skipped,
    })
}
