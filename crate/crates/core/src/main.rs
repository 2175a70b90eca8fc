use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use grammar_uct::campaign::{
    self, build_scorer, load_grammar, lowest_scores, read_log, run_campaign, write_report, CampaignConfig,
    CampaignError, CampaignReport, ConfigError, LogError, RunOptions, ScorerConfig, DEFAULT_BUCKET_SIZE,
    DEFAULT_THRESHOLD, DEFAULT_TOP_K,
};
use grammar_uct::grammar::validate_grammar;
use grammar_uct::search::SearchError;
use grammar_uct::sweep::{sweep, SweepSpec};

#[derive(Parser)]
#[command(name = "grammar-uct", version, about = "Grammar-guided UCT-Rand prompt search")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and validate a grammar file.
    Validate {
        grammar: PathBuf,
        #[arg(long)]
        root: Option<String>,
    },
    /// Run or resume the campaign described by a TOML config.
    Run {
        config: PathBuf,
        /// Discard existing log and checkpoint in the output directory.
        #[arg(long)]
        fresh: bool,
    },
    /// Recompute bypass buckets from a JSONL log.
    Report {
        log: PathBuf,
        #[arg(long, default_value_t = DEFAULT_BUCKET_SIZE)]
        bucket: u64,
        #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
        threshold: f64,
        #[arg(long, default_value_t = DEFAULT_TOP_K)]
        top: usize,
        /// Print only the CSV.
        #[arg(long)]
        csv: bool,
        /// Write report.csv and report.txt into this directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the lowest-scoring prompts of a log.
    Replay {
        log: PathBuf,
        #[arg(long, default_value_t = 10)]
        top: usize,
    },
    /// Run the config's campaign in memory for many seeds and summarize.
    Sweep {
        config: PathBuf,
        #[arg(long, default_value_t = 10)]
        seeds: u64,
        #[arg(long, default_value_t = 0)]
        first_seed: u64,
    },
}

/// Exit code 1: the input is wrong. Exit code 2: the environment is.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn domain(message: impl ToString) -> Self {
        Failure {
            code: 1,
            message: message.to_string(),
        }
    }

    fn env(message: impl ToString) -> Self {
        Failure {
            code: 2,
            message: message.to_string(),
        }
    }
}

impl From<CampaignError> for Failure {
    fn from(e: CampaignError) -> Self {
        let code = if e.is_environmental() { 2 } else { 1 };
        let hint = match &e {
            CampaignError::Search(SearchError::GrammarMismatch { .. }) | CampaignError::SeedMismatch { .. } => {
                "\nrefusing to resume; rerun with --fresh to start over"
            }
            _ => "",
        };
        Failure {
            code,
            message: format!("{e}{hint}"),
        }
    }
}

fn load_log(path: &Path) -> Result<Vec<campaign::IterationRecord>, Failure> {
    read_log(path).map_err(|e| match e {
        LogError::Io { .. } => Failure::env(e),
        LogError::Malformed { .. } => Failure::domain(e),
    })
}

fn load_config(path: &Path) -> Result<CampaignConfig, Failure> {
    CampaignConfig::load(path).map_err(|e| match e {
        ConfigError::Io { .. } => Failure::env(e),
        _ => Failure::domain(e),
    })
}

fn validate(grammar: &Path, root: Option<&str>) -> Result<(), Failure> {
    let g = load_grammar(grammar, root)?;
    let report = validate_grammar(&g);
    print!("{report}");
    if report.is_valid() {
        println!("ok: {} rules, root {}", g.len(), g.root());
        Ok(())
    } else {
        Err(Failure::domain(format!("{}: {} error(s)", grammar.display(), report.errors.len())))
    }
}

fn run(config: &Path, fresh: bool) -> Result<(), Failure> {
    let cfg = load_config(config)?;
    let grammar = load_grammar(&cfg.grammar_path, cfg.root_override.as_deref())?;
    let scorer = build_scorer(&cfg)?;
    let outcome = run_campaign(&grammar, &cfg, scorer.as_ref(), RunOptions { fresh, stop_before: None })?;
    if let Some(at) = outcome.resumed_from_checkpoint {
        eprintln!("resumed from checkpoint at iteration {at} ({} rounds replayed from log)", outcome.replayed);
    }
    if let Some(report) = outcome.report {
        print!("{}", report.to_text());
    }
    eprintln!(
        "{} rounds scored, {} skipped; output in {}",
        outcome.scored,
        outcome.skipped,
        cfg.output_dir.display()
    );
    Ok(())
}

fn report(log: &Path, bucket: u64, threshold: f64, top: usize, csv: bool, out: Option<&Path>) -> Result<(), Failure> {
    if bucket == 0 {
        return Err(Failure::domain("--bucket must be at least 1"));
    }
    let records = load_log(log)?;
    let report = CampaignReport::from_records(&records, bucket, threshold, top);
    if let Some(dir) = out {
        std::fs::create_dir_all(dir).map_err(|e| Failure::env(format!("{}: {e}", dir.display())))?;
        write_report(dir, &report)?;
    }
    if csv {
        print!("{}", report.to_csv());
    } else {
        print!("{}\n{}", report.to_text(), report.to_csv());
    }
    Ok(())
}

fn replay(log: &Path, top: usize) -> Result<(), Failure> {
    let records = load_log(log)?;
    for best in lowest_scores(&records, top) {
        println!("{}\t{}\t{}", best.i, best.score, best.prompt);
    }
    Ok(())
}

fn sweep_cmd(config: &Path, seeds: u64, first_seed: u64) -> Result<(), Failure> {
    let cfg = load_config(config)?;
    if !matches!(cfg.scorer, ScorerConfig::Simulated { .. }) {
        return Err(Failure::domain("sweep runs only with [scorer.simulated]"));
    }
    let grammar = load_grammar(&cfg.grammar_path, cfg.root_override.as_deref())?;
    let scorer = build_scorer(&cfg)?;
    let spec = SweepSpec {
        params: cfg.search_params(),
        iterations: cfg.iterations,
        threshold: cfg.threshold,
    };
    let seed_list: Vec<u64> = (first_seed..first_seed + seeds).collect();
    let runs = sweep(&grammar, &spec, scorer.as_ref(), &seed_list).map_err(|e| Failure::from(CampaignError::from(e)))?;
    println!("seed,bypasses,iterations");
    for run in &runs {
        println!("{},{},{}", run.seed, run.bypasses(), run.records.len());
    }
    let total: usize = runs.iter().map(|r| r.bypasses()).sum();
    eprintln!("mean bypasses per seed: {:.2}", total as f64 / runs.len().max(1) as f64);
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Validate { grammar, root } => validate(grammar, root.as_deref()),
        Command::Run { config, fresh } => run(config, *fresh),
        Command::Report {
            log,
            bucket,
            threshold,
            top,
            csv,
            out,
        } => report(log, *bucket, *threshold, *top, *csv, out.as_deref()),
        Command::Replay { log, top } => replay(log, *top),
        Command::Sweep {
            config,
            seeds,
            first_seed,
        } => sweep_cmd(config, *seeds, *first_seed),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
