//! Independent in-memory campaigns over many seeds.
//!
//! Each seed's search is sequential; seeds are independent of each other,
//! so with the `parallel` feature (on by default) they run on the rayon
//! thread pool. Results are returned in seed order either way and are
//! identical between the two modes.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::campaign::{IterationRecord, Timestamps};
use crate::grammar::Grammar;
use crate::scorer::Scorer;
use crate::search::{run_iteration, SearchError, SearchParams, Searcher};

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRun {
    pub seed: u64,
    pub records: Vec<IterationRecord>,
}

impl SweepRun {
    pub fn bypasses(&self) -> usize {
        self.records.iter().filter(|r| r.bypass).count()
    }
}

/// Settings shared by every seed of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub params: SearchParams,
    pub iterations: u64,
    pub threshold: f64,
}

/// One seed's campaign, run entirely in memory with frozen timestamps.
pub fn run_seed(grammar: &Grammar, spec: &SweepSpec, scorer: &dyn Scorer, seed: u64) -> Result<SweepRun, SearchError> {
    let mut searcher = Searcher::new(grammar, spec.params.clone(), seed)?;
    let clock = Timestamps::Frozen;
    let mut records = Vec::with_capacity(spec.iterations as usize);
    for _ in 0..spec.iterations {
        let i = searcher.iteration();
        let record = match run_iteration(&mut searcher, scorer, spec.threshold, &clock) {
            Ok(r) => r,
            Err(e) => {
                searcher.skip();
                IterationRecord::skipped(i, e.prompt, e.source.to_string(), clock.now(), scorer.id().to_string())
            }
        };
        records.push(record);
    }
    Ok(SweepRun { seed, records })
}

pub fn sweep_sequential(
    grammar: &Grammar,
    spec: &SweepSpec,
    scorer: &dyn Scorer,
    seeds: &[u64],
) -> Result<Vec<SweepRun>, SearchError> {
    seeds.iter().map(|&seed| run_seed(grammar, spec, scorer, seed)).collect()
}

#[cfg(feature = "parallel")]
pub fn sweep_parallel(
    grammar: &Grammar,
    spec: &SweepSpec,
    scorer: &dyn Scorer,
    seeds: &[u64],
) -> Result<Vec<SweepRun>, SearchError> {
    seeds.par_iter().map(|&seed| run_seed(grammar, spec, scorer, seed)).collect()
}

/// Parallel when built with the `parallel` feature, sequential otherwise.
pub fn sweep(grammar: &Grammar, spec: &SweepSpec, scorer: &dyn Scorer, seeds: &[u64]) -> Result<Vec<SweepRun>, SearchError> {
    #[cfg(feature = "parallel")]
    {
        sweep_parallel(grammar, spec, scorer, seeds)
    }
    #[cfg(not(feature = "parallel"))]
    {
        sweep_sequential(grammar, spec, scorer, seeds)
    }
}
