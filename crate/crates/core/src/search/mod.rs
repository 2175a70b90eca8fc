//! UCT-Rand search over a grammar tree.
//!
//! Each iteration runs four phases:
//!
//! 1. **Expansion**: derive a prompt depth-first from the root ([`expand`]).
//! 2. **Selection**: at OR nodes pick unvisited alternatives first, then
//!    sample proportionally to UCB weights ([`select_child`]); at RAND nodes
//!    draw a uniform repetition count ([`rand_count`]).
//! 3. **Simulation**: hand the prompt to a [`Scorer`].
//! 4. **Backpropagation**: credit reward `2 * (1 - score)` to every
//!    traversed edge ([`backpropagate`]).
//!
//! The loop is strictly sequential: each selection sees the statistics of
//! every earlier iteration.

mod checkpoint;
mod expand;
mod select;
mod state;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::campaign::{IterationRecord, Timestamps};
use crate::grammar::{validate_grammar, Grammar, ValidationReport};
use crate::scorer::{Score, Scorer, ScorerError};

pub use checkpoint::{edge_key, parse_edge_key, Checkpoint, EDGE_KEY_SEPARATOR};
pub use expand::{expand, DerivationTrace, VisitedEdge};
pub use select::{
    rand_count, select_child, ucb_weight, ucb_weight_with, weighted_index, DEFAULT_EXPLORATION,
    ZERO_WEIGHT_EPSILON,
};
pub use state::{EdgeStats, NodeStats, SearchState};

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("grammar is not valid:\n{0}")]
    InvalidGrammar(ValidationReport),
    #[error("score {0} outside [0, 1]")]
    ScoreOutOfRange(f64),
    #[error("checkpoint was written for grammar {found}, current grammar is {expected}")]
    GrammarMismatch { expected: String, found: String },
    #[error("malformed checkpoint: {0}")]
    BadCheckpoint(String),
    #[error("replay diverged at iteration {iteration}: logged {logged:?}, derived {derived:?}")]
    ReplayDiverged {
        iteration: u64,
        logged: String,
        derived: String,
    },
}

/// A scorer failure at a given iteration. Statistics are untouched.
#[derive(Debug, Error)]
#[error("iteration {iteration}: {source}")]
pub struct IterationError {
    pub iteration: u64,
    pub prompt: String,
    #[source]
    pub source: ScorerError,
}

/// `2 * (1 - score)`, in `[0, 2]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Reward(f64);

impl Reward {
    pub fn from_score(score: Score) -> Self {
        Reward(2.0 * (1.0 - score.value()))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Credits one scored derivation.
///
/// Every visited edge with multiplicity `m` receives `m` visits and `m`
/// incremental-mean updates with the same reward; every visited rule's
/// node count grows by its visit count (for OR rules, the sum of its
/// outgoing multiplicities).
pub fn backpropagate(
    state: &mut SearchState,
    trace: &DerivationTrace,
    score: f64,
) -> Result<Reward, SearchError> {
    let score = Score::new(score).map_err(|_| SearchError::ScoreOutOfRange(score))?;
    let reward = Reward::from_score(score);
    for edge in &trace.visited_edges {
        state.credit_edge(&edge.parent, &edge.child, reward.value(), edge.multiplicity);
    }
    for (rule, visits) in &trace.node_visits {
        state.credit_node(rule, *visits);
    }
    Ok(reward)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchParams {
    /// Separator placed between terminals in the rendered prompt.
    pub join: String,
    /// Constant inside the exploration square root.
    pub exploration: f64,
}

impl Default for SearchParams {
    fn default() -> Self {
        SearchParams {
            join: ", ".to_string(),
            exploration: DEFAULT_EXPLORATION,
        }
    }
}

/// Outcome of a scored iteration.
#[derive(Debug, Clone)]
pub struct Step {
    pub iteration: u64,
    pub trace: DerivationTrace,
    pub score: Score,
    pub reward: Reward,
}

/// A grammar, its search statistics and the seeded RNG driving selection.
///
/// The RNG is ChaCha8 seeded from a `u64`; its word position is part of
/// every [`Checkpoint`], so a restored searcher continues the identical
/// sequence.
#[derive(Debug, Clone)]
pub struct Searcher<'g> {
    grammar: &'g Grammar,
    params: SearchParams,
    state: SearchState,
    rng: ChaCha8Rng,
    seed: u64,
}

impl<'g> Searcher<'g> {
    pub fn new(grammar: &'g Grammar, params: SearchParams, seed: u64) -> Result<Self, SearchError> {
        let report = validate_grammar(grammar);
        if !report.is_valid() {
            return Err(SearchError::InvalidGrammar(report));
        }
        Ok(Searcher {
            grammar,
            params,
            state: SearchState::default(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            seed,
        })
    }

    pub fn from_checkpoint(
        grammar: &'g Grammar,
        params: SearchParams,
        checkpoint: &Checkpoint,
    ) -> Result<Self, SearchError> {
        let expected = grammar.content_hash();
        if checkpoint.grammar_hash != expected {
            return Err(SearchError::GrammarMismatch {
                expected,
                found: checkpoint.grammar_hash.clone(),
            });
        }
        let mut searcher = Searcher::new(grammar, params, checkpoint.rng_seed)?;
        searcher.state = checkpoint.to_state()?;
        searcher.rng.set_word_pos(checkpoint.rng_position);
        Ok(searcher)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let (node_stats, edge_stats) = Checkpoint::stats_of(&self.state);
        Checkpoint {
            grammar_hash: self.grammar.content_hash(),
            iteration: self.state.iteration,
            rng_seed: self.seed,
            rng_position: self.rng.get_word_pos(),
            node_stats,
            edge_stats,
        }
    }

    pub fn grammar(&self) -> &'g Grammar {
        self.grammar
    }

    pub fn params(&self) -> &SearchParams {
        &self.params
    }

    pub fn state(&self) -> &SearchState {
        &self.state
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Index of the next iteration.
    pub fn iteration(&self) -> u64 {
        self.state.iteration
    }

    /// Derives the next prompt. Advances the RNG only.
    pub fn expand(&mut self) -> DerivationTrace {
        expand(
            self.grammar,
            &self.state,
            &mut self.rng,
            &self.params.join,
            self.params.exploration,
        )
    }

    /// Backpropagates `score` for `trace` and closes the iteration.
    pub fn commit(&mut self, trace: &DerivationTrace, score: f64) -> Result<Reward, SearchError> {
        let reward = backpropagate(&mut self.state, trace, score)?;
        self.state.iteration += 1;
        Ok(reward)
    }

    /// Closes an iteration whose score is missing, leaving statistics as
    /// they were.
    pub fn skip(&mut self) {
        self.state.iteration += 1;
    }

    /// Expansion, simulation and backpropagation for one iteration.
    ///
    /// On scorer failure nothing but the RNG has moved; the caller decides
    /// whether to [`skip`](Self::skip).
    pub fn step(&mut self, scorer: &dyn Scorer) -> Result<Step, IterationError> {
        let iteration = self.state.iteration;
        let trace = self.expand();
        let score = match scorer.score_iteration(iteration, &trace.prompt) {
            Ok(score) => score,
            Err(source) => {
                return Err(IterationError {
                    iteration,
                    prompt: trace.prompt,
                    source,
                })
            }
        };
        let reward = self
            .commit(&trace, score.value())
            .expect("Score is always within [0, 1]");
        Ok(Step {
            iteration,
            trace,
            score,
            reward,
        })
    }

    /// Re-derives a logged iteration and credits its logged score instead
    /// of calling a scorer. The derived prompt must match the log.
    pub fn replay(&mut self, record: &IterationRecord) -> Result<(), SearchError> {
        let trace = self.expand();
        if trace.prompt != record.prompt || record.i != self.state.iteration {
            return Err(SearchError::ReplayDiverged {
                iteration: self.state.iteration,
                logged: record.prompt.clone(),
                derived: trace.prompt,
            });
        }
        match record.score {
            Some(score) => {
                self.commit(&trace, score)?;
            }
            None => self.skip(),
        }
        Ok(())
    }
}

/// One full iteration producing a log record.
///
/// `bypass` is `score < threshold`.
pub fn run_iteration(
    searcher: &mut Searcher<'_>,
    scorer: &dyn Scorer,
    threshold: f64,
    clock: &Timestamps,
) -> Result<IterationRecord, IterationError> {
    let step = searcher.step(scorer)?;
    Ok(IterationRecord::scored(
        step.iteration,
        step.trace.prompt,
        step.score.value(),
        step.reward.value(),
        step.score.value() < threshold,
        clock.now(),
        scorer.id().to_string(),
    ))
}
