//! Grammar-guided prompt search with UCT-Rand.
//!
//! Prompts are derivations of a typed grammar tree ([`grammar`]). The
//! search ([`search`]) learns which OR alternatives lead to low detector
//! scores, sampling children in proportion to their UCB weight instead of
//! taking the argmax. Scores come from a black-box [`scorer::Scorer`]:
//! either a deterministic simulated oracle or a text-to-image plus detector
//! pipeline over HTTP ([`clients`]). [`campaign`] adds durable JSONL logs,
//! checkpoints and round-bucketed bypass reports.

pub mod campaign;
pub mod clients;
pub mod grammar;
pub mod scorer;
pub mod search;
pub mod sweep;

pub use grammar::{parse_grammar, serialize_grammar, validate_grammar, Grammar, RuleBody, Symbol};
pub use scorer::{Score, Scorer};
pub use search::{SearchParams, SearchState, Searcher};
