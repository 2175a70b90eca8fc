use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{EdgeStats, NodeStats, SearchError, SearchState};
use crate::grammar::{parse_symbol, Symbol};

/// Separator between parent rule and child symbol in edge keys.
pub const EDGE_KEY_SEPARATOR: char = '→';

/// Durable snapshot of a search: statistics plus the RNG anchors needed to
/// continue the exact same derivation sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub grammar_hash: String,
    pub iteration: u64,
    pub rng_seed: u64,
    /// Word position in the ChaCha8 stream.
    pub rng_position: u128,
    pub node_stats: BTreeMap<String, NodeStats>,
    /// Keyed by `RULE→child`, child written as in the grammar DSL.
    pub edge_stats: BTreeMap<String, EdgeStats>,
}

pub fn edge_key(parent: &str, child: &Symbol) -> String {
    format!("{parent}{EDGE_KEY_SEPARATOR}{child}")
}

pub fn parse_edge_key(key: &str) -> Option<(String, Symbol)> {
    let (parent, child) = key.split_once(EDGE_KEY_SEPARATOR)?;
    Some((parent.to_string(), parse_symbol(child)?))
}

impl Checkpoint {
    pub(crate) fn stats_of(state: &SearchState) -> (BTreeMap<String, NodeStats>, BTreeMap<String, EdgeStats>) {
        let nodes = state.nodes.clone();
        let edges = state
            .edges()
            .map(|(p, c, s)| (edge_key(p, c), *s))
            .collect();
        (nodes, edges)
    }

    pub(crate) fn to_state(&self) -> Result<SearchState, SearchError> {
        let mut state = SearchState {
            nodes: self.node_stats.clone(),
            edges: BTreeMap::new(),
            iteration: self.iteration,
        };
        for (key, stats) in &self.edge_stats {
            let (parent, child) =
                parse_edge_key(key).ok_or_else(|| SearchError::BadCheckpoint(format!("edge key `{key}`")))?;
            state.edges.entry(parent).or_default().insert(child, *stats);
        }
        Ok(state)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, SearchError> {
        serde_json::from_str(text).map_err(|e| SearchError::BadCheckpoint(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn edge_keys_round_trip() {
        for child in [Symbol::rule("LIGHT"), Symbol::terminal("a → \"b\"")] {
            let key = edge_key("PROMPT", &child);
            assert_eq!(parse_edge_key(&key), Some(("PROMPT".to_string(), child)));
        }
        assert_eq!(edge_key("A", &Symbol::terminal("x")), "A→\"x\"");
        assert_eq!(parse_edge_key("A→"), None);
        assert_eq!(parse_edge_key("no separator"), None);
    }

    #[test]
    fn large_rng_position_survives_json() {
        let cp = Checkpoint {
            grammar_hash: "h".into(),
            iteration: 3,
            rng_seed: u64::MAX,
            rng_position: u128::from(u64::MAX) * 17,
            node_stats: BTreeMap::new(),
            edge_stats: BTreeMap::from([(
                "A→\"x\"".to_string(),
                EdgeStats { n_edge: 3, q_mean: 0.1 + 0.2 },
            )]),
        };
        assert_eq!(Checkpoint::from_json(&cp.to_json()).unwrap(), cp);
    }
}
