use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::grammar::Symbol;

/// Visit count and running mean reward of one grammar edge.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EdgeStats {
    pub n_edge: u64,
    pub q_mean: f64,
}

impl EdgeStats {
    /// Credits `reward` `times` times with single-value incremental mean
    /// updates.
    pub fn credit(&mut self, reward: f64, times: u64) {
        for _ in 0..times {
            self.n_edge += 1;
            self.q_mean += (reward - self.q_mean) / self.n_edge as f64;
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeStats {
    pub n_node: u64,
}

/// Search statistics shared across all derivation positions: one
/// [`NodeStats`] per rule and one [`EdgeStats`] per (parent rule, child
/// symbol) pair.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SearchState {
    pub(crate) nodes: BTreeMap<String, NodeStats>,
    pub(crate) edges: BTreeMap<String, BTreeMap<Symbol, EdgeStats>>,
    pub(crate) iteration: u64,
}

impl SearchState {
    /// Number of completed iterations, including skipped ones.
    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    pub fn node(&self, rule: &str) -> NodeStats {
        self.nodes.get(rule).copied().unwrap_or_default()
    }

    pub fn edge(&self, parent: &str, child: &Symbol) -> EdgeStats {
        self.edges
            .get(parent)
            .and_then(|children| children.get(child))
            .copied()
            .unwrap_or_default()
    }

    /// All credited edges of `parent`, ordered by child symbol.
    pub fn edges_of(&self, parent: &str) -> impl Iterator<Item = (&Symbol, &EdgeStats)> {
        self.edges.get(parent).into_iter().flat_map(|m| m.iter())
    }

    pub fn nodes(&self) -> impl Iterator<Item = (&str, &NodeStats)> {
        self.nodes.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn edges(&self) -> impl Iterator<Item = (&str, &Symbol, &EdgeStats)> {
        self.edges
            .iter()
            .flat_map(|(p, m)| m.iter().map(move |(c, s)| (p.as_str(), c, s)))
    }

    pub(crate) fn credit_edge(&mut self, parent: &str, child: &Symbol, reward: f64, times: u64) {
        self.edges
            .entry(parent.to_string())
            .or_default()
            .entry(child.clone())
            .or_default()
            .credit(reward, times);
    }

    pub(crate) fn credit_node(&mut self, rule: &str, visits: u64) {
        self.nodes.entry(rule.to_string()).or_default().n_node += visits;
    }
}
