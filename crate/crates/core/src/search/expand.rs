use indexmap::IndexMap;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::select::{rand_count, select_child};
use super::SearchState;
use crate::grammar::{Grammar, RuleBody, Symbol};

/// One edge traversed during an expansion and how often.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VisitedEdge {
    pub parent: String,
    pub child: Symbol,
    pub multiplicity: u64,
}

/// Everything one expansion touched, plus the rendered prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DerivationTrace {
    /// Edges in order of first traversal.
    pub visited_edges: Vec<VisitedEdge>,
    /// Rules in order of first visit, with visit counts.
    pub node_visits: Vec<(String, u64)>,
    /// Terminal texts, left to right.
    pub leaves: Vec<String>,
    pub prompt: String,
}

impl DerivationTrace {
    pub fn multiplicity(&self, parent: &str, child: &Symbol) -> u64 {
        self.visited_edges
            .iter()
            .find(|e| e.parent == parent && &e.child == child)
            .map_or(0, |e| e.multiplicity)
    }
}

struct Expander<'a, R: ?Sized> {
    grammar: &'a Grammar,
    state: &'a SearchState,
    rng: &'a mut R,
    exploration: f64,
    edges: IndexMap<(&'a str, &'a Symbol), u64>,
    nodes: IndexMap<&'a str, u64>,
    leaves: Vec<String>,
}

impl<'a, R: Rng + ?Sized> Expander<'a, R> {
    fn visit(&mut self, symbol: &'a Symbol) {
        match symbol {
            Symbol::Terminal(text) => self.leaves.push(text.clone()),
            Symbol::Rule(name) => self.visit_rule(name),
        }
    }

    fn visit_rule(&mut self, name: &'a str) {
        let body = self
            .grammar
            .rule(name)
            .unwrap_or_else(|| panic!("expansion reached undefined rule `{name}`"));
        *self.nodes.entry(name).or_default() += 1;
        match body {
            RuleBody::And(children) => {
                for child in children {
                    self.traverse(name, child);
                }
            }
            RuleBody::Or(alternatives) => {
                let child = select_child(name, alternatives, self.state, self.rng, self.exploration);
                self.traverse(name, child);
            }
            RuleBody::Rand { min, max, child } => {
                for _ in 0..rand_count(*min, *max, self.rng) {
                    self.traverse(name, child);
                }
            }
        }
    }

    fn traverse(&mut self, parent: &'a str, child: &'a Symbol) {
        *self.edges.entry((parent, child)).or_default() += 1;
        self.visit(child);
    }
}

/// Depth-first derivation from the root.
///
/// `AND` visits every child in order, `OR` defers to [`select_child`],
/// `RAND` repeats its child a [`rand_count`] number of times with each
/// repetition drawing its own OR choices. Statistics are read, not written;
/// [`super::backpropagate`] applies the result.
///
/// The grammar must be valid; an undefined rule panics.
pub fn expand<R: Rng + ?Sized>(
    grammar: &Grammar,
    state: &SearchState,
    rng: &mut R,
    join: &str,
    exploration: f64,
) -> DerivationTrace {
    let mut ex = Expander {
        grammar,
        state,
        rng,
        exploration,
        edges: IndexMap::new(),
        nodes: IndexMap::new(),
        leaves: Vec::new(),
    };
    ex.visit_rule(grammar.root());
    let prompt = ex.leaves.join(join);
    DerivationTrace {
        visited_edges: ex
            .edges
            .into_iter()
            .map(|((parent, child), multiplicity)| VisitedEdge {
                parent: parent.to_string(),
                child: child.clone(),
                multiplicity,
            })
            .collect(),
        node_visits: ex.nodes.into_iter().map(|(n, c)| (n.to_string(), c)).collect(),
        leaves: ex.leaves,
        prompt,
    }
}

