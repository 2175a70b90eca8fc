//! Typed grammar trees whose derivations are prompts.
//!
//! A grammar is an ordered set of rules. Each rule is one of three node
//! kinds:
//!
//! - `AND` visits every child in order and concatenates the results.
//! - `OR` picks exactly one alternative (the choice the search learns).
//! - `RAND` visits its single child a uniformly random number of times
//!   in `min..=max`.
//!
//! Grammars are read from a line-based DSL (see [`parse_grammar`]) and
//! written back with [`serialize_grammar`]; [`validate_grammar`] checks the
//! whole-grammar invariants (defined references, acyclicity, distinct OR
//! alternatives, reachability).

mod parse;
mod serialize;
mod validate;

use std::fmt;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use parse::{parse_grammar, parse_symbol, ParseError, ParseErrorKind};
pub use serialize::{escape_terminal, serialize_grammar};
pub use validate::{validate_grammar, ValidationIssue, ValidationReport, ValidationWarning};

/// Rule name conventionally used as the derivation root.
pub const DEFAULT_ROOT: &str = "PROMPT";

/// A rule body reference: either another rule or literal prompt text.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Symbol {
    Rule(String),
    Terminal(String),
}

impl Symbol {
    pub fn rule(name: impl Into<String>) -> Self {
        Symbol::Rule(name.into())
    }

    pub fn terminal(text: impl Into<String>) -> Self {
        Symbol::Terminal(text.into())
    }

    pub fn as_rule(&self) -> Option<&str> {
        match self {
            Symbol::Rule(name) => Some(name),
            Symbol::Terminal(_) => None,
        }
    }
}

/// Renders the symbol the way it is written in the DSL: bare rule names,
/// quoted and escaped terminals.
impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Symbol::Rule(name) => f.write_str(name),
            Symbol::Terminal(text) => write!(f, "\"{}\"", escape_terminal(text)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RuleBody {
    And(Vec<Symbol>),
    Or(Vec<Symbol>),
    Rand { min: u32, max: u32, child: Symbol },
}

impl RuleBody {
    pub fn kind(&self) -> NodeKind {
        match self {
            RuleBody::And(_) => NodeKind::And,
            RuleBody::Or(_) => NodeKind::Or,
            RuleBody::Rand { .. } => NodeKind::Rand,
        }
    }

    /// Children in declaration order (the single child for `RAND`).
    pub fn children(&self) -> &[Symbol] {
        match self {
            RuleBody::And(children) | RuleBody::Or(children) => children,
            RuleBody::Rand { child, .. } => std::slice::from_ref(child),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeKind {
    And,
    Or,
    Rand,
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NodeKind::And => "AND",
            NodeKind::Or => "OR",
            NodeKind::Rand => "RAND",
        })
    }
}

#[derive(Debug, Clone)]
pub struct Grammar {
    rules: IndexMap<String, RuleBody>,
    root: String,
}

/// Structural equality: same root, same rules in the same order.
impl PartialEq for Grammar {
    fn eq(&self, other: &Self) -> bool {
        self.root == other.root && self.rules.iter().eq(other.rules.iter())
    }
}

impl Eq for Grammar {}

impl Grammar {
    /// Builds a grammar from rules in declaration order. The root defaults
    /// to `PROMPT` when such a rule exists, else the first rule.
    ///
    /// Returns `None` when `rules` is empty.
    pub fn new(rules: IndexMap<String, RuleBody>) -> Option<Self> {
        let root = if rules.contains_key(DEFAULT_ROOT) {
            DEFAULT_ROOT.to_string()
        } else {
            rules.keys().next()?.clone()
        };
        Some(Grammar { rules, root })
    }

    /// Replaces the root. The name is not checked here; an undefined root
    /// is reported by validation.
    pub fn with_root(mut self, root: impl Into<String>) -> Self {
        self.root = root.into();
        self
    }

    pub fn root(&self) -> &str {
        &self.root
    }

    pub fn rule(&self, name: &str) -> Option<&RuleBody> {
        self.rules.get(name)
    }

    pub fn rules(&self) -> impl Iterator<Item = (&str, &RuleBody)> {
        self.rules.iter().map(|(name, body)| (name.as_str(), body))
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    /// SHA-256 over the canonical serialization plus the root, hex encoded.
    /// Comment and whitespace edits to a grammar file leave it unchanged.
    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(b"root=");
        hasher.update(self.root.as_bytes());
        hasher.update(b"\n");
        hasher.update(serialize_grammar(self).as_bytes());
        hasher
            .finalize()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}
