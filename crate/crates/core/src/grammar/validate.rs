use std::collections::{HashMap, HashSet};
use std::fmt;

use super::{Grammar, RuleBody, Symbol};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ValidationIssue {
    UndefinedRoot(String),
    UndefinedReference { rule: String, symbol: String },
    /// Rule names along the cycle; the first name is repeated at the end.
    Cycle(Vec<String>),
    DuplicateAlternative { rule: String, symbol: Symbol },
}

impl fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValidationIssue::UndefinedRoot(root) => write!(f, "undefined root rule `{root}`"),
            ValidationIssue::UndefinedReference { rule, symbol } => {
                write!(f, "undefined reference: `{symbol}` in rule `{rule}`")
            }
            ValidationIssue::Cycle(path) => write!(f, "cycle: {}", path.join("→")),
            ValidationIssue::DuplicateAlternative { rule, symbol } => {
                write!(f, "duplicate OR alternative {symbol} in rule `{rule}`")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ValidationWarning {
    Unreachable(String),
}

impl fmt::Display for ValidationWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValidationWarning::Unreachable(rule) => write!(f, "unreachable: {rule}"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub errors: Vec<ValidationIssue>,
    pub warnings: Vec<ValidationWarning>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.errors.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for e in &self.errors {
            writeln!(f, "error: {e}")?;
        }
        for w in &self.warnings {
            writeln!(f, "warning: {w}")?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Mark {
    Active,
    Done,
}

struct CycleFinder<'g> {
    grammar: &'g Grammar,
    marks: HashMap<&'g str, Mark>,
    stack: Vec<&'g str>,
    cycles: Vec<Vec<String>>,
}

impl<'g> CycleFinder<'g> {
    fn visit(&mut self, name: &'g str) {
        match self.marks.get(name) {
            Some(Mark::Done) => return,
            Some(Mark::Active) => {
                let start = self.stack.iter().position(|n| *n == name).expect("active on stack");
                let mut path: Vec<String> = self.stack[start..].iter().map(|s| s.to_string()).collect();
                path.push(name.to_string());
                self.cycles.push(path);
                return;
            }
            None => {}
        }
        let Some(body) = self.grammar.rule(name) else {
            return;
        };
        self.marks.insert(name, Mark::Active);
        self.stack.push(name);
        for child in body.children() {
            if let Some(next) = child.as_rule() {
                let next = self.grammar.rules.get_key_value(next).map(|(k, _)| k.as_str());
                if let Some(next) = next {
                    self.visit(next);
                }
            }
        }
        self.stack.pop();
        self.marks.insert(name, Mark::Done);
    }
}

/// Checks whole-grammar invariants. Problems are returned as data; the
/// grammar is usable for search iff [`ValidationReport::is_valid`].
pub fn validate_grammar(g: &Grammar) -> ValidationReport {
    let mut report = ValidationReport::default();

    if g.rule(g.root()).is_none() {
        report.errors.push(ValidationIssue::UndefinedRoot(g.root().to_string()));
    }

    for (name, body) in g.rules() {
        for child in body.children() {
            if let Some(target) = child.as_rule() {
                if g.rule(target).is_none() {
                    report.errors.push(ValidationIssue::UndefinedReference {
                        rule: name.to_string(),
                        symbol: target.to_string(),
                    });
                }
            }
        }
        if let RuleBody::Or(alternatives) = body {
            let mut seen = HashSet::new();
            for alt in alternatives {
                if !seen.insert(alt) {
                    report.errors.push(ValidationIssue::DuplicateAlternative {
                        rule: name.to_string(),
                        symbol: alt.clone(),
                    });
                }
            }
        }
    }

    let mut finder = CycleFinder {
        grammar: g,
        marks: HashMap::new(),
        stack: Vec::new(),
        cycles: Vec::new(),
    };
    if let Some((root, _)) = g.rules.get_key_value(g.root()) {
        finder.visit(root);
    }
    for (name, _) in g.rules() {
        finder.visit(name);
    }
    report.errors.extend(finder.cycles.into_iter().map(ValidationIssue::Cycle));

    let mut reachable: HashSet<&str> = HashSet::new();
    let mut pending: Vec<&str> = Vec::new();
    if g.rule(g.root()).is_some() {
        pending.push(g.root());
    }
    while let Some(name) = pending.pop() {
        if !reachable.insert(name) {
            continue;
        }
        if let Some(body) = g.rule(name) {
            pending.extend(body.children().iter().filter_map(Symbol::as_rule).filter(|r| g.rule(r).is_some()));
        }
    }
    for (name, _) in g.rules() {
        if !reachable.contains(name) {
            report.warnings.push(ValidationWarning::Unreachable(name.to_string()));
        }
    }

    report
}
