use std::fmt::Write;

use super::{Grammar, RuleBody};

/// Escapes `\` and `"` for use inside a quoted terminal.
pub fn escape_terminal(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        if matches!(c, '"' | '\\') {
            out.push('\\');
        }
        out.push(c);
    }
    out
}

/// Writes one rule per line in declaration order.
///
/// The root is implied by the DSL (`PROMPT`, else the first rule), so a
/// root set with [`Grammar::with_root`] is not recorded.
pub fn serialize_grammar(g: &Grammar) -> String {
    let mut out = String::new();
    for (name, body) in g.rules() {
        let _ = match body {
            RuleBody::And(children) => {
                let syms: Vec<String> = children.iter().map(ToString::to_string).collect();
                writeln!(out, "{name} ::= AND {}", syms.join(" "))
            }
            RuleBody::Or(alternatives) => {
                let syms: Vec<String> = alternatives.iter().map(ToString::to_string).collect();
                writeln!(out, "{name} ::= OR {}", syms.join(" | "))
            }
            RuleBody::Rand { min, max, child } => {
                writeln!(out, "{name} ::= RAND {min} {max} {child}")
            }
        };
    }
    out
}
