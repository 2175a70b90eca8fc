use indexmap::IndexMap;
use thiserror::Error;

use super::{Grammar, RuleBody, Symbol};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}, column {column}: {kind}")]
pub struct ParseError {
    /// 1-based source line.
    pub line: usize,
    /// 1-based character column.
    pub column: usize,
    pub kind: ParseErrorKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseErrorKind {
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error("duplicate rule name `{0}`")]
    DuplicateRule(String),
    #[error("RAND takes exactly one child, found {0}")]
    RandArity(usize),
    #[error("min > max ({min} > {max})")]
    MinGreaterThanMax { min: u32, max: u32 },
    #[error("RAND max must be at least 1")]
    ZeroMax,
    #[error("empty child list")]
    EmptyChildren,
    #[error("empty terminal")]
    EmptyTerminal,
    #[error("grammar has no rules")]
    NoRules,
}

const KEYWORDS: [&str; 3] = ["AND", "OR", "RAND"];

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Int(u32),
    Str(String),
    Define,
    Pipe,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(name) => format!("`{name}`"),
            Tok::Int(n) => format!("number {n}"),
            Tok::Str(_) => "terminal".to_string(),
            Tok::Define => "`::=`".to_string(),
            Tok::Pipe => "`|`".to_string(),
        }
    }
}

/// Token with its 1-based column.
type Spanned = (usize, Tok);

fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_'
}

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_'
}

fn tokenize(line_no: usize, line: &str) -> Result<Vec<Spanned>, ParseError> {
    let err = |column: usize, kind: ParseErrorKind| ParseError {
        line: line_no,
        column,
        kind,
    };
    let chars: Vec<char> = line.chars().collect();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let col = i + 1;
        if c.is_whitespace() {
            i += 1;
        } else if c == '|' {
            toks.push((col, Tok::Pipe));
            i += 1;
        } else if c == ':' {
            if chars.get(i + 1) == Some(&':') && chars.get(i + 2) == Some(&'=') {
                toks.push((col, Tok::Define));
                i += 3;
            } else {
                return Err(err(col, ParseErrorKind::Syntax("expected `::=`".into())));
            }
        } else if c == '"' {
            let mut text = String::new();
            i += 1;
            loop {
                match chars.get(i) {
                    None => {
                        return Err(err(
                            col,
                            ParseErrorKind::Syntax("unterminated terminal".into()),
                        ))
                    }
                    Some('"') => {
                        i += 1;
                        break;
                    }
                    Some('\\') => match chars.get(i + 1) {
                        Some(&e @ ('"' | '\\')) => {
                            text.push(e);
                            i += 2;
                        }
                        Some(other) => {
                            return Err(err(
                                i + 1,
                                ParseErrorKind::Syntax(format!("unknown escape `\\{other}`")),
                            ))
                        }
                        None => {
                            return Err(err(
                                col,
                                ParseErrorKind::Syntax("unterminated terminal".into()),
                            ))
                        }
                    },
                    Some(&ch) => {
                        text.push(ch);
                        i += 1;
                    }
                }
            }
            if text.is_empty() {
                return Err(err(col, ParseErrorKind::EmptyTerminal));
            }
            toks.push((col, Tok::Str(text)));
        } else if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            if i < chars.len() && is_ident_char(chars[i]) {
                return Err(err(
                    col,
                    ParseErrorKind::Syntax("identifiers must not start with a digit".into()),
                ));
            }
            let digits: String = chars[start..i].iter().collect();
            let n = digits
                .parse::<u32>()
                .map_err(|_| err(col, ParseErrorKind::Syntax(format!("count `{digits}` out of range"))))?;
            toks.push((col, Tok::Int(n)));
        } else if is_ident_start(c) {
            let start = i;
            while i < chars.len() && is_ident_char(chars[i]) {
                i += 1;
            }
            toks.push((col, Tok::Ident(chars[start..i].iter().collect())));
        } else {
            return Err(err(
                col,
                ParseErrorKind::Syntax(format!("unexpected character `{c}`")),
            ));
        }
    }
    Ok(toks)
}

struct LineParser {
    line: usize,
    end_column: usize,
    toks: std::iter::Peekable<std::vec::IntoIter<Spanned>>,
}

impl LineParser {
    fn err(&self, column: usize, kind: ParseErrorKind) -> ParseError {
        ParseError {
            line: self.line,
            column,
            kind,
        }
    }

    fn syntax(&self, column: usize, msg: impl Into<String>) -> ParseError {
        self.err(column, ParseErrorKind::Syntax(msg.into()))
    }

    fn next(&mut self, expected: &str) -> Result<Spanned, ParseError> {
        self.toks
            .next()
            .ok_or_else(|| self.syntax(self.end_column, format!("expected {expected}, found end of line")))
    }

    fn symbol(&self, (col, tok): Spanned) -> Result<Symbol, ParseError> {
        match tok {
            Tok::Ident(name) if KEYWORDS.contains(&name.as_str()) => Err(self.syntax(
                col,
                format!("`{name}` is a reserved keyword, not a symbol"),
            )),
            Tok::Ident(name) => Ok(Symbol::Rule(name)),
            Tok::Str(text) => Ok(Symbol::Terminal(text)),
            other => Err(self.syntax(col, format!("expected symbol, found {}", other.describe()))),
        }
    }

    fn count(&mut self, what: &str) -> Result<(usize, u32), ParseError> {
        match self.next(what)? {
            (col, Tok::Int(n)) => Ok((col, n)),
            (col, other) => Err(self.syntax(col, format!("expected {what}, found {}", other.describe()))),
        }
    }

    fn rule(&mut self) -> Result<(usize, String, RuleBody), ParseError> {
        let (name_col, name) = match self.next("rule name")? {
            (col, Tok::Ident(name)) if !KEYWORDS.contains(&name.as_str()) => (col, name),
            (col, Tok::Ident(name)) => {
                return Err(self.syntax(col, format!("`{name}` is a reserved keyword")))
            }
            (col, other) => {
                return Err(self.syntax(col, format!("expected rule name, found {}", other.describe())))
            }
        };
        match self.next("`::=`")? {
            (_, Tok::Define) => {}
            (col, other) => {
                return Err(self.syntax(col, format!("expected `::=`, found {}", other.describe())))
            }
        }
        let (kw_col, keyword) = match self.next("AND, OR or RAND")? {
            (col, Tok::Ident(kw)) if KEYWORDS.contains(&kw.as_str()) => (col, kw),
            (col, other) => {
                return Err(self.syntax(
                    col,
                    format!("expected AND, OR or RAND, found {}", other.describe()),
                ))
            }
        };
        let body = match keyword.as_str() {
            "AND" => {
                let mut children = Vec::new();
                while let Some(tok) = self.toks.next() {
                    if tok.1 == Tok::Pipe {
                        return Err(self.syntax(tok.0, "`|` is only allowed in OR rules"));
                    }
                    children.push(self.symbol(tok)?);
                }
                if children.is_empty() {
                    return Err(self.err(kw_col, ParseErrorKind::EmptyChildren));
                }
                RuleBody::And(children)
            }
            "OR" => {
                let mut alternatives = Vec::new();
                match self.toks.next() {
                    None => return Err(self.err(kw_col, ParseErrorKind::EmptyChildren)),
                    Some(tok) => alternatives.push(self.symbol(tok)?),
                }
                while let Some((col, tok)) = self.toks.next() {
                    if tok != Tok::Pipe {
                        return Err(self.syntax(
                            col,
                            format!("expected `|` between alternatives, found {}", tok.describe()),
                        ));
                    }
                    let next = self.next("symbol after `|`")?;
                    alternatives.push(self.symbol(next)?);
                }
                RuleBody::Or(alternatives)
            }
            _ => {
                let (min_col, min) = self.count("RAND min count")?;
                let (_, max) = self.count("RAND max count")?;
                let rest: Vec<Spanned> = self.toks.by_ref().collect();
                if rest.len() != 1 {
                    let col = rest.get(1).map_or(kw_col, |t| t.0);
                    return Err(self.err(col, ParseErrorKind::RandArity(rest.len())));
                }
                if min > max {
                    return Err(self.err(min_col, ParseErrorKind::MinGreaterThanMax { min, max }));
                }
                if max == 0 {
                    return Err(self.err(min_col, ParseErrorKind::ZeroMax));
                }
                let child = self.symbol(rest.into_iter().next().expect("one child"))?;
                RuleBody::Rand { min, max, child }
            }
        };
        Ok((name_col, name, body))
    }
}

/// Parses grammar DSL source.
///
/// ```text
/// # comment
/// PROMPT  ::= AND SUBJECT STYLE
/// SUBJECT ::= OR "a man" | "a woman"
/// STYLE   ::= RAND 1 3 LIGHT
/// LIGHT   ::= OR "dazzle" | "overexposure"
/// ```
///
/// Only per-line structure is checked; references, cycles and duplicate
/// alternatives are left to [`validate_grammar`](super::validate_grammar).
pub fn parse_grammar(source: &str) -> Result<Grammar, ParseError> {
    let mut rules: IndexMap<String, RuleBody> = IndexMap::new();
    for (idx, raw) in source.lines().enumerate() {
        let line_no = idx + 1;
        let trimmed = raw.trim_start();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let toks = tokenize(line_no, raw)?;
        let mut parser = LineParser {
            line: line_no,
            end_column: raw.chars().count() + 1,
            toks: toks.into_iter().peekable(),
        };
        let (col, name, body) = parser.rule()?;
        if rules.contains_key(&name) {
            return Err(ParseError {
                line: line_no,
                column: col,
                kind: ParseErrorKind::DuplicateRule(name),
            });
        }
        rules.insert(name, body);
    }
    let line = source.lines().count().max(1);
    Grammar::new(rules).ok_or(ParseError {
        line,
        column: 1,
        kind: ParseErrorKind::NoRules,
    })
}


/// Parses a single symbol as written in the DSL (`NAME` or `"text"`).
pub fn parse_symbol(text: &str) -> Option<Symbol> {
    let mut toks = tokenize(1, text).ok()?.into_iter();
    let sym = match toks.next()?.1 {
        Tok::Ident(name) if !KEYWORDS.contains(&name.as_str()) => Symbol::Rule(name),
        Tok::Str(text) => Symbol::Terminal(text),
        _ => return None,
    };
    toks.next().is_none().then_some(sym)
}
