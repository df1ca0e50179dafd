//! LTLf formula syntax: AST, parser, and canonical printer.
//!
//! Grammar (loosest binding first):
//!
//! ```text
//! implies := or ( "->" implies )?
//! or      := and ( "|" and )*
//! and     := until ( "&" until )*
//! until   := unary ( "U" until )?
//! unary   := ( "!" | "X" | "F" | "G" ) unary | primary
//! primary := "(" implies ")" | "true" | "false" | IDENT | "quoted string"
//! ```

use std::fmt;

use serde::{Deserialize, Serialize};

use super::OutcomeError;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Formula {
    True,
    False,
    Atom(String),
    Not(Box<Formula>),
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
    Implies(Box<Formula>, Box<Formula>),
    Next(Box<Formula>),
    Eventually(Box<Formula>),
    Globally(Box<Formula>),
    Until(Box<Formula>, Box<Formula>),
}

impl Formula {
    pub fn atom(label: impl Into<String>) -> Self {
        Formula::Atom(label.into())
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(f: Formula) -> Self {
        Formula::Not(Box::new(f))
    }

    pub fn and(a: Formula, b: Formula) -> Self {
        Formula::And(Box::new(a), Box::new(b))
    }

    pub fn or(a: Formula, b: Formula) -> Self {
        Formula::Or(Box::new(a), Box::new(b))
    }

    pub fn implies(a: Formula, b: Formula) -> Self {
        Formula::Implies(Box::new(a), Box::new(b))
    }

    pub fn next(f: Formula) -> Self {
        Formula::Next(Box::new(f))
    }

    pub fn eventually(f: Formula) -> Self {
        Formula::Eventually(Box::new(f))
    }

    pub fn globally(f: Formula) -> Self {
        Formula::Globally(Box::new(f))
    }

    pub fn until(a: Formula, b: Formula) -> Self {
        Formula::Until(Box::new(a), Box::new(b))
    }

    pub fn depth(&self) -> usize {
        match self {
            Formula::True | Formula::False | Formula::Atom(_) => 1,
            Formula::Not(f) | Formula::Next(f) | Formula::Eventually(f) | Formula::Globally(f) => {
                1 + f.depth()
            }
            Formula::And(a, b)
            | Formula::Or(a, b)
            | Formula::Implies(a, b)
            | Formula::Until(a, b) => 1 + a.depth().max(b.depth()),
        }
    }
}

impl std::str::FromStr for Formula {
    type Err = OutcomeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_formula(s)
    }
}

fn is_bare(label: &str) -> bool {
    !label.is_empty()
        && label.chars().all(|c| c.is_alphanumeric() || c == '_')
        && !matches!(label, "X" | "F" | "G" | "U" | "true" | "false")
}

/// Canonical form: binary operators fully parenthesized, unary arguments
/// always parenthesized. Re-parsing the output yields the same AST.
impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Formula::True => f.write_str("true"),
            Formula::False => f.write_str("false"),
            Formula::Atom(a) if is_bare(a) => f.write_str(a),
            Formula::Atom(a) => {
                f.write_str("\"")?;
                for c in a.chars() {
                    if c == '"' || c == '\\' {
                        f.write_str("\\")?;
                    }
                    write!(f, "{c}")?;
                }
                f.write_str("\"")
            }
            Formula::Not(x) => write!(f, "!({x})"),
            Formula::Next(x) => write!(f, "X({x})"),
            Formula::Eventually(x) => write!(f, "F({x})"),
            Formula::Globally(x) => write!(f, "G({x})"),
            Formula::And(a, b) => write!(f, "({a} & {b})"),
            Formula::Or(a, b) => write!(f, "({a} | {b})"),
            Formula::Implies(a, b) => write!(f, "({a} -> {b})"),
            Formula::Until(a, b) => write!(f, "({a} U {b})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Quoted(String),
    Bang,
    Amp,
    Pipe,
    Arrow,
    LParen,
    RParen,
}

fn syntax(pos: usize, message: impl Into<String>) -> OutcomeError {
    OutcomeError::Syntax {
        pos,
        message: message.into(),
    }
}

fn tokenize(text: &str) -> Result<Vec<(usize, Tok)>, OutcomeError> {
    let mut out = Vec::new();
    let mut chars = text.char_indices().peekable();
    while let Some(&(pos, c)) = chars.peek() {
        match c {
            c if c.is_whitespace() => {
                chars.next();
            }
            '!' | '¬' => {
                chars.next();
                out.push((pos, Tok::Bang));
            }
            '&' | '∧' => {
                chars.next();
                out.push((pos, Tok::Amp));
            }
            '|' | '∨' => {
                chars.next();
                out.push((pos, Tok::Pipe));
            }
            '→' => {
                chars.next();
                out.push((pos, Tok::Arrow));
            }
            '(' => {
                chars.next();
                out.push((pos, Tok::LParen));
            }
            ')' => {
                chars.next();
                out.push((pos, Tok::RParen));
            }
            '-' => {
                chars.next();
                match chars.next() {
                    Some((_, '>')) => out.push((pos, Tok::Arrow)),
                    _ => return Err(syntax(pos, "expected `->`")),
                }
            }
            '"' => {
                chars.next();
                let mut s = String::new();
                loop {
                    match chars.next() {
                        Some((_, '"')) => break,
                        Some((_, '\\')) => match chars.next() {
                            Some((_, e)) => s.push(e),
                            None => return Err(syntax(pos, "unterminated string")),
                        },
                        Some((_, ch)) => s.push(ch),
                        None => return Err(syntax(pos, "unterminated string")),
                    }
                }
                out.push((pos, Tok::Quoted(s)));
            }
            c if c.is_alphanumeric() || c == '_' => {
                let mut s = String::new();
                while let Some(&(_, ch)) = chars.peek() {
                    if ch.is_alphanumeric() || ch == '_' {
                        s.push(ch);
                        chars.next();
                    } else {
                        break;
                    }
                }
                out.push((pos, Tok::Ident(s)));
            }
            other => return Err(syntax(pos, format!("unexpected character `{other}`"))),
        }
    }
    Ok(out)
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    at: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.at).map(|(_, t)| t)
    }

    fn pos(&self) -> usize {
        self.toks.get(self.at).map_or(self.end, |(p, _)| *p)
    }

    fn peek_ident(&self, word: &str) -> bool {
        matches!(self.peek(), Some(Tok::Ident(s)) if s == word)
    }

    fn implies(&mut self) -> Result<Formula, OutcomeError> {
        let lhs = self.or()?;
        if self.peek() == Some(&Tok::Arrow) {
            self.at += 1;
            let rhs = self.implies()?;
            return Ok(Formula::implies(lhs, rhs));
        }
        Ok(lhs)
    }

    fn or(&mut self) -> Result<Formula, OutcomeError> {
        let mut lhs = self.and()?;
        while self.peek() == Some(&Tok::Pipe) {
            self.at += 1;
            lhs = Formula::or(lhs, self.and()?);
        }
        Ok(lhs)
    }

    fn and(&mut self) -> Result<Formula, OutcomeError> {
        let mut lhs = self.until()?;
        while self.peek() == Some(&Tok::Amp) {
            self.at += 1;
            lhs = Formula::and(lhs, self.until()?);
        }
        Ok(lhs)
    }

    fn until(&mut self) -> Result<Formula, OutcomeError> {
        let lhs = self.unary()?;
        if self.peek_ident("U") {
            self.at += 1;
            let rhs = self.until()?;
            return Ok(Formula::until(lhs, rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Formula, OutcomeError> {
        let wrap: fn(Formula) -> Formula = match self.peek() {
            Some(Tok::Bang) => Formula::not,
            Some(Tok::Ident(s)) if s == "X" => Formula::next,
            Some(Tok::Ident(s)) if s == "F" => Formula::eventually,
            Some(Tok::Ident(s)) if s == "G" => Formula::globally,
            _ => return self.primary(),
        };
        self.at += 1;
        Ok(wrap(self.unary()?))
    }

    fn primary(&mut self) -> Result<Formula, OutcomeError> {
        let pos = self.pos();
        let tok = self.peek().cloned();
        match tok {
            Some(Tok::LParen) => {
                self.at += 1;
                let inner = self.implies()?;
                if self.peek() != Some(&Tok::RParen) {
                    return Err(syntax(self.pos(), "expected `)`"));
                }
                self.at += 1;
                Ok(inner)
            }
            Some(Tok::Quoted(s)) => {
                self.at += 1;
                Ok(Formula::Atom(s))
            }
            Some(Tok::Ident(s)) => match s.as_str() {
                "U" => Err(syntax(pos, "`U` needs a left operand")),
                "true" => {
                    self.at += 1;
                    Ok(Formula::True)
                }
                "false" => {
                    self.at += 1;
                    Ok(Formula::False)
                }
                _ => {
                    self.at += 1;
                    Ok(Formula::Atom(s))
                }
            },
            Some(other) => Err(syntax(pos, format!("unexpected token {other:?}"))),
            None => Err(syntax(pos, "unexpected end of input")),
        }
    }
}

/// Parses a formula from its text form.
pub fn parse_formula(text: &str) -> Result<Formula, OutcomeError> {
    let toks = tokenize(text)?;
    if toks.is_empty() {
        return Err(OutcomeError::EmptyFormula);
    }
    let mut p = Parser {
        toks,
        at: 0,
        end: text.len(),
    };
    let f = p.implies()?;
    if p.at != p.toks.len() {
        return Err(syntax(p.pos(), "trailing input"));
    }
    Ok(f)
}
