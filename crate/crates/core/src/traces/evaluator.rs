//! Deterministic evaluators: keyword, regex and a small boolean predicate
//! language over the final output (and, for scripts, the input).
//!
//! Predicate grammar:
//!
//! ```text
//! expr  := and ("||" and)*
//! and   := unary ("&&" unary)*
//! unary := "!" unary | "(" expr ")" | call
//! call  := ident [ "(" [lit ("," lit)*] ")" ]
//! lit   := "string" | 'string' | integer
//! ```

use std::fmt;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvaluatorKind {
    KeywordRule,
    RegexRule,
    PredicateScript,
    ContractPredicate,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvaluatorSpec {
    pub kind: EvaluatorKind,
    pub rule: String,
}

/// A validated evaluator. Compilation happens once, at construction.
#[derive(Clone)]
pub struct Evaluator {
    spec: EvaluatorSpec,
    compiled: Compiled,
}

#[derive(Clone)]
enum Compiled {
    Keyword(String),
    Regex(Regex),
    Expr(Expr),
}

impl Evaluator {
    pub fn new(spec: EvaluatorSpec) -> Result<Self> {
        let compiled = match spec.kind {
            EvaluatorKind::KeywordRule => {
                if spec.rule.trim().is_empty() {
                    return Err(Error::InvalidEvaluator("keyword rule is empty".into()));
                }
                Compiled::Keyword(spec.rule.to_lowercase())
            }
            EvaluatorKind::RegexRule => Compiled::Regex(
                Regex::new(&spec.rule).map_err(|e| Error::InvalidEvaluator(format!("bad regex {:?}: {e}", spec.rule)))?,
            ),
            EvaluatorKind::PredicateScript => Compiled::Expr(parse(&spec.rule, true)?),
            EvaluatorKind::ContractPredicate => Compiled::Expr(parse(&spec.rule, false)?),
        };
        Ok(Self { spec, compiled })
    }

    pub fn keyword(rule: &str) -> Result<Self> {
        Self::new(EvaluatorSpec {
            kind: EvaluatorKind::KeywordRule,
            rule: rule.into(),
        })
    }

    pub fn regex(rule: &str) -> Result<Self> {
        Self::new(EvaluatorSpec {
            kind: EvaluatorKind::RegexRule,
            rule: rule.into(),
        })
    }

    pub fn contract(rule: &str) -> Result<Self> {
        Self::new(EvaluatorSpec {
            kind: EvaluatorKind::ContractPredicate,
            rule: rule.into(),
        })
    }

    pub fn script(rule: &str) -> Result<Self> {
        Self::new(EvaluatorSpec {
            kind: EvaluatorKind::PredicateScript,
            rule: rule.into(),
        })
    }

    pub fn spec(&self) -> &EvaluatorSpec {
        &self.spec
    }

    /// 1 if `output` is acceptable for `input`.
    pub fn evaluate(&self, input: &str, output: &str) -> bool {
        match &self.compiled {
            Compiled::Keyword(k) => output.to_lowercase().contains(k.as_str()),
            Compiled::Regex(r) => r.is_match(output),
            Compiled::Expr(e) => e.eval(input, output),
        }
    }
}

impl fmt::Debug for Evaluator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_tuple("Evaluator").field(&self.spec).finish()
    }
}

impl PartialEq for Evaluator {
    fn eq(&self, other: &Self) -> bool {
        self.spec == other.spec
    }
}

impl Serialize for Evaluator {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.spec.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Evaluator {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        Evaluator::new(EvaluatorSpec::deserialize(d)?).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone)]
enum Expr {
    Or(Box<Expr>, Box<Expr>),
    And(Box<Expr>, Box<Expr>),
    Not(Box<Expr>),
    Const(bool),
    Contains(String),
    IContains(String),
    Matches(Regex),
    Equals(String),
    StartsWith(String),
    EndsWith(String),
    LenMin(usize),
    LenMax(usize),
    WordsMin(usize),
    WordsMax(usize),
    Balanced,
    InputContains(String),
    ContainsInput,
}

impl Expr {
    fn eval(&self, input: &str, out: &str) -> bool {
        match self {
            Expr::Or(a, b) => a.eval(input, out) || b.eval(input, out),
            Expr::And(a, b) => a.eval(input, out) && b.eval(input, out),
            Expr::Not(a) => !a.eval(input, out),
            Expr::Const(b) => *b,
            Expr::Contains(s) => out.contains(s.as_str()),
            Expr::IContains(s) => out.to_lowercase().contains(&s.to_lowercase()),
            Expr::Matches(r) => r.is_match(out),
            Expr::Equals(s) => out.trim() == s,
            Expr::StartsWith(s) => out.starts_with(s.as_str()),
            Expr::EndsWith(s) => out.ends_with(s.as_str()),
            Expr::LenMin(n) => out.chars().count() >= *n,
            Expr::LenMax(n) => out.chars().count() <= *n,
            Expr::WordsMin(n) => out.split_whitespace().count() >= *n,
            Expr::WordsMax(n) => out.split_whitespace().count() <= *n,
            Expr::Balanced => balanced(out),
            Expr::InputContains(s) => input.contains(s.as_str()),
            Expr::ContainsInput => out.contains(input.trim()),
        }
    }
}

/// Brackets `()[]{}` nest properly.
fn balanced(s: &str) -> bool {
    let mut stack = Vec::new();
    for c in s.chars() {
        match c {
            '(' | '[' | '{' => stack.push(c),
            ')' | ']' | '}' => {
                let open = match c {
                    ')' => '(',
                    ']' => '[',
                    _ => '{',
                };
                if stack.pop() != Some(open) {
                    return false;
                }
            }
            _ => {}
        }
    }
    stack.is_empty()
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Str(String),
    Int(usize),
    LParen,
    RParen,
    Comma,
    And,
    Or,
    Not,
}

fn bad(msg: impl Into<String>) -> Error {
    Error::InvalidEvaluator(msg.into())
}

fn lex(src: &str) -> Result<Vec<Tok>> {
    let chars: Vec<char> = src.chars().collect();
    let mut i = 0;
    let mut out = Vec::new();
    while i < chars.len() {
        let c = chars[i];
        match c {
            c if c.is_whitespace() => i += 1,
            '(' => {
                out.push(Tok::LParen);
                i += 1;
            }
            ')' => {
                out.push(Tok::RParen);
                i += 1;
            }
            ',' => {
                out.push(Tok::Comma);
                i += 1;
            }
            '!' => {
                out.push(Tok::Not);
                i += 1;
            }
            '&' | '|' => {
                if chars.get(i + 1) != Some(&c) {
                    return Err(bad(format!("expected `{c}{c}` at offset {i}")));
                }
                out.push(if c == '&' { Tok::And } else { Tok::Or });
                i += 2;
            }
            '"' | '\'' => {
                let quote = c;
                let mut s = String::new();
                i += 1;
                loop {
                    match chars.get(i) {
                        None => return Err(bad("unterminated string literal")),
                        Some('\\') => {
                            match chars.get(i + 1) {
                                Some('n') => s.push('\n'),
                                Some(&e) => s.push(e),
                                None => return Err(bad("dangling escape")),
                            }
                            i += 2;
                        }
                        Some(&q) if q == quote => {
                            i += 1;
                            break;
                        }
                        Some(&ch) => {
                            s.push(ch);
                            i += 1;
                        }
                    }
                }
                out.push(Tok::Str(s));
            }
            c if c.is_ascii_digit() => {
                let start = i;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
                let text: String = chars[start..i].iter().collect();
                out.push(Tok::Int(text.parse().map_err(|_| bad(format!("integer out of range: {text}")))?));
            }
            c if c.is_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                out.push(Tok::Ident(chars[start..i].iter().collect()));
            }
            other => return Err(bad(format!("unexpected character {other:?} at offset {i}"))),
        }
    }
    Ok(out)
}

struct Parser {
    toks: Vec<Tok>,
    pos: usize,
    allow_input: bool,
}

fn parse(src: &str, allow_input: bool) -> Result<Expr> {
    let mut p = Parser {
        toks: lex(src)?,
        pos: 0,
        allow_input,
    };
    if p.toks.is_empty() {
        return Err(bad("predicate is empty"));
    }
    let e = p.or()?;
    if p.pos != p.toks.len() {
        return Err(bad(format!("trailing input after token {}", p.pos)));
    }
    Ok(e)
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn expect(&mut self, t: Tok) -> Result<()> {
        match self.next() {
            Some(got) if got == t => Ok(()),
            got => Err(bad(format!("expected {t:?}, found {got:?}"))),
        }
    }

    fn or(&mut self) -> Result<Expr> {
        let mut lhs = self.and()?;
        while self.peek() == Some(&Tok::Or) {
            self.pos += 1;
            lhs = Expr::Or(Box::new(lhs), Box::new(self.and()?));
        }
        Ok(lhs)
    }

    fn and(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        while self.peek() == Some(&Tok::And) {
            self.pos += 1;
            lhs = Expr::And(Box::new(lhs), Box::new(self.unary()?));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr> {
        match self.next() {
            Some(Tok::Not) => Ok(Expr::Not(Box::new(self.unary()?))),
            Some(Tok::LParen) => {
                let e = self.or()?;
                self.expect(Tok::RParen)?;
                Ok(e)
            }
            Some(Tok::Ident(name)) => self.call(name),
            other => Err(bad(format!("expected a predicate, found {other:?}"))),
        }
    }

    fn call(&mut self, name: String) -> Result<Expr> {
        let mut args = Vec::new();
        if self.peek() == Some(&Tok::LParen) {
            self.pos += 1;
            if self.peek() != Some(&Tok::RParen) {
                loop {
                    match self.next() {
                        Some(t @ (Tok::Str(_) | Tok::Int(_))) => args.push(t),
                        other => return Err(bad(format!("{name}: expected a literal argument, found {other:?}"))),
                    }
                    if self.peek() == Some(&Tok::Comma) {
                        self.pos += 1;
                    } else {
                        break;
                    }
                }
            }
            self.expect(Tok::RParen)?;
        }
        let str_arg = |args: &[Tok]| match args {
            [Tok::Str(s)] => Ok(s.clone()),
            _ => Err(bad(format!("{name} takes one string argument"))),
        };
        let int_arg = |args: &[Tok]| match args {
            [Tok::Int(n)] => Ok(*n),
            _ => Err(bad(format!("{name} takes one integer argument"))),
        };
        let no_args = |args: &[Tok]| {
            if args.is_empty() {
                Ok(())
            } else {
                Err(bad(format!("{name} takes no arguments")))
            }
        };
        Ok(match name.as_str() {
            "true" => no_args(&args).map(|_| Expr::Const(true))?,
            "false" => no_args(&args).map(|_| Expr::Const(false))?,
            "contains" => Expr::Contains(str_arg(&args)?),
            "icontains" => Expr::IContains(str_arg(&args)?),
            "matches" => {
                let pat = str_arg(&args)?;
                Expr::Matches(Regex::new(&pat).map_err(|e| bad(format!("bad regex {pat:?}: {e}")))?)
            }
            "equals" => Expr::Equals(str_arg(&args)?),
            "starts_with" => Expr::StartsWith(str_arg(&args)?),
            "ends_with" => Expr::EndsWith(str_arg(&args)?),
            "len_min" => Expr::LenMin(int_arg(&args)?),
            "len_max" => Expr::LenMax(int_arg(&args)?),
            "words_min" => Expr::WordsMin(int_arg(&args)?),
            "words_max" => Expr::WordsMax(int_arg(&args)?),
            "balanced" => no_args(&args).map(|_| Expr::Balanced)?,
            "input_contains" | "contains_input" if !self.allow_input => {
                return Err(bad(format!("{name} is only available in predicate scripts")))
            }
            "input_contains" => Expr::InputContains(str_arg(&args)?),
            "contains_input" => no_args(&args).map(|_| Expr::ContainsInput)?,
            other => return Err(bad(format!("unknown predicate {other:?}"))),
        })
    }
}
