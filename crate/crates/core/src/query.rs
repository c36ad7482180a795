//! Count queries: conjunctions of attribute clauses, their text syntax, and
//! the canonical key used by the once-per-query ledger.
//!
//! Syntax:
//!
//! ```text
//! commute = car && age != 30 && region in {east, "north west"}
//! ```
//!
//! Clauses are joined with `&&`, `∧` or the keyword `and`. Operators are
//! `=` (or `==`), `!=` and `in {..}`. Values are bare tokens or
//! double-quoted strings (`\"` and `\\` escapes). A bare value that reads as
//! a finite number also matches numeric attributes; a quoted value only ever
//! matches categorical text.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AttrValue, DataOwner, Dataset};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Operator {
    Eq,
    Ne,
    In,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Literal {
    text: String,
    numeric: Option<f64>,
}

impl Literal {
    /// A literal written without quotes; numeric if the token reads as a
    /// finite number.
    pub fn bare(text: impl Into<String>) -> Self {
        let text = text.into();
        let numeric = parse_finite(&text);
        Literal { text, numeric }
    }

    /// A literal that only matches categorical text.
    pub fn text(text: impl Into<String>) -> Self {
        Literal { text: text.into(), numeric: None }
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }

    fn matches(&self, value: &AttrValue) -> bool {
        match value {
            AttrValue::Num(v) => self.numeric == Some(*v),
            AttrValue::Cat(s) => *s == self.text,
        }
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.numeric.is_some() || (is_bare_token(&self.text) && parse_finite(&self.text).is_none()) {
            f.write_str(&self.text)
        } else {
            write_quoted(f, &self.text)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Clause {
    pub attribute: String,
    pub op: Operator,
    pub values: Vec<Literal>,
}

impl Clause {
    pub fn eq(attribute: impl Into<String>, value: Literal) -> Self {
        Clause { attribute: attribute.into(), op: Operator::Eq, values: vec![value] }
    }

    pub fn ne(attribute: impl Into<String>, value: Literal) -> Self {
        Clause { attribute: attribute.into(), op: Operator::Ne, values: vec![value] }
    }

    pub fn is_in(attribute: impl Into<String>, values: Vec<Literal>) -> Self {
        Clause { attribute: attribute.into(), op: Operator::In, values }
    }

    fn test(&self, value: &AttrValue) -> bool {
        match self.op {
            Operator::Eq => self.values[0].matches(value),
            Operator::Ne => !self.values[0].matches(value),
            Operator::In => self.values.iter().any(|v| v.matches(value)),
        }
    }

    /// Semantically equivalent clause in normal form: `in` sets sorted and
    /// deduplicated, singleton sets rewritten as `=`.
    fn normalized(&self) -> Clause {
        match self.op {
            Operator::In => {
                let mut values = self.values.clone();
                values.sort_by_key(|v| v.to_string());
                values.dedup_by(|a, b| a.to_string() == b.to_string());
                if values.len() == 1 {
                    Clause { attribute: self.attribute.clone(), op: Operator::Eq, values }
                } else {
                    Clause { attribute: self.attribute.clone(), op: Operator::In, values }
                }
            }
            _ => self.clone(),
        }
    }
}

impl fmt::Display for Clause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_name(f, &self.attribute)?;
        match self.op {
            Operator::Eq => write!(f, " = {}", self.values[0]),
            Operator::Ne => write!(f, " != {}", self.values[0]),
            Operator::In => {
                f.write_str(" in {")?;
                for (i, v) in self.values.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{v}")?;
                }
                f.write_str("}")
            }
        }
    }
}

/// A counting query: the number of owners whose record satisfies every clause.
#[derive(Debug, Clone, PartialEq)]
pub struct CountQuery {
    clauses: Vec<Clause>,
}

impl CountQuery {
    pub fn new(clauses: Vec<Clause>) -> Result<Self> {
        if clauses.is_empty() {
            return Err(Error::Parse("a query needs at least one clause".into()));
        }
        for c in &clauses {
            let arity_ok = match c.op {
                Operator::Eq | Operator::Ne => c.values.len() == 1,
                Operator::In => true,
            };
            if !arity_ok {
                return Err(Error::Parse(format!("clause on {:?} has the wrong number of values", c.attribute)));
            }
        }
        Ok(CountQuery { clauses })
    }

    pub fn parse(input: &str) -> Result<Self> {
        Parser::new(input)?.query()
    }

    pub fn clauses(&self) -> &[Clause] {
        &self.clauses
    }

    /// Resolves attribute names against the dataset schema.
    pub fn bind<'q>(&'q self, dataset: &Dataset) -> Result<BoundQuery<'q>> {
        let schema = dataset.schema();
        let columns = self
            .clauses
            .iter()
            .map(|c| {
                schema
                    .index_of(&c.attribute)
                    .ok_or_else(|| Error::Schema(format!("unknown attribute {:?}", c.attribute)))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(BoundQuery { query: self, columns })
    }

    pub fn key(&self) -> QueryKey {
        canonical_query_key(self)
    }
}

impl fmt::Display for CountQuery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key().as_str())
    }
}

impl FromStr for CountQuery {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CountQuery::parse(s)
    }
}

/// A query whose attribute references have been checked against a schema.
#[derive(Debug, Clone)]
pub struct BoundQuery<'q> {
    query: &'q CountQuery,
    columns: Vec<usize>,
}

impl BoundQuery<'_> {
    pub fn matches(&self, owner: &DataOwner) -> bool {
        self.query.clauses.iter().zip(&self.columns).all(|(clause, &col)| clause.test(&owner.attributes[col]))
    }

    pub fn flag(&self, dataset: &Dataset, index: usize) -> bool {
        self.matches(dataset.owner(index))
    }

    pub fn count(&self, dataset: &Dataset) -> usize {
        dataset.owners().iter().filter(|o| self.matches(o)).count()
    }
}

/// True answer `Q(x)`: the number of matching owners.
pub fn evaluate_query(query: &CountQuery, dataset: &Dataset) -> Result<f64> {
    Ok(query.bind(dataset)?.count(dataset) as f64)
}

/// Clause-order-independent rendering of a query.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct QueryKey(String);

impl QueryKey {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn parse(&self) -> Result<CountQuery> {
        CountQuery::parse(&self.0)
    }
}

impl fmt::Display for QueryKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

pub fn canonical_query_key(query: &CountQuery) -> QueryKey {
    let mut rendered: Vec<String> = query.clauses.iter().map(|c| c.normalized().to_string()).collect();
    rendered.sort();
    rendered.dedup();
    QueryKey(rendered.join(" && "))
}

fn parse_finite(text: &str) -> Option<f64> {
    text.parse::<f64>().ok().filter(|v| v.is_finite())
}

fn is_bare_char(c: char) -> bool {
    c.is_alphanumeric() || matches!(c, '_' | '.' | '-' | '+' | ':' | '/')
}

fn is_keyword(s: &str) -> bool {
    s.eq_ignore_ascii_case("and") || s.eq_ignore_ascii_case("in")
}

fn is_bare_token(s: &str) -> bool {
    !s.is_empty() && s.chars().all(is_bare_char) && !is_keyword(s)
}

fn write_name(f: &mut fmt::Formatter<'_>, name: &str) -> fmt::Result {
    if is_bare_token(name) {
        f.write_str(name)
    } else {
        write_quoted(f, name)
    }
}

fn write_quoted(f: &mut fmt::Formatter<'_>, s: &str) -> fmt::Result {
    f.write_str("\"")?;
    for c in s.chars() {
        match c {
            '"' => f.write_str("\\\"")?,
            '\\' => f.write_str("\\\\")?,
            c => write!(f, "{c}")?,
        }
    }
    f.write_str("\"")
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Bare(String),
    Quoted(String),
    Eq,
    Ne,
    In,
    And,
    LBrace,
    RBrace,
    Comma,
}

fn tokenize(input: &str) -> Result<Vec<Token>> {
    let mut tokens = Vec::new();
    let mut chars = input.char_indices().peekable();
    while let Some(&(pos, c)) = chars.peek() {
        match c {
            c if c.is_whitespace() => {
                chars.next();
            }
            '{' => {
                chars.next();
                tokens.push(Token::LBrace);
            }
            '}' => {
                chars.next();
                tokens.push(Token::RBrace);
            }
            ',' => {
                chars.next();
                tokens.push(Token::Comma);
            }
            '∧' => {
                chars.next();
                tokens.push(Token::And);
            }
            '&' => {
                chars.next();
                match chars.next() {
                    Some((_, '&')) => tokens.push(Token::And),
                    _ => return Err(Error::Parse(format!("expected `&&` at offset {pos}"))),
                }
            }
            '=' => {
                chars.next();
                if let Some(&(_, '=')) = chars.peek() {
                    chars.next();
                }
                tokens.push(Token::Eq);
            }
            '!' => {
                chars.next();
                match chars.next() {
                    Some((_, '=')) => tokens.push(Token::Ne),
                    _ => return Err(Error::Parse(format!("expected `!=` at offset {pos}"))),
                }
            }
            '"' => {
                chars.next();
                let mut text = String::new();
                loop {
                    match chars.next() {
                        None => return Err(Error::Parse(format!("unterminated string starting at offset {pos}"))),
                        Some((_, '"')) => break,
                        Some((at, '\\')) => match chars.next() {
                            Some((_, '"')) => text.push('"'),
                            Some((_, '\\')) => text.push('\\'),
                            _ => return Err(Error::Parse(format!("bad escape at offset {at}"))),
                        },
                        Some((_, c)) => text.push(c),
                    }
                }
                tokens.push(Token::Quoted(text));
            }
            c if is_bare_char(c) => {
                let mut text = String::new();
                while let Some(&(_, c)) = chars.peek() {
                    if !is_bare_char(c) {
                        break;
                    }
                    text.push(c);
                    chars.next();
                }
                if text.eq_ignore_ascii_case("and") {
                    tokens.push(Token::And);
                } else if text.eq_ignore_ascii_case("in") {
                    tokens.push(Token::In);
                } else {
                    tokens.push(Token::Bare(text));
                }
            }
            other => return Err(Error::Parse(format!("unexpected character {other:?} at offset {pos}"))),
        }
    }
    Ok(tokens)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn new(input: &str) -> Result<Self> {
        Ok(Parser { tokens: tokenize(input)?, pos: 0 })
    }

    fn next(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn query(&mut self) -> Result<CountQuery> {
        let mut clauses = vec![self.clause()?];
        while let Some(tok) = self.next() {
            if tok != Token::And {
                return Err(Error::Parse(format!("expected a conjunction, found {tok:?}")));
            }
            clauses.push(self.clause()?);
        }
        CountQuery::new(clauses)
    }

    fn clause(&mut self) -> Result<Clause> {
        let attribute = match self.next() {
            Some(Token::Bare(s)) | Some(Token::Quoted(s)) => s,
            other => return Err(Error::Parse(format!("expected an attribute name, found {other:?}"))),
        };
        match self.next() {
            Some(Token::Eq) => Ok(Clause::eq(attribute, self.value()?)),
            Some(Token::Ne) => Ok(Clause::ne(attribute, self.value()?)),
            Some(Token::In) => {
                match self.next() {
                    Some(Token::LBrace) => {}
                    other => return Err(Error::Parse(format!("expected `{{` after `in`, found {other:?}"))),
                }
                let mut values = Vec::new();
                if self.peek() == Some(&Token::RBrace) {
                    self.next();
                    return Ok(Clause::is_in(attribute, values));
                }
                loop {
                    values.push(self.value()?);
                    match self.next() {
                        Some(Token::Comma) => continue,
                        Some(Token::RBrace) => break,
                        other => return Err(Error::Parse(format!("expected `,` or `}}`, found {other:?}"))),
                    }
                }
                Ok(Clause::is_in(attribute, values))
            }
            other => Err(Error::Parse(format!("expected an operator after {attribute:?}, found {other:?}"))),
        }
    }

    fn value(&mut self) -> Result<Literal> {
        match self.next() {
            Some(Token::Bare(s)) => Ok(Literal::bare(s)),
            Some(Token::Quoted(s)) => Ok(Literal::text(s)),
            other => Err(Error::Parse(format!("expected a value, found {other:?}"))),
        }
    }
}
