//! Parsing of raw model output into sentiment tuples.
//!
//! The expected shape is `Sentiment elements: [("a", "b", "c"), ...]`.
//! Strict mode accepts exactly that; tolerant mode extracts the first tuple
//! list found anywhere in the text and reports every deviation as a
//! [`Diagnostic`]. Tolerant parsing never fails.
//!
//! A quote character closes a field only when it is followed (after optional
//! whitespace) by `,`, `)` or `]`, so apostrophes inside terms such as
//! `'is n't'` survive. Inside quoted fields `\"`, `\'` and `\\` are escapes.

mod canonical;

use std::collections::HashSet;
use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use canonical::{canonicalize, CanonicalizationPolicy};

use crate::types::{is_null_marker, CategoryLabel, Element, Polarity, SentimentTuple, TaskSchema, TermSpan};

pub const RESPONSE_PREFIX: &str = "Sentiment elements:";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParseMode {
    Strict,
    #[default]
    Tolerant,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiagnosticKind {
    ExtraneousText,
    NoTupleList,
    UnbalancedBrackets,
    MalformedTuple,
    BadArity,
    IllegalImplicit,
    UnknownPolarity,
    EmptyTerm,
    DuplicateTuple,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub kind: DiagnosticKind,
    /// Byte range in the raw response.
    pub span: Range<usize>,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseOutcome {
    pub tuples: Vec<SentimentTuple>,
    pub diagnostics: Vec<Diagnostic>,
}

impl ParseOutcome {
    pub fn has(&self, kind: DiagnosticKind) -> bool {
        self.diagnostics.iter().any(|d| d.kind == kind)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("no `Sentiment elements: [...]` tuple list found")]
    NoTupleList,
    #[error("unbalanced brackets at byte {0}")]
    UnbalancedBrackets(usize),
    #[error("malformed tuple list at byte {offset}: {detail}")]
    Malformed { offset: usize, detail: String },
    #[error("extraneous text at bytes {0:?}")]
    ExtraneousText(Range<usize>),
}

/// One tuple as it appeared on the wire, before schema mapping.
#[derive(Debug, Clone)]
struct RawTuple {
    fields: Vec<String>,
    span: Range<usize>,
}

struct ListScan {
    tuples: Vec<RawTuple>,
    end: usize,
}

struct ScanFailure {
    /// Tuples completed before the failure.
    partial: Vec<RawTuple>,
    offset: usize,
    unbalanced: bool,
    detail: String,
}

struct Scanner<'a> {
    src: &'a str,
    pos: usize,
    strict: bool,
}

impl<'a> Scanner<'a> {
    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += c.len_utf8();
        Some(c)
    }

    fn skip_ws(&mut self) {
        while let Some(c) = self.peek() {
            if c.is_whitespace() {
                self.bump();
            } else {
                break;
            }
        }
    }

    fn next_non_ws(&self, from: usize) -> Option<char> {
        self.src[from..].chars().find(|c| !c.is_whitespace())
    }

    fn fail(&self, partial: Vec<RawTuple>, detail: impl Into<String>) -> ScanFailure {
        ScanFailure {
            partial,
            offset: self.pos,
            unbalanced: self.pos >= self.src.len(),
            detail: detail.into(),
        }
    }

    /// Scans `[ item, item, ... ]` starting at the opening bracket.
    fn list(&mut self) -> Result<ListScan, ScanFailure> {
        debug_assert_eq!(self.peek(), Some('['));
        self.bump();
        let mut tuples = Vec::new();
        loop {
            self.skip_ws();
            match self.peek() {
                Some(']') => {
                    self.bump();
                    return Ok(ListScan { tuples, end: self.pos });
                }
                Some('(') => {}
                Some('[') if !self.strict => {}
                Some(_) => return Err(self.fail(tuples, "expected a tuple")),
                None => return Err(self.fail(tuples, "input ended inside the list")),
            }
            match self.tuple() {
                Ok(t) => tuples.push(t),
                Err(detail) => return Err(self.fail(tuples, detail)),
            }
            self.skip_ws();
            match self.peek() {
                Some(',') => {
                    self.bump();
                }
                Some(']') => {}
                Some(_) => return Err(self.fail(tuples, "expected `,` or `]` after tuple")),
                None => return Err(self.fail(tuples, "input ended inside the list")),
            }
        }
    }

    fn tuple(&mut self) -> Result<RawTuple, String> {
        let start = self.pos;
        let close = match self.bump() {
            Some('(') => ')',
            Some('[') => ']',
            _ => unreachable!("caller checked the opener"),
        };
        let mut fields = Vec::new();
        loop {
            self.skip_ws();
            match self.peek() {
                Some(c) if c == close => {
                    self.bump();
                    return Ok(RawTuple {
                        fields,
                        span: start..self.pos,
                    });
                }
                None => return Err("input ended inside a tuple".into()),
                _ => {}
            }
            fields.push(self.field(close)?);
            self.skip_ws();
            match self.peek() {
                Some(',') => {
                    self.bump();
                }
                Some(c) if c == close => {}
                Some(c) => return Err(format!("unexpected {c:?} inside tuple")),
                None => return Err("input ended inside a tuple".into()),
            }
        }
    }

    fn field(&mut self, close: char) -> Result<String, String> {
        match self.peek() {
            Some(q @ ('"' | '\'')) if !self.strict || q == '"' => self.quoted(q, close),
            Some(_) if self.strict => Err("fields must be double-quoted".into()),
            Some(_) => self.bare(close),
            None => Err("input ended inside a tuple".into()),
        }
    }

    fn quoted(&mut self, quote: char, close: char) -> Result<String, String> {
        self.bump();
        let mut out = String::new();
        while let Some(c) = self.bump() {
            if c == '\\' {
                match self.peek() {
                    Some(e @ ('"' | '\'' | '\\')) => {
                        self.bump();
                        out.push(e);
                    }
                    _ => out.push('\\'),
                }
                continue;
            }
            if c == quote {
                match self.next_non_ws(self.pos) {
                    Some(',') | None => return Ok(out),
                    Some(n) if n == close => return Ok(out),
                    _ => {}
                }
            }
            out.push(c);
        }
        Err("unterminated quoted field".into())
    }

    fn bare(&mut self, close: char) -> Result<String, String> {
        let start = self.pos;
        while let Some(c) = self.peek() {
            if c == ',' || c == close {
                break;
            }
            self.bump();
        }
        let text = self.src[start..self.pos].trim();
        if text.is_empty() {
            Err("empty field".into())
        } else {
            Ok(text.to_string())
        }
    }
}

fn diag(kind: DiagnosticKind, span: Range<usize>, detail: impl Into<String>) -> Diagnostic {
    Diagnostic {
        kind,
        span,
        detail: detail.into(),
    }
}

/// Parses a model response under the given schema.
///
/// Tolerant mode always returns `Ok`. Strict mode fails on structural faults
/// (missing prefix, bad brackets, trailing prose); tuple-level faults such as
/// wrong arity are dropped into diagnostics in both modes.
pub fn parse_response(
    text: &str,
    schema: &TaskSchema,
    mode: ParseMode,
) -> Result<ParseOutcome, ParseError> {
    match mode {
        ParseMode::Strict => parse_strict(text, schema),
        ParseMode::Tolerant => Ok(parse_tolerant(text, schema)),
    }
}

/// Tolerant parsing of arbitrary bytes; invalid UTF-8 is replaced lossily.
pub fn parse_response_bytes(bytes: &[u8], schema: &TaskSchema) -> ParseOutcome {
    parse_tolerant(&String::from_utf8_lossy(bytes), schema)
}

fn parse_strict(text: &str, schema: &TaskSchema) -> Result<ParseOutcome, ParseError> {
    let lead = text.len() - text.trim_start().len();
    let body = text.trim_end();
    if !body[lead..].starts_with(RESPONSE_PREFIX) {
        return Err(ParseError::NoTupleList);
    }
    let mut scanner = Scanner {
        src: body,
        pos: lead + RESPONSE_PREFIX.len(),
        strict: true,
    };
    scanner.skip_ws();
    if scanner.peek() != Some('[') {
        return Err(ParseError::NoTupleList);
    }
    let scan = scanner.list().map_err(|f| {
        if f.unbalanced {
            ParseError::UnbalancedBrackets(f.offset)
        } else {
            ParseError::Malformed {
                offset: f.offset,
                detail: f.detail,
            }
        }
    })?;
    if scan.end != body.len() {
        return Err(ParseError::ExtraneousText(scan.end..body.len()));
    }
    let mut outcome = ParseOutcome::default();
    map_tuples(scan.tuples, schema, &mut outcome);
    Ok(outcome)
}

/// Candidate list openers: `[` whose next non-space char starts a tuple or
/// closes an empty list.
fn list_candidates(text: &str) -> impl Iterator<Item = usize> + '_ {
    text.char_indices().filter_map(move |(i, c)| {
        if c != '[' {
            return None;
        }
        match text[i + 1..].chars().find(|c| !c.is_whitespace()) {
            Some('(' | ']' | '[') => Some(i),
            _ => None,
        }
    })
}

fn parse_tolerant(text: &str, schema: &TaskSchema) -> ParseOutcome {
    let mut outcome = ParseOutcome::default();
    let Some(start) = list_candidates(text).next() else {
        outcome.diagnostics.push(diag(
            DiagnosticKind::NoTupleList,
            0..text.len(),
            "no bracketed tuple list in response",
        ));
        return outcome;
    };

    let prefix = text[..start].trim();
    let prefix_is_expected = prefix.is_empty() || prefix == RESPONSE_PREFIX;
    if !prefix_is_expected {
        outcome.diagnostics.push(diag(
            DiagnosticKind::ExtraneousText,
            0..start,
            "text before the tuple list",
        ));
    }

    let mut scanner = Scanner {
        src: text,
        pos: start,
        strict: false,
    };
    let (raw, end) = match scanner.list() {
        Ok(scan) => (scan.tuples, scan.end),
        Err(failure) => {
            let kind = if failure.unbalanced {
                DiagnosticKind::UnbalancedBrackets
            } else {
                DiagnosticKind::MalformedTuple
            };
            outcome
                .diagnostics
                .push(diag(kind, failure.offset..text.len(), failure.detail));
            (failure.partial, text.len())
        }
    };
    if !text[end..].trim().is_empty() {
        outcome.diagnostics.push(diag(
            DiagnosticKind::ExtraneousText,
            end..text.len(),
            "text after the tuple list",
        ));
    }
    map_tuples(raw, schema, &mut outcome);
    outcome
}

fn term(raw: &str, element: Element, schema: &TaskSchema) -> Result<TermSpan, (DiagnosticKind, String)> {
    if is_null_marker(raw) {
        if schema.implicit_allowed {
            Ok(TermSpan::Implicit)
        } else {
            Err((DiagnosticKind::IllegalImplicit, format!("implicit {element} not allowed")))
        }
    } else if raw.trim().is_empty() {
        Err((DiagnosticKind::EmptyTerm, format!("empty {element}")))
    } else {
        Ok(TermSpan::Explicit(raw.to_string()))
    }
}

fn map_one(raw: &RawTuple, schema: &TaskSchema) -> Result<SentimentTuple, (DiagnosticKind, String)> {
    if raw.fields.len() != schema.arity() {
        return Err((
            DiagnosticKind::BadArity,
            format!("expected {} elements, found {}", schema.arity(), raw.fields.len()),
        ));
    }
    let mut aspect = None;
    let mut category = None;
    let mut polarity = None;
    let mut opinion = None;
    for (element, value) in schema.wire_order.iter().zip(&raw.fields) {
        match element {
            Element::Aspect => aspect = Some(term(value, Element::Aspect, schema)?),
            Element::Opinion => opinion = Some(term(value, Element::Opinion, schema)?),
            Element::Category => {
                if is_null_marker(value) {
                    return Err((DiagnosticKind::IllegalImplicit, "category cannot be null".into()));
                }
                if value.trim().is_empty() {
                    return Err((DiagnosticKind::EmptyTerm, "empty category".into()));
                }
                category = Some(CategoryLabel(value.clone()));
            }
            Element::Polarity => {
                polarity = Some(value.parse::<Polarity>().map_err(|_| {
                    (DiagnosticKind::UnknownPolarity, format!("unknown polarity {value:?}"))
                })?)
            }
        }
    }
    Ok(SentimentTuple {
        aspect: aspect.expect("every schema has an aspect"),
        category,
        polarity: polarity.expect("every schema has a polarity"),
        opinion,
    })
}

fn map_tuples(raw: Vec<RawTuple>, schema: &TaskSchema, outcome: &mut ParseOutcome) {
    let mut seen = HashSet::new();
    for (index, r) in raw.iter().enumerate() {
        match map_one(r, schema) {
            Ok(t) => {
                if seen.insert(t.clone()) {
                    outcome.tuples.push(t);
                } else {
                    outcome.diagnostics.push(diag(
                        DiagnosticKind::DuplicateTuple,
                        r.span.clone(),
                        format!("tuple {index} repeats an earlier tuple"),
                    ));
                }
            }
            Err((kind, detail)) => outcome
                .diagnostics
                .push(diag(kind, r.span.clone(), format!("tuple {index}: {detail}"))),
        }
    }
}
