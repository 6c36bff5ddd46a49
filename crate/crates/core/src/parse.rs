//! Parsing of LLM triple lists.
//!
//! The KG prompt asks for a Python list of 3-string lists inside
//! `<python></python>` tags. This module accepts what models actually emit:
//! single- or double-quoted strings, standard backslash escapes, arbitrary
//! whitespace, trailing commas and prose around the block.

use alloc::borrow::ToOwned;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{make_kg, KnowledgeGraph, Triple};

const OPEN_TAG: &str = "<python>";
const CLOSE_TAG: &str = "</python>";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("no <python>...</python> block in response")]
    NoDelimiterBlock,
    #[error("malformed list syntax at byte {position}: {message}")]
    MalformedListSyntax { position: usize, message: String },
    #[error("element {index} has {found} strings, expected 3")]
    BadArity { index: usize, found: usize },
    #[error("element {index} has an empty string")]
    EmptyField { index: usize },
}

/// Why an element was dropped in lenient mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    BadArity,
    EmptyField,
    NestedTooDeep,
    NonStringLeaf,
    NotAList,
}

impl fmt::Display for DropReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DropReason::BadArity => "bad_arity",
            DropReason::EmptyField => "empty_field",
            DropReason::NestedTooDeep => "nested_too_deep",
            DropReason::NonStringLeaf => "non_string_leaf",
            DropReason::NotAList => "not_a_list",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dropped {
    pub fragment: String,
    pub reason: DropReason,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseOutcome {
    pub kg: KnowledgeGraph,
    pub dropped: Vec<Dropped>,
    pub strict: bool,
}

#[derive(Debug, Clone, PartialEq)]
enum Literal {
    List(Vec<Node>),
    Str(String),
    Scalar,
}

#[derive(Debug, Clone, PartialEq)]
struct Node {
    literal: Literal,
    span: Range<usize>,
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
    base: usize,
}

impl<'a> Parser<'a> {
    fn new(src: &'a str, base: usize) -> Self {
        Self { src, pos: 0, base }
    }

    fn error(&self, message: &str) -> ParseError {
        ParseError::MalformedListSyntax {
            position: self.base + self.pos,
            message: message.to_owned(),
        }
    }

    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += c.len_utf8();
        Some(c)
    }

    fn skip_ws(&mut self) {
        while self.peek().is_some_and(char::is_whitespace) {
            self.bump();
        }
    }

    fn value(&mut self) -> Result<Node, ParseError> {
        self.skip_ws();
        let start = self.pos;
        let literal = match self.peek() {
            Some('[') => self.list()?,
            Some(q @ ('"' | '\'')) => Literal::Str(self.string(q)?),
            Some(c) if is_scalar_char(c) => {
                while self.peek().is_some_and(is_scalar_char) {
                    self.bump();
                }
                Literal::Scalar
            }
            Some(_) => return Err(self.error("unexpected character")),
            None => return Err(self.error("unexpected end of input")),
        };
        Ok(Node {
            literal,
            span: self.base + start..self.base + self.pos,
        })
    }

    fn list(&mut self) -> Result<Literal, ParseError> {
        self.bump();
        let mut items = Vec::new();
        loop {
            self.skip_ws();
            if self.peek() == Some(']') {
                self.bump();
                return Ok(Literal::List(items));
            }
            items.push(self.value()?);
            self.skip_ws();
            match self.peek() {
                Some(',') => {
                    self.bump();
                }
                Some(']') => {
                    self.bump();
                    return Ok(Literal::List(items));
                }
                Some(_) => return Err(self.error("expected `,` or `]`")),
                None => return Err(self.error("unterminated list")),
            }
        }
    }

    fn string(&mut self, quote: char) -> Result<String, ParseError> {
        self.bump();
        let mut out = String::new();
        loop {
            match self.bump() {
                None => return Err(self.error("unterminated string")),
                Some(c) if c == quote => return Ok(out),
                Some('\\') => self.escape(&mut out)?,
                Some(c) => out.push(c),
            }
        }
    }

    fn escape(&mut self, out: &mut String) -> Result<(), ParseError> {
        let c = self.bump().ok_or_else(|| self.error("unterminated escape"))?;
        match c {
            '\n' => {}
            '\\' | '\'' | '"' => out.push(c),
            'n' => out.push('\n'),
            't' => out.push('\t'),
            'r' => out.push('\r'),
            '0' => out.push('\0'),
            'a' => out.push('\u{7}'),
            'b' => out.push('\u{8}'),
            'f' => out.push('\u{c}'),
            'v' => out.push('\u{b}'),
            'x' => out.push(self.hex_escape(2)?),
            'u' => out.push(self.hex_escape(4)?),
            'U' => out.push(self.hex_escape(8)?),
            other => {
                // Unknown escapes are kept verbatim.
                out.push('\\');
                out.push(other);
            }
        }
        Ok(())
    }

    fn hex_escape(&mut self, digits: usize) -> Result<char, ParseError> {
        let rest = &self.src[self.pos..];
        let hex = rest
            .get(..digits)
            .filter(|h| h.chars().all(|c| c.is_ascii_hexdigit()))
            .ok_or_else(|| self.error("truncated hex escape"))?;
        let code = u32::from_str_radix(hex, 16).map_err(|_| self.error("bad hex escape"))?;
        let c = char::from_u32(code).ok_or_else(|| self.error("escape is not a valid character"))?;
        self.pos += digits;
        Ok(c)
    }
}

fn is_scalar_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || matches!(c, '_' | '.' | '+' | '-')
}

/// Parses one complete list literal occupying `src` (surrounding whitespace
/// allowed). `base` offsets reported positions.
fn parse_list_literal(src: &str, base: usize) -> Result<Node, ParseError> {
    let mut parser = Parser::new(src, base);
    parser.skip_ws();
    if parser.peek() != Some('[') {
        return Err(parser.error("expected `[`"));
    }
    let node = parser.value()?;
    parser.skip_ws();
    if parser.pos != src.len() {
        return Err(parser.error("trailing characters after list"));
    }
    Ok(node)
}

enum Element {
    Triple(Triple),
    Reject(DropReason, ParseError),
}

fn classify(index: usize, node: &Node) -> Element {
    let malformed = |message: &str| ParseError::MalformedListSyntax {
        position: node.span.start,
        message: message.to_owned(),
    };
    let Literal::List(items) = &node.literal else {
        return Element::Reject(DropReason::NotAList, malformed("element is not a list"));
    };
    let mut strings = Vec::with_capacity(items.len());
    for item in items {
        match &item.literal {
            Literal::Str(s) => strings.push(s.as_str()),
            Literal::List(_) => {
                return Element::Reject(DropReason::NestedTooDeep, malformed("lists nested deeper than two levels"))
            }
            Literal::Scalar => {
                return Element::Reject(DropReason::NonStringLeaf, malformed("non-string value in triple"))
            }
        }
    }
    match strings.as_slice() {
        [s, r, o] => match Triple::new(s, r, o) {
            Ok(t) => Element::Triple(t),
            Err(_) => Element::Reject(DropReason::EmptyField, ParseError::EmptyField { index }),
        },
        other => Element::Reject(
            DropReason::BadArity,
            ParseError::BadArity {
                index,
                found: other.len(),
            },
        ),
    }
}

/// Byte range of the content of the first `<python>` block.
fn delimited_block(raw: &str) -> Option<Range<usize>> {
    let start = raw.find(OPEN_TAG)? + OPEN_TAG.len();
    let end = start + raw[start..].find(CLOSE_TAG)?;
    Some(start..end)
}

/// Parses a KG construction response.
///
/// Only the first `<python>` block is read. In lenient mode elements that are
/// not 3-string lists are dropped with a reason; in strict mode the first such
/// element is an error.
pub fn parse_kg_response(raw: &str, strict: bool) -> Result<ParseOutcome, ParseError> {
    let block = delimited_block(raw).ok_or(ParseError::NoDelimiterBlock)?;
    let root = parse_list_literal(&raw[block.clone()], block.start)?;
    let Literal::List(elements) = root.literal else {
        unreachable!("parse_list_literal only returns lists")
    };

    let mut triples = Vec::with_capacity(elements.len());
    let mut dropped = Vec::new();
    for (index, node) in elements.iter().enumerate() {
        match classify(index, node) {
            Element::Triple(t) => triples.push(t),
            Element::Reject(_, err) if strict => return Err(err),
            Element::Reject(reason, _) => dropped.push(Dropped {
                fragment: raw[node.span.clone()].to_string(),
                reason,
            }),
        }
    }
    Ok(ParseOutcome {
        kg: make_kg(triples),
        dropped,
        strict,
    })
}

/// Extracts a single triple from a free-form response.
///
/// Scans for the first balanced list literal that is either a bare
/// 3-string list or a list whose first element is one; prose, tags and code
/// fences around it are ignored.
pub fn parse_triple_response(raw: &str) -> Option<Triple> {
    raw.match_indices('[').find_map(|(start, _)| {
        let mut parser = Parser::new(&raw[start..], start);
        let node = parser.value().ok()?;
        match classify(0, &node) {
            Element::Triple(t) => Some(t),
            Element::Reject(DropReason::NestedTooDeep, _) => match &node.literal {
                Literal::List(items) => match classify(0, items.first()?) {
                    Element::Triple(t) => Some(t),
                    Element::Reject(..) => None,
                },
                _ => None,
            },
            Element::Reject(..) => None,
        }
    })
}

fn push_quoted(out: &mut String, s: &str) {
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c => out.push(c),
        }
    }
    out.push('"');
}

/// `["subject", "relation", "object"]`, the form used inside prompts.
pub fn render_triple(t: &Triple) -> String {
    let mut out = String::from("[");
    for (i, field) in t.fields().iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        push_quoted(&mut out, field);
    }
    out.push(']');
    out
}

/// Renders a KG in the delimited format that [`parse_kg_response`] reads.
pub fn render_kg(kg: &KnowledgeGraph) -> String {
    let mut out = String::from("<python>\n[");
    for (i, t) in kg.triples().iter().enumerate() {
        if i > 0 {
            out.push_str(",\n ");
        }
        out.push_str(&render_triple(t));
    }
    out.push_str("]\n</python>");
    out
}
