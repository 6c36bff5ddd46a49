//! Test support shared by the core property tests and the acceptance suite:
//! an independent list-literal oracle and a generator of noisy but
//! well-formed KG blocks.

#![allow(dead_code)]

use grapheval_core::{make_kg, make_triple, KnowledgeGraph, Triple};
use rand::seq::SliceRandom;
use rand::Rng;

/// Converts a Python list literal of strings into JSON and parses it with
/// serde_json. Handles both quote styles, the common escapes and trailing
/// commas; nothing else.
pub fn oracle_parse(literal: &str) -> Option<Vec<Vec<String>>> {
    let mut json = String::new();
    let mut chars = literal.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            '\'' | '"' => {
                let mut s = String::new();
                loop {
                    match chars.next()? {
                        '\\' => match chars.next()? {
                            'n' => s.push('\n'),
                            't' => s.push('\t'),
                            'r' => s.push('\r'),
                            other => s.push(other),
                        },
                        q if q == c => break,
                        other => s.push(other),
                    }
                }
                json.push_str(&serde_json::to_string(&s).unwrap());
            }
            ']' => {
                let kept = json.trim_end().len();
                json.truncate(kept);
                if json.ends_with(',') {
                    json.pop();
                }
                json.push(']');
            }
            other => json.push(other),
        }
    }
    serde_json::from_str(&json).ok()
}

/// Content of the first `<python>` block.
pub fn block_content(raw: &str) -> &str {
    let start = raw.find("<python>").unwrap() + "<python>".len();
    let end = start + raw[start..].find("</python>").unwrap();
    &raw[start..end]
}

const ALPHABET: &[&str] = &[
    "a", "b", "Z", "7", " ", ",", "'", "\"", "\\", "[", "]", "é", "東", "-", ".", "\n", "\t",
];

pub fn random_field<R: Rng>(rng: &mut R) -> String {
    loop {
        let len = rng.gen_range(1..12);
        let s: String = (0..len).map(|_| *ALPHABET.choose(rng).unwrap()).collect();
        if !s.trim().is_empty() {
            return s.trim().to_string();
        }
    }
}

pub fn random_triple<R: Rng>(rng: &mut R) -> Triple {
    make_triple(&random_field(rng), &random_field(rng), &random_field(rng)).unwrap()
}

pub fn random_kg<R: Rng>(rng: &mut R, max_len: usize) -> KnowledgeGraph {
    let n = rng.gen_range(0..=max_len);
    make_kg((0..n).map(|_| random_triple(rng)))
}

const WHITESPACE: &[&str] = &["", " ", "\n", "  \n\t", "\r\n    ", "\t"];
const PREAMBLE: &[&str] = &[
    "",
    "Here is the knowledge graph:\n",
    "Sure! I extracted the following triples [as requested].\n\n",
    "```\n",
];
const POSTAMBLE: &[&str] = &["", "\nLet me know if you need anything else.", "\n```", " Done [1]."];

fn ws<R: Rng>(rng: &mut R) -> &'static str {
    WHITESPACE.choose(rng).unwrap()
}

fn quoted<R: Rng>(rng: &mut R, s: &str) -> String {
    let q = if rng.gen_bool(0.5) { '\'' } else { '"' };
    let mut out = String::from(q);
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            '\r' => out.push_str("\\r"),
            c if c == q => {
                out.push('\\');
                out.push(c);
            }
            c => out.push(c),
        }
    }
    out.push(q);
    out
}

/// Renders `kg` with random quote styles, whitespace, trailing commas and
/// surrounding prose.
pub fn mutated_block<R: Rng>(rng: &mut R, kg: &KnowledgeGraph) -> String {
    let mut out = String::from(*PREAMBLE.choose(rng).unwrap());
    out.push_str("<python>");
    out.push_str(ws(rng));
    out.push('[');
    for (i, t) in kg.triples().iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        out.push_str(ws(rng));
        out.push('[');
        for (j, field) in t.fields().iter().enumerate() {
            if j > 0 {
                out.push(',');
            }
            out.push_str(ws(rng));
            out.push_str(&quoted(rng, field));
            out.push_str(ws(rng));
        }
        if rng.gen_bool(0.3) {
            out.push(',');
        }
        out.push_str(ws(rng));
        out.push(']');
    }
    if !kg.is_empty() && rng.gen_bool(0.3) {
        out.push(',');
    }
    out.push_str(ws(rng));
    out.push(']');
    out.push_str(ws(rng));
    out.push_str("</python>");
    out.push_str(POSTAMBLE.choose(rng).unwrap());
    out
}
