//! Prompt templates and their rendering.
//!
//! A template file is a sequence of messages. Each message starts with a
//! marker line (`<<<system>>>` or `<<<human>>>`) and runs until the line
//! before the next marker; the final newline of the file is not part of the
//! last message. A file without a leading marker is one human message.
//!
//! Placeholders are `{name}`. Rendering is a single pass: substituted text is
//! never rescanned and unknown `{...}` sequences are left as they are.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use thiserror::Error;

use crate::backend::{LlmRequest, Message, Role};
use crate::model::Triple;
use crate::parse::render_triple;

const KG_CONSTRUCTION: &str = include_str!("../prompts/kg_construction.prompt");
const CORRECT_TRIPLE: &str = include_str!("../prompts/correct_triple.prompt");
const SPLICE_TRIPLE: &str = include_str!("../prompts/splice_triple.prompt");
const DIRECT_CORRECT: &str = include_str!("../prompts/direct_correct.prompt");

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PromptError {
    #[error("input text is empty")]
    EmptyInput,
    #[error("unknown role marker on template line {line}")]
    UnknownRole { line: usize },
    #[error("template has no messages")]
    NoMessages,
    #[error("template is missing placeholder {{{0}}}")]
    MissingPlaceholder(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    messages: Vec<Message>,
}

fn role_marker(line: &str) -> Option<Option<Role>> {
    let name = line.strip_prefix("<<<")?.strip_suffix(">>>")?;
    Some(match name {
        "system" => Some(Role::System),
        "human" => Some(Role::Human),
        _ => None,
    })
}

impl PromptTemplate {
    pub fn parse(text: &str) -> Result<Self, PromptError> {
        let body = text.strip_suffix('\n').unwrap_or(text);
        let mut lines = body.split('\n').enumerate().peekable();
        let starts_with_marker = lines.peek().is_some_and(|(_, l)| role_marker(l).is_some());
        if !starts_with_marker {
            if body.is_empty() {
                return Err(PromptError::NoMessages);
            }
            return Ok(Self {
                messages: alloc::vec![Message::new(Role::Human, body)],
            });
        }

        let mut messages = Vec::new();
        let mut current: Option<(Role, Vec<&str>)> = None;
        for (idx, line) in lines {
            match role_marker(line) {
                Some(Some(role)) => {
                    if let Some((r, content)) = current.take() {
                        messages.push(Message::new(r, content.join("\n")));
                    }
                    current = Some((role, Vec::new()));
                }
                Some(None) => return Err(PromptError::UnknownRole { line: idx + 1 }),
                None => {
                    if let Some((_, content)) = current.as_mut() {
                        content.push(line);
                    }
                }
            }
        }
        if let Some((r, content)) = current {
            messages.push(Message::new(r, content.join("\n")));
        }
        Ok(Self { messages })
    }

    /// Inverse of [`PromptTemplate::parse`] for marker-form files.
    pub fn to_file_format(&self) -> String {
        let mut out = String::new();
        for m in &self.messages {
            out.push_str(match m.role {
                Role::System => "<<<system>>>\n",
                Role::Human => "<<<human>>>\n",
            });
            out.push_str(&m.content);
            out.push('\n');
        }
        out
    }

    pub fn messages(&self) -> &[Message] {
        &self.messages
    }

    pub fn has_placeholder(&self, name: &str) -> bool {
        let needle = ["{", name, "}"].concat();
        self.messages.iter().any(|m| m.content.contains(&needle))
    }

    pub fn require_placeholders(self, names: &[&str]) -> Result<Self, PromptError> {
        for name in names {
            if !self.has_placeholder(name) {
                return Err(PromptError::MissingPlaceholder(name.to_string()));
            }
        }
        Ok(self)
    }

    pub fn render(&self, vars: &[(&str, &str)]) -> LlmRequest {
        let messages = self
            .messages
            .iter()
            .map(|m| Message::new(m.role, substitute(&m.content, vars)))
            .collect();
        LlmRequest::new(messages).expect("templates always hold at least one message")
    }
}

fn substitute(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let value = after.find('}').and_then(|close| {
            let name = &after[..close];
            vars.iter()
                .find(|(k, _)| *k == name)
                .map(|(_, v)| (*v, close))
        });
        match value {
            Some((v, close)) => {
                out.push_str(v);
                rest = &after[close + 1..];
            }
            None => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}

/// The four templates used by the pipeline.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prompts {
    /// KG construction; placeholder `{input}`.
    pub kg_construction: PromptTemplate,
    /// GraphCorrect step 1; placeholders `{triple}` and `{context}`.
    pub correct_triple: PromptTemplate,
    /// GraphCorrect step 2; placeholders `{summary}`, `{old_triple}`, `{new_triple}`.
    pub splice_triple: PromptTemplate,
    /// Direct Prompt baseline; placeholders `{summary}` and `{context}`.
    pub direct_correct: PromptTemplate,
}

impl Prompts {
    pub fn kg_construction_from(text: &str) -> Result<PromptTemplate, PromptError> {
        PromptTemplate::parse(text)?.require_placeholders(&["input"])
    }

    pub fn correct_triple_from(text: &str) -> Result<PromptTemplate, PromptError> {
        PromptTemplate::parse(text)?.require_placeholders(&["triple", "context"])
    }

    pub fn splice_triple_from(text: &str) -> Result<PromptTemplate, PromptError> {
        PromptTemplate::parse(text)?.require_placeholders(&["summary", "old_triple", "new_triple"])
    }

    pub fn direct_correct_from(text: &str) -> Result<PromptTemplate, PromptError> {
        PromptTemplate::parse(text)?.require_placeholders(&["summary", "context"])
    }

    /// Raw text of the embedded templates, in file format.
    pub fn embedded_sources() -> [(&'static str, &'static str); 4] {
        [
            ("kg_construction", KG_CONSTRUCTION),
            ("correct_triple", CORRECT_TRIPLE),
            ("splice_triple", SPLICE_TRIPLE),
            ("direct_correct", DIRECT_CORRECT),
        ]
    }
}

impl Default for Prompts {
    fn default() -> Self {
        let embedded = |r: Result<PromptTemplate, PromptError>| r.expect("embedded template is valid");
        Self {
            kg_construction: embedded(Self::kg_construction_from(KG_CONSTRUCTION)),
            correct_triple: embedded(Self::correct_triple_from(CORRECT_TRIPLE)),
            splice_triple: embedded(Self::splice_triple_from(SPLICE_TRIPLE)),
            direct_correct: embedded(Self::direct_correct_from(DIRECT_CORRECT)),
        }
    }
}

const DELIMITERS: [&str; 4] = ["<input>", "</input>", "<python>", "</python>"];

/// Renders the KG construction prompt around `output_text`.
///
/// The text is inserted as-is. Delimiter-like substrings are reported as
/// warnings of the form `input_contains_delimiter: </input>`.
pub fn build_kg_prompt(
    template: &PromptTemplate,
    output_text: &str,
) -> Result<(LlmRequest, Vec<String>), PromptError> {
    if output_text.trim().is_empty() {
        return Err(PromptError::EmptyInput);
    }
    let warnings = DELIMITERS
        .iter()
        .filter(|d| output_text.contains(*d))
        .map(|d| ["input_contains_delimiter: ", d].concat())
        .collect();
    Ok((template.render(&[("input", output_text)]), warnings))
}

pub fn build_correct_triple_prompt(template: &PromptTemplate, triple: &Triple, context: &str) -> LlmRequest {
    template.render(&[("triple", &render_triple(triple)), ("context", context)])
}

pub fn build_splice_prompt(template: &PromptTemplate, summary: &str, old: &Triple, new: &Triple) -> LlmRequest {
    template.render(&[
        ("summary", summary),
        ("old_triple", &render_triple(old)),
        ("new_triple", &render_triple(new)),
    ])
}

pub fn build_direct_prompt(template: &PromptTemplate, summary: &str, context: &str) -> LlmRequest {
    template.render(&[("summary", summary), ("context", context)])
}
