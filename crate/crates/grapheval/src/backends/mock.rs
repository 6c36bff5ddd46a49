//! Deterministic offline backends.
//!
//! They are crude on purpose: good enough to drive the pipeline end to end
//! over simple declarative text, with no network and no randomness.
//!
//! [`HeuristicLlm`] recognises which of the four prompts it was sent by the
//! tags the prompts carry and answers in the expected format.
//! [`ContainmentNli`] calls a hypothesis supported when each of its
//! sentences appears, token for token, in the premise.

use grapheval_core::metrics::tokenize;
use grapheval_core::parse::{parse_triple_response, render_kg, render_triple};
use grapheval_core::{
    make_kg, BackendError, LanguageModel, LlmRequest, NliBackend, NliRequest, NliResponse, Polarity, Triple,
};

pub const MOCK_LLM_MODEL: &str = "mock-heuristic";
pub const MOCK_NLI_MODEL: &str = "mock-containment";

/// Splits on `.`, `!` or `?` followed by whitespace or the end of text.
/// The terminator is dropped and pieces are trimmed.
pub fn sentences(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if matches!(c, '.' | '!' | '?') && chars.peek().is_none_or(|(_, next)| next.is_whitespace()) {
            out.push(&text[start..i]);
            start = i + c.len_utf8();
        }
    }
    out.push(&text[start..]);
    out.into_iter().map(str::trim).filter(|s| !s.is_empty()).collect()
}

fn starts_upper_or_digit(word: &str) -> bool {
    word.chars().next().is_some_and(|c| c.is_uppercase() || c.is_ascii_digit())
}

/// Subject: the leading capitalised words (at least one word). Relation:
/// the lowercase words after it. Object: everything else, at least the
/// last word.
pub fn sentence_triple(sentence: &str) -> Option<Triple> {
    let words: Vec<&str> = sentence.split_whitespace().collect();
    let subject_len = words.iter().take_while(|w| starts_upper_or_digit(w)).count().max(1);
    if subject_len + 2 > words.len() {
        return None;
    }
    // The object keeps at least the last word.
    let relation_len = words[subject_len..words.len() - 1]
        .iter()
        .take_while(|w| !starts_upper_or_digit(w))
        .count();
    if relation_len == 0 {
        return None;
    }
    let (subject, rest) = words.split_at(subject_len);
    let (relation, object) = rest.split_at(relation_len);
    Triple::new(&subject.join(" "), &relation.join(" "), &object.join(" ")).ok()
}

/// Text between the first `open` and the last `close` after it.
fn between<'a>(text: &'a str, open: &str, close: &str) -> Option<&'a str> {
    let start = text.find(open)? + open.len();
    let end = text[start..].rfind(close)? + start;
    Some(&text[start..end])
}

fn phrase(t: &Triple) -> String {
    t.fields().join(" ")
}

#[derive(Debug, Clone, Copy, Default)]
pub struct HeuristicLlm;

impl HeuristicLlm {
    fn extract(&self, text: &str) -> String {
        let kg = make_kg(sentences(text).into_iter().filter_map(sentence_triple));
        render_kg(&kg)
    }

    fn correct(&self, triple: &Triple, context: &str) -> Triple {
        let (s, r, o) = (triple.subject(), triple.relation(), triple.object());
        for sentence in sentences(context) {
            if let Some(rest) = sentence.strip_prefix(&format!("{s} {r} ")) {
                if let Ok(t) = Triple::new(s, r, rest) {
                    return t;
                }
            }
            if let Some(prefix) = sentence.strip_suffix(&format!(" {r} {o}")) {
                if let Ok(t) = Triple::new(prefix, r, o) {
                    return t;
                }
            }
        }
        triple.clone()
    }

    fn splice(&self, summary: &str, old: &Triple, new: &Triple) -> String {
        let (s, r, o) = (old.subject(), old.relation(), old.object());
        let candidates = [
            (phrase(old), phrase(new)),
            (format!("{r} {o}"), format!("{} {}", new.relation(), new.object())),
            (format!("{s} {r}"), format!("{} {}", new.subject(), new.relation())),
            (o.to_string(), new.object().to_string()),
        ];
        for (from, to) in candidates {
            if summary.contains(&from) {
                return summary.replacen(&from, &to, 1);
            }
        }
        summary.to_string()
    }

    fn direct(&self, summary: &str, context: &str) -> String {
        let facts: Vec<(&str, Option<Triple>)> =
            sentences(context).into_iter().map(|s| (s, sentence_triple(s))).collect();
        let mut out = summary.to_string();
        for sentence in sentences(summary) {
            if ContainmentNli::supported(context, sentence) {
                continue;
            }
            let Some(claim) = sentence_triple(sentence) else { continue };
            let same_subject = facts
                .iter()
                .filter(|(_, t)| t.as_ref().is_some_and(|t| t.subject() == claim.subject()));
            let replacement = same_subject
                .clone()
                .find(|(_, t)| t.as_ref().is_some_and(|t| t.relation() == claim.relation()))
                .or_else(|| same_subject.clone().find(|(f, _)| !out.contains(f)));
            if let Some((fact, _)) = replacement {
                out = out.replacen(sentence, fact, 1);
            }
        }
        out
    }
}

impl LanguageModel for HeuristicLlm {
    fn complete(&self, request: &LlmRequest) -> Result<String, BackendError> {
        let text: String = request.messages().iter().map(|m| m.content.as_str()).collect::<Vec<_>>().join("\n");
        let invalid = |what: &str| BackendError::InvalidRequest(format!("mock LLM: {what}"));

        if let Some(before_old) = text.rfind("<old_triple>").map(|i| &text[..i]) {
            let summary = between(before_old, "<context>", "</context>").ok_or_else(|| invalid("no <context>"))?;
            let old = between(&text, "<old_triple>", "</old_triple>").and_then(parse_triple_response);
            let new = between(&text, "<new_triple>", "</new_triple>").and_then(parse_triple_response);
            let (Some(old), Some(new)) = (old, new) else {
                return Err(invalid("unreadable splice triples"));
            };
            return Ok(self.splice(summary, &old, &new));
        }
        if text.contains("<triple>") {
            let triple = between(&text, "<triple>", "</triple>")
                .and_then(parse_triple_response)
                .ok_or_else(|| invalid("unreadable <triple>"))?;
            let context = between(&text, "<context>", "</context>").ok_or_else(|| invalid("no <context>"))?;
            return Ok(render_triple(&self.correct(&triple, context)));
        }
        if let Some(summary_end) = text.rfind("</summary>") {
            let summary = between(&text[..summary_end + "</summary>".len()], "<summary>", "</summary>")
                .ok_or_else(|| invalid("no <summary>"))?;
            let context = between(&text[summary_end..], "<context>", "</context>").ok_or_else(|| invalid("no <context>"))?;
            return Ok(self.direct(summary, context));
        }
        // The KG prompt: the input sits in the one message that opens <input>.
        let input = request
            .messages()
            .iter()
            .find_map(|m| between(&m.content, "<input>", "</input>"))
            .ok_or_else(|| invalid("unrecognised prompt"))?;
        Ok(self.extract(input))
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ContainmentNli;

impl ContainmentNli {
    fn contains(haystack: &[String], needle: &[String]) -> bool {
        needle.is_empty() || haystack.windows(needle.len()).any(|w| w == needle)
    }

    /// True if every token of `sentence` occurs contiguously in `premise`.
    pub fn supported(premise: &str, sentence: &str) -> bool {
        Self::contains(&tokenize(premise), &tokenize(sentence))
    }

    /// Fraction of the hypothesis' sentences supported by the premise.
    pub fn support(premise: &str, hypothesis: &str) -> f64 {
        let premise = tokenize(premise);
        let parts = sentences(hypothesis);
        if parts.is_empty() {
            return 1.0;
        }
        let hits = parts.iter().filter(|s| Self::contains(&premise, &tokenize(s))).count();
        hits as f64 / parts.len() as f64
    }
}

impl NliBackend for ContainmentNli {
    fn score(&self, request: &NliRequest) -> Result<NliResponse, BackendError> {
        Ok(NliResponse {
            score: 0.02 + 0.96 * Self::support(&request.premise, &request.hypothesis),
            polarity: Polarity::Consistency,
        })
    }
}
