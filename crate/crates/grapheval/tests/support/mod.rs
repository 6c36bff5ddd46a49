//! Helpers shared by the grapheval integration tests and the acceptance suite.

#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use grapheval::backends::mock::sentence_triple;
use grapheval::backends::{ContainmentNli, HeuristicLlm};
use grapheval::harness::{BackendSummary, Backends, RunConfig};
use grapheval_core::parse::{parse_triple_response, render_kg, render_triple};
use grapheval_core::{
    make_kg, BackendError, CorrectionConfig, Corrector, DetectionConfig, Example, ExtractConfig, LanguageModel,
    LlmRequest, Method, NliBackend, NliRequest, NliResponse, Polarity, Prompts,
};

pub fn data_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data").join(name)
}

pub fn toy_dataset() -> PathBuf {
    data_path("toy.jsonl")
}

pub fn toy_cache() -> PathBuf {
    data_path("toy-cache")
}

pub fn summary() -> BackendSummary {
    BackendSummary {
        llm_backend: "test".into(),
        llm_model: "scripted".into(),
        llm_endpoint: None,
        temperature: 1.0,
        top_p: 1.0,
        top_k: 250,
        nli_backend: "test".into(),
        nli_model: "scripted".into(),
        nli_endpoint: None,
    }
}

pub fn run_config(method: Method, corrector: Option<Corrector>) -> RunConfig {
    RunConfig {
        detection: DetectionConfig {
            method,
            ..DetectionConfig::default()
        },
        extraction: ExtractConfig::default(),
        corrector,
        correction: corrector.map(|_| CorrectionConfig::default()),
        backends: summary(),
    }
}

pub fn backends(llm: impl LanguageModel + Send + Sync + 'static, nli: impl NliBackend + Send + Sync + 'static) -> Backends {
    Backends {
        llm: Arc::new(llm),
        nli: Arc::new(nli),
        prompts: Prompts::default(),
    }
}

pub fn mock_backends() -> Backends {
    backends(HeuristicLlm, ContainmentNli)
}

pub fn example(id: &str, context: &str, output: &str, label: Option<u64>) -> Example {
    let label = label.map(|l| grapheval_core::Label::from_u64(l).unwrap());
    Example::new(id, context, output, label).unwrap()
}

/// Text between the first `open` and the last following `close`.
pub fn between<'a>(text: &'a str, open: &str, close: &str) -> Option<&'a str> {
    let start = text.find(open)? + open.len();
    let end = text[start..].rfind(close)? + start;
    Some(&text[start..end])
}

fn joined(request: &LlmRequest) -> String {
    request
        .messages()
        .iter()
        .map(|m| m.content.as_str())
        .collect::<Vec<_>>()
        .join("\n")
}

/// Scorer that flags (probability 0.9) any hypothesis containing the token
/// `WRONG` and passes everything else (0.1).
pub struct WrongScorer;

impl NliBackend for WrongScorer {
    fn score(&self, request: &NliRequest) -> Result<NliResponse, BackendError> {
        let wrong = request.hypothesis.split(|c: char| !c.is_alphanumeric()).any(|w| w == "WRONG");
        Ok(NliResponse {
            score: if wrong { 0.9 } else { 0.1 },
            polarity: Polarity::Hallucination,
        })
    }
}

/// LLM for the `WRONG` fixtures: one triple per sentence, triple
/// corrections replace `WRONG` with `RIGHT`, splices swap the old object
/// for the new one. Counts calls per prompt kind.
#[derive(Default)]
pub struct RewritingLlm {
    pub kg_calls: AtomicUsize,
    pub correct_calls: AtomicUsize,
    pub splice_calls: AtomicUsize,
    pub direct_calls: AtomicUsize,
}

impl RewritingLlm {
    pub fn corrections(&self) -> usize {
        self.correct_calls.load(Ordering::SeqCst) + self.direct_calls.load(Ordering::SeqCst)
    }
}

impl LanguageModel for RewritingLlm {
    fn complete(&self, request: &LlmRequest) -> Result<String, BackendError> {
        let text = joined(request);
        if text.contains("<old_triple>") {
            self.splice_calls.fetch_add(1, Ordering::SeqCst);
            let summary = between(&text[..text.rfind("<old_triple>").unwrap()], "<context>", "</context>").unwrap();
            let old = parse_triple_response(between(&text, "<old_triple>", "</old_triple>").unwrap()).unwrap();
            let new = parse_triple_response(between(&text, "<new_triple>", "</new_triple>").unwrap()).unwrap();
            return Ok(summary.replacen(old.object(), new.object(), 1));
        }
        if text.contains("<triple>") {
            self.correct_calls.fetch_add(1, Ordering::SeqCst);
            let old = parse_triple_response(between(&text, "<triple>", "</triple>").unwrap()).unwrap();
            let object = old.object().replace("WRONG", "RIGHT");
            let new = grapheval_core::Triple::new(old.subject(), old.relation(), &object).unwrap();
            return Ok(render_triple(&new));
        }
        if text.contains("<summary>") {
            self.direct_calls.fetch_add(1, Ordering::SeqCst);
            let summary = between(&text, "<summary>", "</summary>").unwrap();
            return Ok(summary.replace("WRONG", "RIGHT"));
        }
        self.kg_calls.fetch_add(1, Ordering::SeqCst);
        let input = request
            .messages()
            .iter()
            .find_map(|m| between(&m.content, "<input>", "</input>"))
            .ok_or_else(|| BackendError::InvalidRequest("unknown prompt".into()))?;
        let kg = make_kg(grapheval::backends::mock::sentences(input).into_iter().filter_map(sentence_triple));
        Ok(render_kg(&kg))
    }
}

/// Five examples, each with exactly one planted `WRONG` object in a longer
/// output, so a correct splice changes one token in about twenty.
pub fn wrong_examples() -> Vec<Example> {
    let rows = [
        (
            "w1",
            "Alice Moreau lives in Lyon with her family. Alice Moreau works at the Acme Corporation as an engineer. Alice Moreau plays the violin on weekends.",
            "Alice Moreau lives in WRONG with her family. Alice Moreau works at the Acme Corporation as an engineer. Alice Moreau plays the violin on weekends.",
        ),
        (
            "w2",
            "The Riverside Library opened in 1952 after a long campaign. The Riverside Library holds many rare maps. The Riverside Library closes at six.",
            "The Riverside Library opened in 1952 after a long campaign. The Riverside Library holds many WRONG maps. The Riverside Library closes at six.",
        ),
        (
            "w3",
            "Project Falcon was funded by the Orion Foundation in spring. Project Falcon studies migratory birds across the continent. Project Falcon employs twelve researchers.",
            "Project Falcon was funded by the WRONG Foundation in spring. Project Falcon studies migratory birds across the continent. Project Falcon employs twelve researchers.",
        ),
        (
            "w4",
            "Greenfield Farm grows apples and pears on the hillside. Greenfield Farm sells cider at the Saturday market. Greenfield Farm was founded by Tom Reyes.",
            "Greenfield Farm grows apples and pears on the hillside. Greenfield Farm sells cider at the Saturday market. Greenfield Farm was founded by WRONG Reyes.",
        ),
        (
            "w5",
            "Captain Ortiz commanded the ship during the storm season. Captain Ortiz rescued nine sailors near the coast. Captain Ortiz retired in the spring.",
            "Captain Ortiz commanded the ship during the storm season. Captain Ortiz rescued WRONG sailors near the coast. Captain Ortiz retired in the spring.",
        ),
    ];
    rows.iter().map(|(id, c, o)| example(id, c, o, Some(1))).collect()
}
