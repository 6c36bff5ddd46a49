//! GraphCorrect and the Direct Prompt baseline.
//!
//! GraphCorrect handles each flagged triple in two LLM calls: the triple is
//! corrected against the context, then the correction is spliced into the
//! output. The context and the output never share a request.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{BackendError, LanguageModel};
use crate::model::{
    CorrectionReport, Corrector, DetectionReport, Example, Label, Method, ScoredTriple, StepOutcome, TraceEntry,
    Triple,
};
use crate::parse::parse_triple_response;
use crate::prompt::{
    build_correct_triple_prompt, build_direct_prompt, build_splice_prompt, PromptTemplate, Prompts,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorrectionOrder {
    DescendingProbability,
    KgOrder,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorrectionConfig {
    pub order: CorrectionOrder,
    pub skip_unchanged: bool,
    /// Step-1 calls allowed per triple when the answer holds no triple.
    pub max_attempts: u32,
}

impl Default for CorrectionConfig {
    fn default() -> Self {
        Self {
            order: CorrectionOrder::DescendingProbability,
            skip_unchanged: true,
            max_attempts: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CorrectError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("no triple could be parsed from the correction response after {attempts} attempts")]
    UncorrectableResponse { attempts: u32 },
    #[error("the LLM returned an empty response")]
    EmptyResponse,
    #[error("GraphCorrect needs a GraphEval report with verdict 1 and flagged triples")]
    NothingFlagged,
    #[error("all {0} flagged triples failed to correct")]
    AllCorrectionsFailed(usize),
    #[error("max_attempts must be at least 1")]
    InvalidConfig,
}

/// Step 1: asks the LLM to correct `triple` given `context`.
pub fn correct_triple<L: LanguageModel + ?Sized>(
    triple: &Triple,
    context: &str,
    llm: &L,
    template: &PromptTemplate,
    max_attempts: u32,
) -> Result<Triple, CorrectError> {
    if max_attempts == 0 {
        return Err(CorrectError::InvalidConfig);
    }
    let request = build_correct_triple_prompt(template, triple, context);
    for attempt in 0..max_attempts {
        let raw = llm.complete(&request.clone().with_sample(attempt))?;
        if let Some(t) = parse_triple_response(&raw) {
            return Ok(t);
        }
    }
    Err(CorrectError::UncorrectableResponse {
        attempts: max_attempts,
    })
}

/// Step 2: asks the LLM to replace the information of `old` with `new` in
/// `output_text`. The trimmed answer becomes the new output.
pub fn splice_triple<L: LanguageModel + ?Sized>(
    output_text: &str,
    old: &Triple,
    new: &Triple,
    llm: &L,
    template: &PromptTemplate,
) -> Result<String, CorrectError> {
    let raw = llm.complete(&build_splice_prompt(template, output_text, old, new))?;
    non_empty(raw)
}

fn non_empty(raw: String) -> Result<String, CorrectError> {
    let trimmed = raw.trim();
    if trimmed.is_empty() {
        Err(CorrectError::EmptyResponse)
    } else {
        Ok(trimmed.to_string())
    }
}

fn ordered(flagged: &[ScoredTriple], order: CorrectionOrder) -> Vec<&ScoredTriple> {
    let mut items: Vec<&ScoredTriple> = flagged.iter().collect();
    if order == CorrectionOrder::DescendingProbability {
        // Stable, so ties keep KG order.
        items.sort_by(|a, b| b.prob_hallucination().total_cmp(&a.prob_hallucination()));
    }
    items
}

/// Corrects every flagged triple of `report` in turn, splicing each
/// correction into the evolving output.
///
/// A failing triple is recorded in the trace and skipped; the call only
/// fails if every flagged triple failed.
pub fn graph_correct<L: LanguageModel + ?Sized>(
    ex: &Example,
    report: &DetectionReport,
    llm: &L,
    prompts: &Prompts,
    cfg: &CorrectionConfig,
) -> Result<CorrectionReport, CorrectError> {
    if report.method != Method::GraphEval || report.verdict != Label::Inconsistent || report.flagged.is_empty() {
        return Err(CorrectError::NothingFlagged);
    }
    let mut text = ex.output.clone();
    let mut trace = Vec::with_capacity(report.flagged.len());
    for scored in ordered(&report.flagged, cfg.order) {
        let old = &scored.triple;
        let entry = match correct_triple(old, &ex.context, llm, &prompts.correct_triple, cfg.max_attempts) {
            Err(err) => TraceEntry {
                old: old.clone(),
                new: None,
                outcome: StepOutcome::Failed(format!("correct: {err}")),
            },
            Ok(new) if cfg.skip_unchanged && &new == old => TraceEntry {
                old: old.clone(),
                new: Some(new),
                outcome: StepOutcome::Unchanged,
            },
            Ok(new) => {
                let outcome = match splice_triple(&text, old, &new, llm, &prompts.splice_triple) {
                    Ok(spliced) => {
                        text = spliced;
                        StepOutcome::Spliced
                    }
                    Err(err) => StepOutcome::Failed(format!("splice: {err}")),
                };
                TraceEntry {
                    old: old.clone(),
                    new: Some(new),
                    outcome,
                }
            }
        };
        trace.push(entry);
    }
    if trace.iter().all(|e| matches!(e.outcome, StepOutcome::Failed(_))) {
        return Err(CorrectError::AllCorrectionsFailed(trace.len()));
    }
    Ok(CorrectionReport {
        example_id: ex.id.clone(),
        corrector: Corrector::GraphCorrect,
        original_output: ex.output.clone(),
        corrected_output: text,
        trace,
        believed_corrected: None,
    })
}

/// Baseline: one call with the whole output and the context.
pub fn direct_correct<L: LanguageModel + ?Sized>(
    ex: &Example,
    llm: &L,
    template: &PromptTemplate,
) -> Result<CorrectionReport, CorrectError> {
    let raw = llm.complete(&build_direct_prompt(template, &ex.output, &ex.context))?;
    Ok(CorrectionReport {
        example_id: ex.id.clone(),
        corrector: Corrector::Direct,
        original_output: ex.output.clone(),
        corrected_output: non_empty(raw)?,
        trace: Vec::new(),
        believed_corrected: None,
    })
}
