//! Stage 2: scoring claims against the grounding context.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{nli_score, BackendError, NliBackend, NliRequest};
use crate::model::{DetectionReport, Example, KnowledgeGraph, ModelError, ScoredTriple, Threshold, Triple};
pub use crate::model::Method;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EmptyKgPolicy {
    /// Verdict 0 with an `empty_kg` warning.
    ConsistentWithWarning,
    Error,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionConfig {
    pub threshold: Threshold,
    pub method: Method,
    pub empty_kg_policy: EmptyKgPolicy,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        Self {
            threshold: Threshold::default(),
            method: Method::GraphEval,
            empty_kg_policy: EmptyKgPolicy::ConsistentWithWarning,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DetectError {
    #[error("scoring failed: {0}")]
    Scorer(#[from] BackendError),
    #[error("the extracted knowledge graph is empty")]
    EmptyKg,
    #[error(transparent)]
    Model(#[from] ModelError),
}

pub const EMPTY_KG_WARNING: &str = "empty_kg";

/// Renders a triple as the NLI hypothesis: the three fields joined by
/// single spaces with one terminal period, unless the object already ends
/// in `.`, `!` or `?`.
pub fn verbalize_triple(t: &Triple) -> String {
    let mut out = String::new();
    for word in t.fields().iter().flat_map(|f| f.split_whitespace()) {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(word);
    }
    if !out.ends_with(['.', '!', '?']) {
        out.push('.');
    }
    out
}

/// GraphEval detection: every triple of `kg` is scored against the
/// example's context and the example is inconsistent iff any triple's
/// hallucination probability is strictly above the threshold.
///
/// A scoring failure aborts the whole example.
pub fn detect_grapheval<S: NliBackend + ?Sized>(
    ex: &Example,
    kg: &KnowledgeGraph,
    scorer: &S,
    cfg: &DetectionConfig,
) -> Result<DetectionReport, DetectError> {
    let mut warnings = Vec::new();
    if kg.is_empty() {
        match cfg.empty_kg_policy {
            EmptyKgPolicy::Error => return Err(DetectError::EmptyKg),
            EmptyKgPolicy::ConsistentWithWarning => warnings.push(String::from(EMPTY_KG_WARNING)),
        }
    }
    let scored = kg
        .triples()
        .iter()
        .map(|t| {
            let request = NliRequest::new(ex.context.as_str(), verbalize_triple(t))?;
            let p = nli_score(scorer, &request)?;
            Ok(ScoredTriple::new(t.clone(), p)?)
        })
        .collect::<Result<Vec<_>, DetectError>>()?;
    Ok(DetectionReport::from_scored(ex.id.as_str(), scored, cfg.threshold, warnings))
}

/// Baseline: the whole output is the hypothesis.
pub fn detect_raw_nli<S: NliBackend + ?Sized>(
    ex: &Example,
    scorer: &S,
    cfg: &DetectionConfig,
) -> Result<DetectionReport, DetectError> {
    let request = NliRequest::new(ex.context.as_str(), ex.output.as_str())?;
    let p = nli_score(scorer, &request)?;
    Ok(DetectionReport::from_output_score(ex.id.as_str(), p, cfg.threshold, vec![])?)
}
