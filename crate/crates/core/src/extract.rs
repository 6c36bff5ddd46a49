//! Stage 1: knowledge graph construction from an LLM output.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{BackendError, LanguageModel};
use crate::model::KnowledgeGraph;
use crate::parse::{parse_kg_response, ParseError};
use crate::prompt::{build_kg_prompt, PromptError, PromptTemplate};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractConfig {
    /// Total LLM calls allowed per output, including the first.
    pub max_attempts: u32,
    pub strict: bool,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            strict: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExtractError {
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("KG extraction failed after {attempts} attempts: {last}")]
    ExtractionFailed { attempts: u32, last: ParseError },
    #[error("max_attempts must be at least 1")]
    InvalidConfig,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Extraction {
    pub kg: KnowledgeGraph,
    pub warnings: Vec<String>,
    pub attempts: u32,
}

/// Builds the KG of `output_text` with one LLM call, resampling on parse
/// failures up to `cfg.max_attempts` calls in total.
///
/// Warnings carry delimiter notices, every failed parse
/// (`kg_parse_failure: attempt N: ...`), the retry count
/// (`kg_parse_retries: N`) and each dropped fragment
/// (`dropped_triple: reason: fragment`). Backend errors are not retried here.
pub fn extract_kg<L: LanguageModel + ?Sized>(
    output_text: &str,
    llm: &L,
    template: &PromptTemplate,
    cfg: &ExtractConfig,
) -> Result<Extraction, ExtractError> {
    if cfg.max_attempts == 0 {
        return Err(ExtractError::InvalidConfig);
    }
    let (request, mut warnings) = build_kg_prompt(template, output_text)?;

    let mut last = None;
    for attempt in 0..cfg.max_attempts {
        let raw = llm.complete(&request.clone().with_sample(attempt))?;
        match parse_kg_response(&raw, cfg.strict) {
            Ok(outcome) => {
                if attempt > 0 {
                    warnings.push(format!("kg_parse_retries: {attempt}"));
                }
                warnings.extend(
                    outcome
                        .dropped
                        .iter()
                        .map(|d| format!("dropped_triple: {}: {}", d.reason, d.fragment)),
                );
                return Ok(Extraction {
                    kg: outcome.kg,
                    warnings,
                    attempts: attempt + 1,
                });
            }
            Err(err) => {
                warnings.push(format!("kg_parse_failure: attempt {}: {err}", attempt + 1));
                last = Some(err);
            }
        }
    }
    Err(ExtractError::ExtractionFailed {
        attempts: cfg.max_attempts,
        last: last.expect("at least one attempt was made"),
    })
}
