//! Core of GraphEval: knowledge-graph based hallucination detection and
//! GraphCorrect triple-targeted correction.
//!
//! The crate is `no_std` (it needs `alloc`) and performs no IO. Model
//! services are reached through the [`LanguageModel`] and [`NliBackend`]
//! traits; HTTP clients, caching and file formats live in the `grapheval`
//! companion crate.
//!
//! Pipeline overview:
//!
//! 1. [`extract::extract_kg`] prompts an LLM with the KG construction prompt
//!    and parses the `<python>` triple list with [`parse::parse_kg_response`].
//! 2. [`detect::detect_grapheval`] verbalizes every triple and scores it
//!    against the grounding context; any probability strictly above the
//!    threshold flags the output as inconsistent.
//! 3. [`correct::graph_correct`] corrects each flagged triple against the
//!    context and splices the correction back into the output.
//!
//! [`metrics`] carries balanced accuracy, ROUGE and the weighted
//! improvement statistic used to compare detectors across benchmarks.

#![no_std]

extern crate alloc;

pub mod backend;
pub mod correct;
pub mod detect;
pub mod extract;
pub mod metrics;
pub mod model;
pub mod parse;
pub mod prompt;

pub use backend::{
    nli_score, BackendError, FnLlm, FnNli, LanguageModel, LlmRequest, Message, NliBackend,
    NliRequest, NliResponse, Polarity, Role,
};
pub use correct::{CorrectError, CorrectionConfig, CorrectionOrder};
pub use detect::{DetectError, DetectionConfig, EmptyKgPolicy};
pub use extract::{ExtractConfig, ExtractError, Extraction};
pub use model::{
    make_kg, make_triple, CorrectionReport, Corrector, DetectionReport, Example, KnowledgeGraph,
    Label, Method, ModelError, ScoredTriple, StepOutcome, Threshold, TraceEntry, Triple,
};
pub use prompt::{PromptError, PromptTemplate, Prompts};
