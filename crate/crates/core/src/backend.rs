//! Contracts for the two external model services.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BackendError {
    #[error("request timed out")]
    Timeout,
    #[error("transport failure: {0}")]
    TransportFailure(String),
    #[error("backend answered with status {0}")]
    BadStatus(u16),
    #[error("replay cache has no entry for request {0}")]
    ReplayMiss(String),
    #[error("NLI score {0} is outside [0, 1]")]
    OutOfRangeScore(f64),
    #[error("invalid backend response: {0}")]
    InvalidResponse(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("cache failure: {0}")]
    Cache(String),
}

impl BackendError {
    /// Transport-level failures and 5xx answers may succeed on retry.
    pub fn is_retryable(&self) -> bool {
        match self {
            BackendError::Timeout | BackendError::TransportFailure(_) => true,
            BackendError::BadStatus(code) => (500..600).contains(code),
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    Human,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn new(role: Role, content: impl Into<String>) -> Self {
        Self {
            role,
            content: content.into(),
        }
    }
}

/// A chat-style completion request.
///
/// `sample` distinguishes deliberate resamples of an otherwise identical
/// request. It is not sent to the model; it only keeps cached responses for
/// different attempts apart.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LlmRequest {
    messages: Vec<Message>,
    #[serde(default, skip_serializing_if = "is_zero")]
    sample: u32,
}

fn is_zero(v: &u32) -> bool {
    *v == 0
}

impl LlmRequest {
    pub fn new(messages: Vec<Message>) -> Result<Self, BackendError> {
        if messages.is_empty() {
            return Err(BackendError::InvalidRequest("request has no messages".into()));
        }
        Ok(Self {
            messages,
            sample: 0,
        })
    }

    pub fn messages(&self) -> &[Message] {
        &self.messages
    }

    pub fn sample(&self) -> u32 {
        self.sample
    }

    pub fn with_sample(mut self, sample: u32) -> Self {
        self.sample = sample;
        self
    }

    /// True if any message contains `needle`.
    pub fn mentions(&self, needle: &str) -> bool {
        self.messages.iter().any(|m| m.content.contains(needle))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NliRequest {
    pub premise: String,
    pub hypothesis: String,
}

impl NliRequest {
    pub fn new(premise: impl Into<String>, hypothesis: impl Into<String>) -> Result<Self, BackendError> {
        let (premise, hypothesis) = (premise.into(), hypothesis.into());
        if premise.trim().is_empty() || hypothesis.trim().is_empty() {
            return Err(BackendError::InvalidRequest(
                "NLI premise and hypothesis must be non-empty".into(),
            ));
        }
        Ok(Self {
            premise,
            hypothesis,
        })
    }
}

/// Which event an NLI score measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Consistency,
    Hallucination,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NliResponse {
    pub score: f64,
    pub polarity: Polarity,
}

impl NliResponse {
    /// Probability that the hypothesis is not supported by the premise.
    pub fn hallucination_probability(&self) -> Result<f64, BackendError> {
        if !(0.0..=1.0).contains(&self.score) {
            return Err(BackendError::OutOfRangeScore(self.score));
        }
        Ok(match self.polarity {
            Polarity::Hallucination => self.score,
            Polarity::Consistency => 1.0 - self.score,
        })
    }
}

pub trait LanguageModel {
    fn complete(&self, request: &LlmRequest) -> Result<String, BackendError>;
}

pub trait NliBackend {
    fn score(&self, request: &NliRequest) -> Result<NliResponse, BackendError>;
}

impl<T: LanguageModel + ?Sized> LanguageModel for alloc::boxed::Box<T> {
    fn complete(&self, request: &LlmRequest) -> Result<String, BackendError> {
        (**self).complete(request)
    }
}

impl<T: LanguageModel + ?Sized> LanguageModel for alloc::sync::Arc<T> {
    fn complete(&self, request: &LlmRequest) -> Result<String, BackendError> {
        (**self).complete(request)
    }
}

impl<T: NliBackend + ?Sized> NliBackend for alloc::boxed::Box<T> {
    fn score(&self, request: &NliRequest) -> Result<NliResponse, BackendError> {
        (**self).score(request)
    }
}

impl<T: NliBackend + ?Sized> NliBackend for alloc::sync::Arc<T> {
    fn score(&self, request: &NliRequest) -> Result<NliResponse, BackendError> {
        (**self).score(request)
    }
}

/// Adapts a closure into a [`LanguageModel`].
pub struct FnLlm<F>(pub F);

impl<F> LanguageModel for FnLlm<F>
where
    F: Fn(&LlmRequest) -> Result<String, BackendError>,
{
    fn complete(&self, request: &LlmRequest) -> Result<String, BackendError> {
        (self.0)(request)
    }
}

/// Adapts a closure into an [`NliBackend`].
pub struct FnNli<F>(pub F);

impl<F> NliBackend for FnNli<F>
where
    F: Fn(&NliRequest) -> Result<NliResponse, BackendError>,
{
    fn score(&self, request: &NliRequest) -> Result<NliResponse, BackendError> {
        (self.0)(request)
    }
}

/// Scores `request` and normalizes the answer to a hallucination
/// probability. Out-of-range scores are errors, never clamped.
pub fn nli_score<N: NliBackend + ?Sized>(backend: &N, request: &NliRequest) -> Result<f64, BackendError> {
    backend.score(request)?.hallucination_probability()
}
