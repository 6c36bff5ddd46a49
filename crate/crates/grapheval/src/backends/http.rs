use std::thread;
use std::time::Duration;

use grapheval_core::{BackendError, LanguageModel, LlmRequest, NliBackend, NliRequest, NliResponse, Polarity};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

/// Blocking JSON POST. Implemented over HTTP by [`ReqwestTransport`]; tests
/// substitute instrumented stubs.
pub trait Transport: Send + Sync {
    fn post_json(
        &self,
        url: &str,
        headers: &[(String, String)],
        body: &Value,
        timeout: Duration,
    ) -> Result<Value, BackendError>;
}

pub struct ReqwestTransport {
    client: reqwest::blocking::Client,
}

impl ReqwestTransport {
    pub fn new() -> Result<Self, BackendError> {
        let client = reqwest::blocking::Client::builder()
            .build()
            .map_err(|e| BackendError::TransportFailure(e.to_string()))?;
        Ok(Self { client })
    }
}

impl Transport for ReqwestTransport {
    fn post_json(
        &self,
        url: &str,
        headers: &[(String, String)],
        body: &Value,
        timeout: Duration,
    ) -> Result<Value, BackendError> {
        let mut request = self.client.post(url).timeout(timeout).json(body);
        for (name, value) in headers {
            request = request.header(name, value);
        }
        let classify = |e: reqwest::Error| {
            if e.is_timeout() {
                BackendError::Timeout
            } else {
                BackendError::TransportFailure(e.to_string())
            }
        };
        let response = request.send().map_err(classify)?;
        let status = response.status();
        if !status.is_success() {
            return Err(BackendError::BadStatus(status.as_u16()));
        }
        response
            .json::<Value>()
            .map_err(|e| BackendError::InvalidResponse(e.to_string()))
    }
}

/// Runs `call`, retrying retryable failures up to `max_retries` times with
/// exponential backoff starting at `base_delay`.
pub(crate) fn with_retries<T>(
    max_retries: u32,
    base_delay: Duration,
    mut call: impl FnMut() -> Result<T, BackendError>,
) -> Result<T, BackendError> {
    let mut retries = 0;
    loop {
        match call() {
            Err(e) if e.is_retryable() && retries < max_retries => {
                thread::sleep(base_delay.saturating_mul(1 << retries.min(16)));
                retries += 1;
            }
            result => return result,
        }
    }
}

fn auth_headers(api_key_env: Option<&str>) -> Vec<(String, String)> {
    api_key_env
        .and_then(|name| std::env::var(name).ok())
        .map(|key| vec![("Authorization".to_string(), format!("Bearer {key}"))])
        .unwrap_or_default()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmConfig {
    pub endpoint: String,
    pub model_id: String,
    pub temperature: f64,
    pub top_p: f64,
    pub top_k: u32,
    pub timeout_ms: u64,
    pub max_retries: u32,
    pub retry_base_ms: u64,
    /// Name of the environment variable holding the API key, if any.
    pub api_key_env: Option<String>,
}

impl Default for LlmConfig {
    fn default() -> Self {
        Self {
            endpoint: String::new(),
            model_id: "anthropic.claude-v2".into(),
            temperature: 1.0,
            top_p: 1.0,
            top_k: 250,
            timeout_ms: 60_000,
            max_retries: 3,
            retry_base_ms: 500,
            api_key_env: Some("GRAPHEVAL_LLM_API_KEY".into()),
        }
    }
}

impl LlmConfig {
    /// Checks the sampling parameters.
    pub fn validate_sampling(&self) -> Result<(), String> {
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err(format!("temperature must be >= 0, got {}", self.temperature));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(format!("top_p must be in (0, 1], got {}", self.top_p));
        }
        if self.top_k < 1 {
            return Err("top_k must be at least 1".into());
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), String> {
        self.validate_sampling()?;
        reqwest::Url::parse(&self.endpoint).map_err(|e| format!("bad LLM endpoint {:?}: {e}", self.endpoint))?;
        Ok(())
    }

    /// Sampling parameters, as folded into cache keys.
    pub fn sampling_params(&self) -> Value {
        json!({ "temperature": self.temperature, "top_p": self.top_p, "top_k": self.top_k })
    }
}

/// LLM client for the `{model_id, messages, temperature, top_p, top_k}`
/// endpoint; the answer carries the text under `completion`.
pub struct HttpLlm<T> {
    cfg: LlmConfig,
    transport: T,
}

impl<T: Transport> HttpLlm<T> {
    pub fn new(cfg: LlmConfig, transport: T) -> Result<Self, String> {
        cfg.validate()?;
        Ok(Self { cfg, transport })
    }

    fn body(&self, request: &LlmRequest) -> Value {
        json!({
            "model_id": self.cfg.model_id,
            "messages": request.messages(),
            "temperature": self.cfg.temperature,
            "top_p": self.cfg.top_p,
            "top_k": self.cfg.top_k,
        })
    }
}

impl<T: Transport> LanguageModel for HttpLlm<T> {
    fn complete(&self, request: &LlmRequest) -> Result<String, BackendError> {
        let body = self.body(request);
        let headers = auth_headers(self.cfg.api_key_env.as_deref());
        let timeout = Duration::from_millis(self.cfg.timeout_ms);
        let response = with_retries(self.cfg.max_retries, Duration::from_millis(self.cfg.retry_base_ms), || {
            self.transport.post_json(&self.cfg.endpoint, &headers, &body, timeout)
        })?;
        match response.get("completion") {
            Some(Value::String(text)) => Ok(text.clone()),
            _ => Err(BackendError::InvalidResponse(
                "response has no string `completion` field".into(),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NliConfig {
    pub endpoint: String,
    pub model_id: String,
    /// Polarity assumed when a response omits it.
    pub default_polarity: Polarity,
    pub timeout_ms: u64,
    pub max_retries: u32,
    pub retry_base_ms: u64,
    pub api_key_env: Option<String>,
}

impl Default for NliConfig {
    fn default() -> Self {
        Self {
            endpoint: String::new(),
            model_id: "vectara/hallucination_evaluation_model".into(),
            default_polarity: Polarity::Consistency,
            timeout_ms: 60_000,
            max_retries: 3,
            retry_base_ms: 500,
            api_key_env: Some("GRAPHEVAL_NLI_API_KEY".into()),
        }
    }
}

impl NliConfig {
    pub fn validate(&self) -> Result<(), String> {
        reqwest::Url::parse(&self.endpoint).map_err(|e| format!("bad NLI endpoint {:?}: {e}", self.endpoint))?;
        Ok(())
    }
}

/// NLI client for the `{premise, hypothesis}` -> `{score, polarity}`
/// endpoint. Scores are returned as sent; range checks happen in
/// [`grapheval_core::nli_score`].
pub struct HttpNli<T> {
    cfg: NliConfig,
    transport: T,
}

impl<T: Transport> HttpNli<T> {
    pub fn new(cfg: NliConfig, transport: T) -> Result<Self, String> {
        cfg.validate()?;
        Ok(Self { cfg, transport })
    }
}

impl<T: Transport> NliBackend for HttpNli<T> {
    fn score(&self, request: &NliRequest) -> Result<NliResponse, BackendError> {
        let body = json!({ "premise": request.premise, "hypothesis": request.hypothesis });
        let headers = auth_headers(self.cfg.api_key_env.as_deref());
        let timeout = Duration::from_millis(self.cfg.timeout_ms);
        let response = with_retries(self.cfg.max_retries, Duration::from_millis(self.cfg.retry_base_ms), || {
            self.transport.post_json(&self.cfg.endpoint, &headers, &body, timeout)
        })?;
        let score = response
            .get("score")
            .and_then(Value::as_f64)
            .ok_or_else(|| BackendError::InvalidResponse("response has no numeric `score`".into()))?;
        let polarity = match response.get("polarity") {
            None | Some(Value::Null) => self.cfg.default_polarity,
            Some(p) => serde_json::from_value(p.clone())
                .map_err(|e| BackendError::InvalidResponse(format!("bad polarity: {e}")))?,
        };
        Ok(NliResponse { score, polarity })
    }
}
