//! Model backends: chat completion, token logprob scoring and token embeddings.
//!
//! Every backend implements [`Backend`]. [`Client`] wraps one with a retry
//! policy and exposes the three typed operations. Three backends ship:
//! [`MockBackend`] (deterministic, offline), [`HttpBackend`] (a
//! chat-completions style JSON API) and [`ReplayBackend`] (recorded
//! exchanges played back through the same wire parsers).

mod http;
mod mock;
mod pool;
mod retry;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use http::{
    parse_chat_response, parse_embedding_response, parse_logprob_response, request_body, Endpoint,
    Exchange, HttpBackend, RecordingBackend, ReplayBackend,
};
pub use mock::{CompletionMode, EmbedMode, LogprobMode, MockBackend};
pub use pool::map_bounded;
pub use retry::{with_retry, Clock, RetryPolicy, SimulatedClock, SystemClock, MAX_RETRIES_LIMIT};

use crate::text::clean_text;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RequestKind {
    Complete,
    Logprobs,
    Embed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decoding {
    pub temperature: f64,
    pub max_tokens: u32,
}

impl Decoding {
    /// Teacher expansion default.
    pub const EXPANSION: Decoding = Decoding { temperature: 0.7, max_tokens: 256 };
    /// Scoring calls are greedy.
    pub const SCORING: Decoding = Decoding { temperature: 0.0, max_tokens: 1 };
}

/// One backend call. `sample` distinguishes repeated draws of the same
/// prompt and is forwarded to HTTP backends as the sampling seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendRequest {
    pub kind: RequestKind,
    pub text: String,
    pub decoding: Decoding,
    pub model: String,
    #[serde(default)]
    pub sample: u64,
}

impl BackendRequest {
    pub fn validate(&self) -> Result<(), BackendError> {
        if self.text.trim().is_empty() {
            return Err(BackendError::InvalidRequest("prompt text is empty".into()));
        }
        if self.kind == RequestKind::Complete && self.decoding.max_tokens == 0 {
            return Err(BackendError::InvalidRequest("max_tokens must be at least 1".into()));
        }
        if !(self.decoding.temperature >= 0.0) {
            return Err(BackendError::InvalidRequest("temperature must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenVector {
    pub token: String,
    pub vector: Vec<f64>,
}

/// Exactly one payload, matching the request kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendResponse {
    Text(String),
    TokenLogprobs(Vec<f64>),
    TokenVectors(Vec<TokenVector>),
}

impl BackendResponse {
    pub fn kind(&self) -> RequestKind {
        match self {
            BackendResponse::Text(_) => RequestKind::Complete,
            BackendResponse::TokenLogprobs(_) => RequestKind::Logprobs,
            BackendResponse::TokenVectors(_) => RequestKind::Embed,
        }
    }

    pub fn validate(&self, expected: RequestKind) -> Result<(), BackendError> {
        if self.kind() != expected {
            return Err(BackendError::MalformedResponse(format!(
                "expected {expected:?} payload, got {:?}",
                self.kind()
            )));
        }
        match self {
            BackendResponse::TokenLogprobs(lp) if lp.iter().any(|&v| !(v <= 0.0)) => {
                Err(BackendError::MalformedResponse("logprob above zero or NaN".into()))
            }
            BackendResponse::TokenVectors(v) => {
                let width = v.first().map_or(0, |t| t.vector.len());
                if v.iter().any(|t| t.vector.len() != width) {
                    Err(BackendError::MalformedResponse("token vectors differ in width".into()))
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BackendError {
    /// `status` is `None` for connection-level failures.
    #[error("transport error{}: {message}", .status.map(|s| format!(" (HTTP {s})")).unwrap_or_default())]
    Transport { status: Option<u16>, message: String },
    #[error("request timed out")]
    Timeout,
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("backend does not support {0:?} requests")]
    Unsupported(RequestKind),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

pub trait Backend: Send + Sync {
    fn name(&self) -> &str;
    fn call(&self, request: &BackendRequest) -> Result<BackendResponse, BackendError>;
}

/// A backend plus retry policy and model identifier. Cheap to clone and
/// shareable across threads.
#[derive(Clone)]
pub struct Client {
    backend: Arc<dyn Backend>,
    policy: RetryPolicy,
    clock: Arc<dyn Clock>,
    pub model: String,
    pub concurrency: usize,
}

impl std::fmt::Debug for Client {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Client")
            .field("backend", &self.backend.name())
            .field("model", &self.model)
            .field("policy", &self.policy)
            .field("concurrency", &self.concurrency)
            .finish()
    }
}

impl Client {
    pub fn new(backend: Arc<dyn Backend>, model: impl Into<String>) -> Self {
        Client {
            backend,
            policy: RetryPolicy::default(),
            clock: Arc::new(SystemClock),
            model: model.into(),
            concurrency: 4,
        }
    }

    pub fn with_policy(mut self, policy: RetryPolicy) -> Self {
        self.policy = policy;
        self
    }

    pub fn with_clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }

    pub fn with_concurrency(mut self, concurrency: usize) -> Self {
        self.concurrency = concurrency.max(1);
        self
    }

    pub fn with_model(&self, model: impl Into<String>) -> Self {
        Client { model: model.into(), ..self.clone() }
    }

    pub fn backend_name(&self) -> &str {
        self.backend.name()
    }

    pub fn request(&self, kind: RequestKind, text: &str, decoding: Decoding, sample: u64) -> BackendRequest {
        BackendRequest { kind, text: text.to_string(), decoding, model: self.model.clone(), sample }
    }

    pub fn send(&self, request: &BackendRequest) -> Result<BackendResponse, BackendError> {
        request.validate()?;
        let response = with_retry(self.backend.as_ref(), request, &self.policy, self.clock.as_ref())?;
        response.validate(request.kind)?;
        Ok(response)
    }

    /// First message text of a completion, passed through [`clean_text`].
    pub fn complete(&self, prompt: &str, decoding: Decoding, sample: u64) -> Result<String, BackendError> {
        match self.send(&self.request(RequestKind::Complete, prompt, decoding, sample))? {
            BackendResponse::Text(t) => Ok(clean_text(&t)),
            _ => unreachable!("validated"),
        }
    }

    pub fn score_logprobs(&self, text: &str) -> Result<Vec<f64>, BackendError> {
        match self.send(&self.request(RequestKind::Logprobs, text, Decoding::SCORING, 0))? {
            BackendResponse::TokenLogprobs(lp) => Ok(lp),
            _ => unreachable!("validated"),
        }
    }

    pub fn embed_tokens(&self, text: &str) -> Result<Vec<TokenVector>, BackendError> {
        match self.send(&self.request(RequestKind::Embed, text, Decoding::SCORING, 0))? {
            BackendResponse::TokenVectors(v) => Ok(v),
            _ => unreachable!("validated"),
        }
    }
}
