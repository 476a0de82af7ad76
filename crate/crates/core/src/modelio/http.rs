//! Chat-completions style HTTP backend and fixture record/replay.
//!
//! Wire format (all POST, JSON, `Authorization: Bearer <key>` when a key is set):
//!
//! | kind       | path                | body                                                                 | payload read from                         |
//! |------------|---------------------|----------------------------------------------------------------------|-------------------------------------------|
//! | `complete` | `/chat/completions` | `{model, messages:[{role:"user",content}], temperature, max_tokens, seed}` | `choices[0].message.content`        |
//! | `logprobs` | `/completions`      | `{model, prompt, max_tokens:0, echo:true, logprobs:0, temperature:0}` | `choices[0].logprobs.token_logprobs` (nulls skipped) or `choices[0].logprobs.content[].logprob` |
//! | `embed`    | `/embeddings`       | `{model, input, granularity:"token"}`                                 | `data[].{token, embedding}`               |

use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{Backend, BackendError, BackendRequest, BackendResponse, RequestKind, TokenVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Endpoint {
    ChatCompletions,
    Completions,
    Embeddings,
}

impl Endpoint {
    pub fn path(self) -> &'static str {
        match self {
            Endpoint::ChatCompletions => "/chat/completions",
            Endpoint::Completions => "/completions",
            Endpoint::Embeddings => "/embeddings",
        }
    }
}

/// The endpoint and JSON body sent for `req`.
pub fn request_body(req: &BackendRequest) -> (Endpoint, Value) {
    match req.kind {
        RequestKind::Complete => (
            Endpoint::ChatCompletions,
            json!({
                "model": req.model,
                "messages": [{"role": "user", "content": req.text}],
                "temperature": req.decoding.temperature,
                "max_tokens": req.decoding.max_tokens,
                "seed": req.sample,
            }),
        ),
        RequestKind::Logprobs => (
            Endpoint::Completions,
            json!({
                "model": req.model,
                "prompt": req.text,
                "max_tokens": 0,
                "echo": true,
                "logprobs": 0,
                "temperature": 0.0,
            }),
        ),
        RequestKind::Embed => (
            Endpoint::Embeddings,
            json!({"model": req.model, "input": req.text, "granularity": "token"}),
        ),
    }
}

fn malformed(what: &str) -> BackendError {
    BackendError::MalformedResponse(what.to_string())
}

pub fn parse_chat_response(body: &Value) -> Result<String, BackendError> {
    body.pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| malformed("missing choices[0].message.content"))
}

pub fn parse_logprob_response(body: &Value) -> Result<Vec<f64>, BackendError> {
    if let Some(arr) = body.pointer("/choices/0/logprobs/token_logprobs").and_then(Value::as_array) {
        return arr
            .iter()
            .filter(|v| !v.is_null())
            .map(|v| v.as_f64().ok_or_else(|| malformed("non-numeric token logprob")))
            .collect();
    }
    if let Some(arr) = body.pointer("/choices/0/logprobs/content").and_then(Value::as_array) {
        return arr
            .iter()
            .map(|v| {
                v.get("logprob")
                    .and_then(Value::as_f64)
                    .ok_or_else(|| malformed("content entry without logprob"))
            })
            .collect();
    }
    Err(malformed("missing choices[0].logprobs"))
}

pub fn parse_embedding_response(body: &Value) -> Result<Vec<TokenVector>, BackendError> {
    let data = body.get("data").and_then(Value::as_array).ok_or_else(|| malformed("missing data"))?;
    data.iter()
        .enumerate()
        .map(|(i, item)| {
            let vector = item
                .get("embedding")
                .and_then(Value::as_array)
                .ok_or_else(|| malformed("data entry without embedding"))?
                .iter()
                .map(|x| x.as_f64().ok_or_else(|| malformed("non-numeric embedding value")))
                .collect::<Result<Vec<f64>, _>>()?;
            let token = item.get("token").and_then(Value::as_str).map_or_else(|| i.to_string(), str::to_string);
            Ok(TokenVector { token, vector })
        })
        .collect()
}

fn decode(kind: RequestKind, status: u16, body: &Value) -> Result<BackendResponse, BackendError> {
    if !(200..300).contains(&status) {
        let message = body
            .pointer("/error/message")
            .and_then(Value::as_str)
            .unwrap_or("request failed")
            .to_string();
        return Err(BackendError::Transport { status: Some(status), message });
    }
    Ok(match kind {
        RequestKind::Complete => BackendResponse::Text(parse_chat_response(body)?),
        RequestKind::Logprobs => BackendResponse::TokenLogprobs(parse_logprob_response(body)?),
        RequestKind::Embed => BackendResponse::TokenVectors(parse_embedding_response(body)?),
    })
}

/// One recorded request/response pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exchange {
    pub request: BackendRequest,
    pub status: u16,
    pub body: Value,
}

pub struct HttpBackend {
    base_url: String,
    api_key: Option<String>,
    agent: ureq::Agent,
}

impl std::fmt::Debug for HttpBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpBackend")
            .field("base_url", &self.base_url)
            .field("api_key", &self.api_key.as_ref().map(|_| "<redacted>"))
            .finish()
    }
}

impl HttpBackend {
    pub fn new(base_url: &str, api_key: Option<String>, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        HttpBackend { base_url: base_url.trim_end_matches('/').to_string(), api_key, agent }
    }

    /// Perform the call and return the raw status and JSON body.
    pub fn exchange(&self, req: &BackendRequest) -> Result<Exchange, BackendError> {
        let (endpoint, body) = request_body(req);
        let url = format!("{}{}", self.base_url, endpoint.path());
        let mut call = self.agent.post(&url).header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            call = call.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = call.send(body.to_string()).map_err(map_ureq_error)?;
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().map_err(map_ureq_error)?;
        let body: Value = if text.trim().is_empty() {
            Value::Null
        } else {
            match serde_json::from_str(&text) {
                Ok(v) => v,
                Err(_) if !(200..300).contains(&status) => Value::Null,
                Err(e) => return Err(malformed(&format!("body is not JSON: {e}"))),
            }
        };
        Ok(Exchange { request: req.clone(), status, body })
    }
}

fn map_ureq_error(e: ureq::Error) -> BackendError {
    match e {
        ureq::Error::Timeout(_) => BackendError::Timeout,
        ureq::Error::Io(io) if io.kind() == std::io::ErrorKind::TimedOut => BackendError::Timeout,
        ureq::Error::StatusCode(s) => BackendError::Transport { status: Some(s), message: "HTTP error".into() },
        other => BackendError::Transport { status: None, message: other.to_string() },
    }
}

impl Backend for HttpBackend {
    fn name(&self) -> &str {
        "http"
    }

    fn call(&self, req: &BackendRequest) -> Result<BackendResponse, BackendError> {
        let ex = self.exchange(req)?;
        decode(req.kind, ex.status, &ex.body)
    }
}

/// Wraps an [`HttpBackend`] and keeps every exchange for later replay.
#[derive(Debug)]
pub struct RecordingBackend {
    inner: HttpBackend,
    log: Mutex<Vec<Exchange>>,
}

impl RecordingBackend {
    pub fn new(inner: HttpBackend) -> Self {
        RecordingBackend { inner, log: Mutex::new(Vec::new()) }
    }

    pub fn exchanges(&self) -> Vec<Exchange> {
        self.log.lock().unwrap().clone()
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        let mut f = fs::File::create(path)?;
        for ex in self.exchanges() {
            writeln!(f, "{}", serde_json::to_string(&ex).expect("exchange serializes"))?;
        }
        Ok(())
    }
}

impl Backend for RecordingBackend {
    fn name(&self) -> &str {
        "recording"
    }

    fn call(&self, req: &BackendRequest) -> Result<BackendResponse, BackendError> {
        let ex = self.inner.exchange(req)?;
        let decoded = decode(req.kind, ex.status, &ex.body);
        self.log.lock().unwrap().push(ex);
        decoded
    }
}

/// Serves recorded exchanges; requests are matched by value.
#[derive(Debug, Clone)]
pub struct ReplayBackend {
    exchanges: Vec<Exchange>,
}

impl ReplayBackend {
    pub fn new(exchanges: Vec<Exchange>) -> Self {
        ReplayBackend { exchanges }
    }

    pub fn from_jsonl(path: &Path) -> std::io::Result<Self> {
        let text = fs::read_to_string(path)?;
        let exchanges = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| serde_json::from_str(l).map_err(std::io::Error::other))
            .collect::<Result<_, _>>()?;
        Ok(ReplayBackend { exchanges })
    }
}

impl Backend for ReplayBackend {
    fn name(&self) -> &str {
        "replay"
    }

    fn call(&self, req: &BackendRequest) -> Result<BackendResponse, BackendError> {
        let ex = self
            .exchanges
            .iter()
            .find(|ex| &ex.request == req)
            .ok_or_else(|| BackendError::Transport {
                status: Some(404),
                message: "no recorded exchange for request".into(),
            })?;
        decode(req.kind, ex.status, &ex.body)
    }
}
