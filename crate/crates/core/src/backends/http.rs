//! OpenAI-style chat-completion client with bounded retries.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{
    count_output_tokens, default_max_parallel, Backend, BackendError, CompletionRequest, CompletionResponse,
    ConcurrencyLimiter, TokenSource,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HttpConfig {
    /// Full chat-completions URL.
    pub endpoint: String,
    /// Name of the environment variable holding the bearer token.
    #[serde(default)]
    pub auth_env: Option<String>,
    /// Extra provider-specific headers.
    #[serde(default)]
    pub headers: BTreeMap<String, String>,
    #[serde(default = "default_max_parallel")]
    pub max_parallel: usize,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: f64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default = "default_backoff_ms")]
    pub backoff_base_ms: u64,
    #[serde(default = "default_backoff_cap_ms")]
    pub backoff_cap_ms: u64,
}

fn default_timeout_secs() -> f64 {
    120.0
}
fn default_max_retries() -> u32 {
    3
}
fn default_backoff_ms() -> u64 {
    500
}
fn default_backoff_cap_ms() -> u64 {
    8_000
}

impl HttpConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            auth_env: None,
            headers: BTreeMap::new(),
            max_parallel: default_max_parallel(),
            timeout_secs: default_timeout_secs(),
            max_retries: default_max_retries(),
            backoff_base_ms: default_backoff_ms(),
            backoff_cap_ms: default_backoff_cap_ms(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HttpReply {
    pub status: u16,
    pub body: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TransportError {
    Timeout(String),
    Connect(String),
    Other(String),
}

/// Minimal POST-JSON transport, injectable for tests.
pub trait HttpTransport: Send + Sync {
    fn post_json(
        &self,
        url: &str,
        headers: &[(String, String)],
        body: &Value,
        timeout: Duration,
    ) -> Result<HttpReply, TransportError>;
}

#[cfg(feature = "http")]
pub struct ReqwestTransport {
    client: reqwest::blocking::Client,
}

#[cfg(feature = "http")]
impl ReqwestTransport {
    pub fn new() -> Result<Self, BackendError> {
        let client = reqwest::blocking::Client::builder()
            .build()
            .map_err(|e| BackendError::Config(format!("http client: {e}")))?;
        Ok(Self { client })
    }
}

#[cfg(feature = "http")]
impl HttpTransport for ReqwestTransport {
    fn post_json(
        &self,
        url: &str,
        headers: &[(String, String)],
        body: &Value,
        timeout: Duration,
    ) -> Result<HttpReply, TransportError> {
        let mut req = self.client.post(url).json(body).timeout(timeout);
        for (k, v) in headers {
            req = req.header(k, v);
        }
        let resp = req.send().map_err(|e| {
            if e.is_timeout() {
                TransportError::Timeout(e.to_string())
            } else if e.is_connect() {
                TransportError::Connect(e.to_string())
            } else {
                TransportError::Other(e.to_string())
            }
        })?;
        let status = resp.status().as_u16();
        let body = resp.text().map_err(|e| TransportError::Other(e.to_string()))?;
        Ok(HttpReply { status, body })
    }
}

pub fn default_transport() -> Result<Arc<dyn HttpTransport>, BackendError> {
    #[cfg(feature = "http")]
    {
        Ok(Arc::new(ReqwestTransport::new()?))
    }
    #[cfg(not(feature = "http"))]
    {
        Err(BackendError::Config("built without the `http` feature".into()))
    }
}

pub struct HttpBackend {
    config: HttpConfig,
    transport: Arc<dyn HttpTransport>,
    token: Option<String>,
    limiter: ConcurrencyLimiter,
}

impl HttpBackend {
    /// Reads the auth token from `config.auth_env` when set.
    pub fn new(config: HttpConfig, transport: Arc<dyn HttpTransport>) -> Result<Self, BackendError> {
        let token = match &config.auth_env {
            Some(var) => Some(
                std::env::var(var)
                    .map_err(|_| BackendError::Config(format!("auth token environment variable `{var}` is not set")))?,
            ),
            None => None,
        };
        Ok(Self::with_token(config, transport, token))
    }

    pub fn with_token(config: HttpConfig, transport: Arc<dyn HttpTransport>, token: Option<String>) -> Self {
        let limiter = ConcurrencyLimiter::new(config.max_parallel);
        Self {
            config,
            transport,
            token,
            limiter,
        }
    }

    fn headers(&self) -> Vec<(String, String)> {
        let mut headers: Vec<(String, String)> = self
            .config
            .headers
            .iter()
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        if let Some(token) = &self.token {
            headers.push(("Authorization".into(), format!("Bearer {token}")));
        }
        headers
    }

    fn backoff(&self, attempt: u32) -> Duration {
        let ms = self
            .config
            .backoff_base_ms
            .saturating_mul(1u64 << attempt.min(20))
            .min(self.config.backoff_cap_ms);
        Duration::from_millis(ms)
    }

    fn attempt(&self, body: &Value, max_tokens: u32) -> Result<CompletionResponse, BackendError> {
        let timeout = Duration::from_secs_f64(self.config.timeout_secs.max(0.001));
        let started = Instant::now();
        let reply = self
            .transport
            .post_json(&self.config.endpoint, &self.headers(), body, timeout)
            .map_err(|e| match e {
                TransportError::Timeout(m) => BackendError::Transient(format!("timeout: {m}")),
                TransportError::Connect(m) => BackendError::Transient(format!("connect: {m}")),
                TransportError::Other(m) => BackendError::Transient(m),
            })?;
        let latency = started.elapsed().as_secs_f64() * 1000.0;
        match reply.status {
            200..=299 => parse_chat_response(&reply.body, max_tokens).map(|mut r| {
                r.latency_ms = Some(latency);
                r
            }),
            408 | 429 | 500..=599 => Err(BackendError::Transient(format!(
                "HTTP {}: {}",
                reply.status,
                truncate(&reply.body)
            ))),
            status => Err(BackendError::Permanent(format!(
                "HTTP {status}: {}",
                truncate(&reply.body)
            ))),
        }
    }
}

fn truncate(s: &str) -> &str {
    match s.char_indices().nth(200) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}

/// Wire body for a chat-completion request.
pub fn request_body(request: &CompletionRequest) -> Value {
    let mut messages = Vec::new();
    if let Some(system) = request.system_prompt.as_deref().filter(|s| !s.is_empty()) {
        messages.push(json!({"role": "system", "content": system}));
    }
    messages.push(json!({"role": "user", "content": request.prompt_text}));
    json!({
        "model": request.model_name,
        "messages": messages,
        "temperature": request.temperature,
        "max_tokens": request.max_tokens,
    })
}

/// Parses `choices[0].message.content`, `choices[0].finish_reason` and
/// `usage.completion_tokens`; falls back to a word count when usage is
/// missing.
pub fn parse_chat_response(body: &str, max_tokens: u32) -> Result<CompletionResponse, BackendError> {
    let v: Value =
        serde_json::from_str(body).map_err(|e| BackendError::Permanent(format!("malformed response JSON: {e}")))?;
    let choice = v
        .get("choices")
        .and_then(|c| c.get(0))
        .ok_or_else(|| BackendError::Permanent("response has no choices".into()))?;
    let text = choice
        .pointer("/message/content")
        .and_then(Value::as_str)
        .unwrap_or_default()
        .to_owned();
    let finished_at_length = choice.get("finish_reason").and_then(Value::as_str) == Some("length");
    let reported = v
        .pointer("/usage/completion_tokens")
        .and_then(Value::as_u64)
        .map(|n| n.min(u32::MAX as u64) as u32);
    let (tokens, source) = match reported {
        Some(n) => (n, TokenSource::Reported),
        None => (count_output_tokens(&text), TokenSource::WordCount),
    };
    Ok(CompletionResponse {
        output_text: text,
        output_tokens: tokens,
        hit_ceiling: finished_at_length,
        latency_ms: None,
        token_source: source,
    }
    .normalised(max_tokens))
}

impl Backend for HttpBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
        request.validate()?;
        let _permit = self.limiter.acquire();
        let body = request_body(request);
        let mut attempt = 0;
        loop {
            match self.attempt(&body, request.max_tokens) {
                Err(e) if e.is_retryable() && attempt < self.config.max_retries => {
                    std::thread::sleep(self.backoff(attempt));
                    attempt += 1;
                }
                other => return other,
            }
        }
    }

    fn max_parallel(&self) -> usize {
        self.limiter.max()
    }
}
