//! Interchangeable completion backends: an OpenAI-style HTTP client, a
//! digest-keyed replay archive, and a synthetic generator for the
//! verbose-compensation model.

pub mod http;
pub mod replay;
pub mod synthetic;

use std::path::Path;
use std::sync::{Arc, Condvar, Mutex};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use http::{HttpBackend, HttpConfig, HttpReply, HttpTransport, TransportError};
pub use replay::{RecordingBackend, ReplayArchive, ReplayBackend, ReplayConfig, ReplayEntry};
pub use synthetic::{
    simulate_grid, summarize_grid, synthesize_length, GridSummary, SimulatedDraw, SyntheticBackend, SyntheticConfig,
    VerboseCompensationParams,
};

pub const DEFAULT_MAX_TOKENS: u32 = 1024;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BackendError {
    #[error("transient backend error: {0}")]
    Transient(String),
    #[error("permanent backend error: {0}")]
    Permanent(String),
    #[error("no replay entry for request digest {digest}")]
    ReplayMiss { digest: String },
    #[error("invalid synthetic parameters: {0}")]
    InvalidParams(String),
    #[error("backend configuration: {0}")]
    Config(String),
}

impl BackendError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, BackendError::Transient(_))
    }

    /// Short machine-readable discriminator.
    pub fn kind(&self) -> &'static str {
        match self {
            BackendError::Transient(_) => "transient",
            BackendError::Permanent(_) => "permanent",
            BackendError::ReplayMiss { .. } => "replay_miss",
            BackendError::InvalidParams(_) => "invalid_params",
            BackendError::Config(_) => "config",
        }
    }
}

/// Per-trial metadata that never goes over the wire and is not part of the
/// replay digest. Only the synthetic backend reads it.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RequestHints {
    pub psi: Option<f64>,
    pub replicate: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub model_name: String,
    pub prompt_text: String,
    #[serde(default)]
    pub system_prompt: Option<String>,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    #[serde(skip)]
    pub hints: RequestHints,
}

fn default_max_tokens() -> u32 {
    DEFAULT_MAX_TOKENS
}

impl CompletionRequest {
    pub fn new(model_name: impl Into<String>, prompt_text: impl Into<String>) -> Self {
        Self {
            model_name: model_name.into(),
            prompt_text: prompt_text.into(),
            system_prompt: None,
            temperature: 0.0,
            max_tokens: DEFAULT_MAX_TOKENS,
            hints: RequestHints::default(),
        }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if self.max_tokens < 1 {
            return Err(BackendError::Config("max_tokens must be >= 1".into()));
        }
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(BackendError::Config("temperature must be >= 0".into()));
        }
        Ok(())
    }

    /// Hex SHA-256 over the fields that determine a response. Any change to
    /// model, prompt, system prompt, temperature or ceiling changes it.
    pub fn digest(&self) -> String {
        #[derive(Serialize)]
        struct Key<'a> {
            model_name: &'a str,
            prompt_text: &'a str,
            system_prompt: Option<&'a str>,
            temperature: f64,
            max_tokens: u32,
        }
        let key = Key {
            model_name: &self.model_name,
            prompt_text: &self.prompt_text,
            system_prompt: self.system_prompt.as_deref().filter(|s| !s.is_empty()),
            temperature: self.temperature,
            max_tokens: self.max_tokens,
        };
        let bytes = serde_json::to_vec(&key).expect("digest key serialises");
        hex::encode(Sha256::digest(&bytes))
    }
}

/// Where an output token count came from.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenSource {
    /// Provider `usage.completion_tokens`.
    #[default]
    Reported,
    /// Whitespace word count of the output text.
    WordCount,
    /// Drawn by the synthetic backend.
    Simulated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionResponse {
    pub output_text: String,
    pub output_tokens: u32,
    pub hit_ceiling: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latency_ms: Option<f64>,
    #[serde(default)]
    pub token_source: TokenSource,
}

impl CompletionResponse {
    /// Enforces `hit_ceiling ⇒ output_tokens = max_tokens`.
    pub(crate) fn normalised(mut self, max_tokens: u32) -> Self {
        if self.output_tokens >= max_tokens {
            self.hit_ceiling = true;
        }
        if self.hit_ceiling {
            self.output_tokens = max_tokens;
        }
        self
    }
}

/// Whitespace word count, the same rule as prompt tokenisation.
pub fn count_output_tokens(text: &str) -> u32 {
    text.split_whitespace().count() as u32
}

pub trait Backend: Send + Sync {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, BackendError>;

    /// Upper bound on concurrent `complete` calls.
    fn max_parallel(&self) -> usize {
        1
    }
}

impl<B: Backend + ?Sized> Backend for Arc<B> {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
        (**self).complete(request)
    }

    fn max_parallel(&self) -> usize {
        (**self).max_parallel()
    }
}

/// Backend selection, tagged by `kind`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BackendConfig {
    Http(HttpConfig),
    Replay(ReplayConfig),
    Synthetic(SyntheticConfig),
}

/// Builds a backend, using the default network transport for `http`.
pub fn build_backend(config: &BackendConfig, base_dir: &Path) -> Result<Arc<dyn Backend>, BackendError> {
    build_backend_with_transport(config, base_dir, http::default_transport)
}

/// Builds a backend; `transport` is only invoked for `http` configs.
pub fn build_backend_with_transport<F>(
    config: &BackendConfig,
    base_dir: &Path,
    transport: F,
) -> Result<Arc<dyn Backend>, BackendError>
where
    F: FnOnce() -> Result<Arc<dyn HttpTransport>, BackendError>,
{
    Ok(match config {
        BackendConfig::Http(cfg) => Arc::new(HttpBackend::new(cfg.clone(), transport()?)?),
        BackendConfig::Replay(cfg) => Arc::new(ReplayBackend::open(cfg, base_dir)?),
        BackendConfig::Synthetic(cfg) => Arc::new(SyntheticBackend::new(cfg.clone())?),
    })
}

/// One-shot completion against a freshly built backend.
pub fn complete(config: &BackendConfig, request: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
    build_backend(config, Path::new("."))?.complete(request)
}

/// Counting semaphore bounding in-flight requests.
#[derive(Debug)]
pub struct ConcurrencyLimiter {
    max: usize,
    in_flight: Mutex<usize>,
    released: Condvar,
}

pub struct LimiterPermit<'a> {
    limiter: &'a ConcurrencyLimiter,
}

impl ConcurrencyLimiter {
    pub fn new(max: usize) -> Self {
        Self {
            max: max.max(1),
            in_flight: Mutex::new(0),
            released: Condvar::new(),
        }
    }

    pub fn max(&self) -> usize {
        self.max
    }

    pub fn acquire(&self) -> LimiterPermit<'_> {
        let mut n = self.in_flight.lock().unwrap_or_else(|e| e.into_inner());
        while *n >= self.max {
            n = self.released.wait(n).unwrap_or_else(|e| e.into_inner());
        }
        *n += 1;
        LimiterPermit { limiter: self }
    }

    pub fn in_flight(&self) -> usize {
        *self.in_flight.lock().unwrap_or_else(|e| e.into_inner())
    }
}

impl Drop for LimiterPermit<'_> {
    fn drop(&mut self) {
        let mut n = self.limiter.in_flight.lock().unwrap_or_else(|e| e.into_inner());
        *n -= 1;
        self.limiter.released.notify_one();
    }
}

fn default_max_parallel() -> usize {
    4
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prompt_structure::tokenize;
    use proptest::prelude::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    #[test]
    fn word_counts() {
        assert_eq!(count_output_tokens("a b c"), 3);
        assert_eq!(count_output_tokens(""), 0);
        assert_eq!(count_output_tokens("  \n "), 0);
    }

    proptest! {
        #[test]
        fn count_agrees_with_tokenize(s in "[a-z \\t\\n]{0,80}") {
            let expected = tokenize(&s).map(|p| p.len()).unwrap_or(0);
            prop_assert_eq!(count_output_tokens(&s) as usize, expected);
        }
    }

    #[test]
    fn digest_covers_every_keyed_field() {
        let base = CompletionRequest::new("m", "hello world");
        let d = base.digest();
        assert_eq!(d.len(), 64);
        assert_eq!(d, base.clone().digest());
        let mut hinted = base.clone();
        hinted.hints.psi = Some(0.5);
        hinted.hints.replicate = 2;
        assert_eq!(hinted.digest(), d);
        let variants = [
            CompletionRequest {
                model_name: "n".into(),
                ..base.clone()
            },
            CompletionRequest {
                prompt_text: "hello".into(),
                ..base.clone()
            },
            CompletionRequest {
                system_prompt: Some("be brief".into()),
                ..base.clone()
            },
            CompletionRequest {
                temperature: 0.7,
                ..base.clone()
            },
            CompletionRequest {
                max_tokens: 4096,
                ..base.clone()
            },
        ];
        for v in variants {
            assert_ne!(v.digest(), d);
        }
        // Empty and absent system prompts are the same request.
        let empty = CompletionRequest {
            system_prompt: Some(String::new()),
            ..base
        };
        assert_eq!(empty.digest(), d);
    }

    #[test]
    fn config_is_tagged_by_kind() {
        let cfg: BackendConfig = toml::from_str(
            "kind = \"synthetic\"\nseed = 3\n[params]\nt0 = 18.1\nalpha = 0.0\ntau = 0.35\ntmax = 1024\nbeta = 0.74\n",
        )
        .unwrap();
        assert!(matches!(cfg, BackendConfig::Synthetic(ref s) if s.seed == 3));
        let cfg: BackendConfig = toml::from_str(
            "kind = \"http\"\nendpoint = \"http://localhost:1/v1/chat/completions\"\nauth_env = \"KEY\"\n",
        )
        .unwrap();
        assert!(matches!(cfg, BackendConfig::Http(_)));
        // Fields from another kind are rejected.
        assert!(toml::from_str::<BackendConfig>("kind = \"replay\"\narchive = \"a.jsonl\"\nseed = 1\n").is_err());
        assert!(toml::from_str::<BackendConfig>("kind = \"carrier-pigeon\"\n").is_err());
    }

    #[test]
    fn limiter_bounds_concurrency() {
        let limiter = Arc::new(ConcurrencyLimiter::new(3));
        let peak = Arc::new(AtomicUsize::new(0));
        std::thread::scope(|s| {
            for _ in 0..12 {
                let limiter = &limiter;
                let peak = &peak;
                s.spawn(move || {
                    let _permit = limiter.acquire();
                    peak.fetch_max(limiter.in_flight(), Ordering::SeqCst);
                    std::thread::sleep(std::time::Duration::from_millis(5));
                });
            }
        });
        assert!(peak.load(Ordering::SeqCst) <= 3);
        assert_eq!(limiter.in_flight(), 0);
    }
}
