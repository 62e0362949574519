//! Backend-agnostic completion client with few-shot prompt assembly,
//! bounded concurrency and retries, plus a fixture-driven mock backend.
//!
//! Credentials are only ever read from the environment variable named in
//! the endpoint config, and never appear in errors, logs or `Debug` output.

mod fewshot;
mod http;
mod limiter;
mod mock;

use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::par::{self, ExecMode};

pub use fewshot::{FewShotPrompt, Shot, assemble_fewshot, cost};
pub use http::{HttpBackend, extract_text};
pub use limiter::{Limiter, Permit};
pub use mock::{Fallback, MockBackend, MockFixture, SubstringRule, prompt_hash};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum InferError {
    #[error("authentication failed: {0}")]
    AuthFailure(String),
    #[error("gave up after {attempts} attempts: {last}")]
    TimeoutAfterRetries { attempts: u32, last: String },
    #[error("prompt costs {cost} units, over the context budget of {budget}")]
    ContextOverflow { cost: usize, budget: usize },
    #[error("query alone costs {cost} units, over the context budget of {budget}")]
    QueryOverBudget { cost: usize, budget: usize },
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("backend returned HTTP {status}")]
    Http { status: u16 },
    #[error("backend unreachable: {0}")]
    Unreachable(String),
    #[error("endpoint config: {0}")]
    Config(String),
}

impl InferError {
    /// Worth retrying: transport failures, 429 and 5xx replies.
    pub fn is_transient(&self) -> bool {
        match self {
            InferError::Transport(_) => true,
            InferError::Http { status } => *status == 429 || *status >= 500,
            _ => false,
        }
    }
}

/// A credential value. Formats as `***`.
#[derive(Clone)]
pub struct Secret(String);

impl Secret {
    pub fn new(value: impl Into<String>) -> Self {
        Secret(value.into())
    }

    pub fn expose(&self) -> &str {
        &self.0
    }
}

impl fmt::Debug for Secret {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Secret(***)")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecodeMode {
    #[default]
    Greedy,
    Sampled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecodeParams {
    pub mode: DecodeMode,
    pub temperature: f64,
    pub max_new_tokens: u32,
    pub stop_sequences: Vec<String>,
}

impl Default for DecodeParams {
    fn default() -> Self {
        DecodeParams { mode: DecodeMode::Greedy, temperature: 0.0, max_new_tokens: 512, stop_sequences: Vec::new() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    #[default]
    Http,
    Mock,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WireFormat {
    #[default]
    Completions,
    Chat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EndpointConfig {
    pub kind: BackendKind,
    pub base_url: String,
    pub model_name: String,
    /// Environment variable holding the API key; none means no auth header.
    pub api_key_env: Option<String>,
    pub wire: WireFormat,
    pub timeout_secs: f64,
    pub max_retries: u32,
    pub backoff_base_ms: u64,
    pub backoff_max_ms: u64,
    pub max_in_flight: usize,
    /// Prompt budget in units of [`cost`].
    pub context_budget: usize,
    /// Mock fixture path, relative to the config file.
    pub mock_fixture: Option<PathBuf>,
    pub decode: DecodeParams,
}

impl Default for EndpointConfig {
    fn default() -> Self {
        EndpointConfig {
            kind: BackendKind::Http,
            base_url: "http://127.0.0.1:8000/v1".into(),
            model_name: "default".into(),
            api_key_env: None,
            wire: WireFormat::Completions,
            timeout_secs: 60.0,
            max_retries: 3,
            backoff_base_ms: 250,
            backoff_max_ms: 8000,
            max_in_flight: 4,
            context_budget: 4096,
            mock_fixture: None,
            decode: DecodeParams::default(),
        }
    }
}

impl EndpointConfig {
    pub fn mock() -> Self {
        EndpointConfig { kind: BackendKind::Mock, ..Default::default() }
    }

    pub fn validate(&self) -> Result<(), InferError> {
        if !(self.timeout_secs > 0.0) {
            return Err(InferError::Config("timeout_secs must be positive".into()));
        }
        if self.decode.mode == DecodeMode::Greedy && self.decode.temperature != 0.0 {
            return Err(InferError::Config("greedy decoding requires temperature 0".into()));
        }
        if self.max_in_flight == 0 || self.context_budget == 0 {
            return Err(InferError::Config("max_in_flight and context_budget must be at least 1".into()));
        }
        if self.backoff_max_ms < self.backoff_base_ms {
            return Err(InferError::Config("backoff_max_ms is below backoff_base_ms".into()));
        }
        Ok(())
    }

    /// Reads a TOML endpoint file; a relative `mock_fixture` resolves
    /// against the file's directory.
    pub fn from_file(path: &Path) -> Result<Self, InferError> {
        let src = std::fs::read_to_string(path).map_err(|e| InferError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg: EndpointConfig =
            toml::from_str(&src).map_err(|e| InferError::Config(format!("{}: {e}", path.display())))?;
        if let Some(dir) = path.parent() {
            cfg.resolve_paths(dir);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Makes a relative `mock_fixture` relative to `base_dir`.
    pub fn resolve_paths(&mut self, base_dir: &Path) {
        if let Some(fixture) = self.mock_fixture.as_mut().filter(|f| f.is_relative()) {
            *fixture = base_dir.join(&*fixture);
        }
    }

    /// Delay before retry number `retry` (0-based): base * 2^retry, capped.
    pub fn backoff(&self, retry: u32) -> Duration {
        let ms = self.backoff_base_ms.saturating_mul(1u64 << retry.min(32)).min(self.backoff_max_ms);
        Duration::from_millis(ms)
    }
}

/// Wire request for the completions contract.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub model: String,
    pub prompt: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub stop: Vec<String>,
}

/// One transport. Implementations must be callable from many threads.
pub trait Backend: Send + Sync {
    fn send(&self, req: &CompletionRequest, idempotency_key: Option<&str>) -> Result<String, InferError>;

    /// Cheap reachability check, run before long jobs.
    fn probe(&self) -> Result<(), InferError> {
        Ok(())
    }
}

pub type Sleeper = Arc<dyn Fn(Duration) + Send + Sync>;

/// Shareable client: credential resolution, budget check, concurrency
/// limit and retry policy around a [`Backend`].
pub struct Client {
    cfg: EndpointConfig,
    backend: Box<dyn Backend>,
    limiter: Limiter,
    sleeper: Sleeper,
    secret: Option<Secret>,
}

impl fmt::Debug for Client {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Client").field("cfg", &self.cfg).field("secret", &self.secret).finish_non_exhaustive()
    }
}

fn resolve_secret(cfg: &EndpointConfig) -> Result<Option<Secret>, InferError> {
    match &cfg.api_key_env {
        None => Ok(None),
        Some(var) => match std::env::var(var) {
            Ok(v) if !v.trim().is_empty() => Ok(Some(Secret::new(v))),
            _ => Err(InferError::AuthFailure(format!("environment variable {var} is not set"))),
        },
    }
}

impl Client {
    /// Builds the backend named by `cfg.kind`. Fails with
    /// [`InferError::AuthFailure`] when the credential variable is unset.
    pub fn from_config(cfg: EndpointConfig) -> Result<Self, InferError> {
        cfg.validate()?;
        let secret = resolve_secret(&cfg)?;
        let backend: Box<dyn Backend> = match cfg.kind {
            BackendKind::Mock => match &cfg.mock_fixture {
                Some(path) => Box::new(MockBackend::from_file(path)?),
                None => Box::new(MockBackend::echo()),
            },
            BackendKind::Http => Box::new(HttpBackend::new(
                &cfg.base_url,
                cfg.wire,
                secret.clone(),
                Duration::from_secs_f64(cfg.timeout_secs),
            )?),
        };
        Ok(Self::assemble(cfg, backend, secret))
    }

    /// Wraps a caller-supplied backend (credential still resolved).
    pub fn with_backend(cfg: EndpointConfig, backend: Box<dyn Backend>) -> Result<Self, InferError> {
        cfg.validate()?;
        let secret = resolve_secret(&cfg)?;
        Ok(Self::assemble(cfg, backend, secret))
    }

    fn assemble(cfg: EndpointConfig, backend: Box<dyn Backend>, secret: Option<Secret>) -> Self {
        Client {
            limiter: Limiter::new(cfg.max_in_flight),
            cfg,
            backend,
            sleeper: Arc::new(std::thread::sleep),
            secret,
        }
    }

    pub fn with_sleeper(mut self, sleeper: Sleeper) -> Self {
        self.sleeper = sleeper;
        self
    }

    pub fn config(&self) -> &EndpointConfig {
        &self.cfg
    }

    pub fn limiter(&self) -> &Limiter {
        &self.limiter
    }

    pub fn probe(&self) -> Result<(), InferError> {
        self.backend.probe().map_err(|e| self.scrub(e))
    }

    fn scrub(&self, e: InferError) -> InferError {
        let Some(secret) = self.secret.as_ref().filter(|s| !s.expose().is_empty()) else {
            return e;
        };
        let clean = |s: String| s.replace(secret.expose(), "***");
        match e {
            InferError::AuthFailure(m) => InferError::AuthFailure(clean(m)),
            InferError::TimeoutAfterRetries { attempts, last } => {
                InferError::TimeoutAfterRetries { attempts, last: clean(last) }
            }
            InferError::MalformedResponse(m) => InferError::MalformedResponse(clean(m)),
            InferError::Transport(m) => InferError::Transport(clean(m)),
            InferError::Unreachable(m) => InferError::Unreachable(clean(m)),
            InferError::Config(m) => InferError::Config(clean(m)),
            other => other,
        }
    }

    pub fn request_for(&self, prompt: &str) -> CompletionRequest {
        CompletionRequest {
            model: self.cfg.model_name.clone(),
            prompt: prompt.to_string(),
            temperature: self.cfg.decode.temperature,
            max_tokens: self.cfg.decode.max_new_tokens,
            stop: self.cfg.decode.stop_sequences.clone(),
        }
    }

    /// Sends `prompt`, retrying transient failures up to `max_retries`
    /// times with non-decreasing exponential backoff.
    pub fn complete(&self, prompt: &FewShotPrompt) -> Result<String, InferError> {
        self.complete_text(&prompt.render())
    }

    pub fn complete_text(&self, text: &str) -> Result<String, InferError> {
        let units = cost(text);
        if units > self.cfg.context_budget {
            return Err(InferError::ContextOverflow { cost: units, budget: self.cfg.context_budget });
        }
        let req = self.request_for(text);
        let key = (self.cfg.decode.mode == DecodeMode::Greedy).then(|| {
            let body = serde_json::to_vec(&req).expect("request serializes");
            hex::encode(Sha256::digest(&body))
        });
        let mut retry = 0u32;
        loop {
            let result = {
                let _permit = self.limiter.acquire();
                self.backend.send(&req, key.as_deref())
            };
            match result {
                Ok(text) => return Ok(text),
                Err(e) if e.is_transient() && retry < self.cfg.max_retries => {
                    let delay = self.cfg.backoff(retry);
                    tracing::warn!(attempt = retry + 1, ?delay, "transient backend error, retrying: {}", self.scrub(e));
                    (self.sleeper)(delay);
                    retry += 1;
                }
                Err(e) if e.is_transient() => {
                    return Err(self.scrub(InferError::TimeoutAfterRetries { attempts: retry + 1, last: e.to_string() }));
                }
                Err(e) => return Err(self.scrub(e)),
            }
        }
    }

    /// Completes every prompt, at most `max_in_flight` at a time. Results
    /// are in input order.
    pub fn complete_many(&self, prompts: &[FewShotPrompt], mode: ExecMode) -> Vec<Result<String, InferError>> {
        par::map_slice(mode, prompts, |p| self.complete(p))
    }
}
