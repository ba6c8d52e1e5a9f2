//! Chat-completion backends.
//!
//! A [`ChatBackend`] performs a single attempt; [`complete`] wraps it with the
//! context-budget check, retries with exponential backoff, and empty-output
//! detection. [`HttpBackend`] talks to any OpenAI-style chat endpoint;
//! [`ScriptedBackend`] replays fixed responses keyed by prompt fingerprint.

mod http;
mod scripted;
mod simulated;

pub use http::{HttpBackend, API_KEY_ENV};
pub use scripted::{fingerprint, FnBackend, RecordingBackend, Script, ScriptEntry, ScriptedBackend};
pub use simulated::{InitialStyle, SimulatedModel};

use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::token_count;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationParams {
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_max_new_tokens")]
    pub max_new_tokens: usize,
    #[serde(default)]
    pub stop_sequences: Vec<String>,
    #[serde(default)]
    pub seed: Option<u64>,
}

fn default_max_new_tokens() -> usize {
    256
}

impl Default for GenerationParams {
    fn default() -> Self {
        Self {
            temperature: 0.0,
            max_new_tokens: default_max_new_tokens(),
            stop_sequences: Vec::new(),
            seed: None,
        }
    }
}

/// Delay before retry `n` (1-based) is `min(base_ms * factor^(n-1), max_ms)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BackoffPolicy {
    pub base_ms: u64,
    pub max_ms: u64,
    pub factor: f64,
}

impl Default for BackoffPolicy {
    fn default() -> Self {
        Self {
            base_ms: 500,
            max_ms: 30_000,
            factor: 2.0,
        }
    }
}

impl BackoffPolicy {
    pub const NONE: BackoffPolicy = BackoffPolicy {
        base_ms: 0,
        max_ms: 0,
        factor: 1.0,
    };

    pub fn delay(&self, retry: u32) -> Duration {
        let exp = self.factor.max(1.0).powi(retry.saturating_sub(1) as i32);
        let ms = (self.base_ms as f64 * exp).min(self.max_ms as f64);
        Duration::from_millis(ms as u64)
    }

    pub fn schedule(&self, retries: u32) -> Vec<Duration> {
        (1..=retries).map(|r| self.delay(r)).collect()
    }
}

/// What to do when a rendered prompt does not fit the context budget.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TruncationPolicy {
    /// Drop trailing demonstrations until the prompt fits.
    #[default]
    DropTrailingDemos,
    /// Fail with [`BackendError::ContextOverflow`].
    Strict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendConfig {
    pub model_id: String,
    #[serde(default)]
    pub endpoint: String,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default = "default_context_budget")]
    pub context_budget_tokens: usize,
    #[serde(default)]
    pub backoff: BackoffPolicy,
    #[serde(default)]
    pub truncation: TruncationPolicy,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
}

fn default_timeout_ms() -> u64 {
    120_000
}
fn default_max_retries() -> u32 {
    3
}
fn default_context_budget() -> usize {
    8192
}
fn default_in_flight() -> usize {
    4
}

impl BackendConfig {
    pub fn new(model_id: impl Into<String>) -> Self {
        Self {
            model_id: model_id.into(),
            endpoint: String::new(),
            timeout_ms: default_timeout_ms(),
            max_retries: default_max_retries(),
            context_budget_tokens: default_context_budget(),
            backoff: BackoffPolicy::default(),
            truncation: TruncationPolicy::default(),
            max_in_flight: default_in_flight(),
        }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if self.timeout_ms == 0 {
            return Err(BackendError::InvalidConfig("timeout_ms must be positive".into()));
        }
        if self.model_id.is_empty() {
            return Err(BackendError::InvalidConfig("model_id is empty".into()));
        }
        if self.max_in_flight == 0 {
            return Err(BackendError::InvalidConfig("max_in_flight must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinishReason {
    Stop,
    Length,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Completion {
    pub text: String,
    pub finish_reason: FinishReason,
    pub latency_ms: u64,
    pub attempt_count: u32,
}

/// What a single backend attempt returns.
#[derive(Debug, Clone, PartialEq)]
pub struct RawCompletion {
    pub text: String,
    pub finish_reason: FinishReason,
    /// Latency reported by the backend itself. When `None`, [`complete`]
    /// measures wall-clock time.
    pub latency_ms: Option<u64>,
}

impl RawCompletion {
    pub fn stop(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            finish_reason: FinishReason::Stop,
            latency_ms: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AttemptError {
    /// Worth retrying: timeouts, 429 and 5xx, scripted failures.
    Transient(String),
    /// Retrying cannot help.
    Fatal(BackendError),
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum BackendError {
    #[error("prompt is empty")]
    EmptyPrompt,
    #[error("prompt needs {prompt_tokens} + {max_new_tokens} tokens, budget is {budget}")]
    ContextOverflow {
        prompt_tokens: usize,
        max_new_tokens: usize,
        budget: usize,
    },
    #[error("invalid backend configuration: {0}")]
    InvalidConfig(String),
    #[error("backend `{model_id}` unavailable after {attempts} attempts: {last_error}")]
    BackendUnavailable {
        model_id: String,
        attempts: u32,
        last_error: String,
    },
    #[error("backend `{model_id}` returned an empty completion")]
    EmptyCompletion { model_id: String },
    #[error("no scripted response for prompt fingerprint {0}")]
    ScriptMiss(String),
    #[error("script is empty")]
    EmptyScript,
    #[error("http status {status}: {body}")]
    Http { status: u16, body: String },
    #[error("malformed backend response: {0}")]
    Protocol(String),
    #[error("io error on {path}: {message}")]
    Io { path: String, message: String },
}

pub trait ChatBackend: Send + Sync {
    fn model_id(&self) -> &str;

    /// One request, no retries.
    fn attempt(&self, prompt: &str, params: &GenerationParams) -> Result<RawCompletion, AttemptError>;
}

impl<B: ChatBackend + ?Sized> ChatBackend for std::sync::Arc<B> {
    fn model_id(&self) -> &str {
        (**self).model_id()
    }

    fn attempt(&self, prompt: &str, params: &GenerationParams) -> Result<RawCompletion, AttemptError> {
        (**self).attempt(prompt, params)
    }
}

/// Whether `prompt` plus the generation allowance fits the budget.
pub fn fits_context(prompt: &str, params: &GenerationParams, config: &BackendConfig) -> bool {
    token_count(prompt) + params.max_new_tokens <= config.context_budget_tokens
}

/// Run `prompt` against `backend` with the retry contract of `config`.
pub fn complete(
    backend: &dyn ChatBackend,
    prompt: &str,
    params: &GenerationParams,
    config: &BackendConfig,
) -> Result<Completion, BackendError> {
    config.validate()?;
    if prompt.trim().is_empty() {
        return Err(BackendError::EmptyPrompt);
    }
    if params.max_new_tokens == 0 || params.max_new_tokens > config.context_budget_tokens {
        return Err(BackendError::InvalidConfig(format!(
            "max_new_tokens {} outside (0, {}]",
            params.max_new_tokens, config.context_budget_tokens
        )));
    }
    let prompt_tokens = token_count(prompt);
    if prompt_tokens + params.max_new_tokens > config.context_budget_tokens {
        return Err(BackendError::ContextOverflow {
            prompt_tokens,
            max_new_tokens: params.max_new_tokens,
            budget: config.context_budget_tokens,
        });
    }

    let max_attempts = config.max_retries + 1;
    let mut last_error = String::new();
    for attempt in 1..=max_attempts {
        let started = Instant::now();
        match backend.attempt(prompt, params) {
            Ok(raw) => {
                if raw.text.trim().is_empty() {
                    return Err(BackendError::EmptyCompletion {
                        model_id: backend.model_id().to_string(),
                    });
                }
                let latency_ms = raw
                    .latency_ms
                    .unwrap_or_else(|| started.elapsed().as_millis() as u64);
                return Ok(Completion {
                    text: raw.text,
                    finish_reason: raw.finish_reason,
                    latency_ms,
                    attempt_count: attempt,
                });
            }
            Err(AttemptError::Fatal(e)) => return Err(e),
            Err(AttemptError::Transient(msg)) => {
                log::warn!(
                    "{}: attempt {attempt}/{max_attempts} failed: {msg}",
                    backend.model_id()
                );
                last_error = msg;
                if attempt < max_attempts {
                    let delay = config.backoff.delay(attempt);
                    if !delay.is_zero() {
                        thread::sleep(delay);
                    }
                }
            }
        }
    }
    Err(BackendError::BackendUnavailable {
        model_id: backend.model_id().to_string(),
        attempts: max_attempts,
        last_error,
    })
}
