//! Text-generation backends.
//!
//! Every backend answers sampled generation requests and reports token usage. Backends
//! that expose log-probabilities can also score a (prompt, continuation) pair token by
//! token, which feeds the perplexity measurements.

mod http;
mod mock;
mod perplexity;

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::report::{PromptBundle, PromptFormat, RenderMode, Separators};

pub use http::{LocalCompletionBackend, RemoteChatBackend, API_KEY_ENV};
pub use mock::{load_mock, MockBackend, MockEntry};
pub use perplexity::{perplexity, PerplexityError, PerplexityRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationConfig {
    pub num_samples: usize,
    pub temperature: f64,
    pub max_output_tokens: u32,
    #[serde(with = "duration_secs")]
    pub request_timeout: Duration,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            num_samples: 10,
            temperature: 1.0,
            max_output_tokens: 1024,
            request_timeout: Duration::from_secs(120),
        }
    }
}

impl GenerationConfig {
    pub fn validate(&self) -> Result<(), BackendError> {
        if self.num_samples == 0 {
            return Err(BackendError::InvalidConfig("num_samples must be at least 1".into()));
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(BackendError::InvalidConfig(format!("temperature must be >= 0, got {}", self.temperature)));
        }
        if self.max_output_tokens == 0 {
            return Err(BackendError::InvalidConfig("max_output_tokens must be positive".into()));
        }
        Ok(())
    }
}

mod duration_secs {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let secs = f64::deserialize(d)?;
        Duration::try_from_secs_f64(secs).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinishReason {
    Stop,
    Length,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Completion {
    pub text: String,
    pub input_tokens: u64,
    pub output_tokens: u64,
    /// Set when at least one count comes from the byte-length estimate.
    pub usage_estimated: bool,
    pub sample_index: usize,
    pub finish_reason: FinishReason,
}

/// Token-count estimate for backends that omit usage: one token per four bytes, rounded up.
pub fn estimate_tokens(text: &str) -> u64 {
    (text.len() as u64).div_ceil(4)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenScore {
    pub token_text: String,
    /// Natural log.
    pub logprob: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TokenScores {
    pub prompt: Vec<TokenScore>,
    pub continuation: Vec<TokenScore>,
    /// The first prompt token has no conditioning context and was left out of `prompt`.
    pub first_prompt_token_excluded: bool,
}

/// Which prompt a request belongs to; the scripted mock replays by this key.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PromptKey {
    pub bug_id: String,
    pub format: PromptFormat,
}

impl PromptKey {
    pub fn new(bug_id: impl Into<String>, format: PromptFormat) -> Self {
        PromptKey { bug_id: bug_id.into(), format }
    }
}

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("backend unavailable after {attempts} attempts: {last_error}")]
    BackendUnavailable { attempts: u32, last_error: String },
    #[error("authentication failed: {0}")]
    AuthError(String),
    #[error("malformed backend response: {0}")]
    ResponseMalformed(String),
    #[error("backend does not support {0}")]
    CapabilityUnsupported(String),
    #[error("malformed mock script: {0}")]
    ScriptMalformed(String),
    #[error("invalid generation config: {0}")]
    InvalidConfig(String),
}

pub trait Backend: Send + Sync {
    /// Recorded verbatim in reports.
    fn identity(&self) -> String;

    fn preferred_mode(&self) -> RenderMode;

    fn separators(&self) -> Separators {
        Separators::default()
    }

    /// Generates `count` samples with indices `first_index..first_index + count`, in order.
    fn generate(
        &self,
        key: &PromptKey,
        prompt: &PromptBundle,
        config: &GenerationConfig,
        first_index: usize,
        count: usize,
    ) -> Result<Vec<Completion>, BackendError>;

    fn supports_logprobs(&self) -> bool;

    /// Per-token log-probabilities of `prompt_text` followed by `continuation_text`.
    fn score(
        &self,
        key: &PromptKey,
        sample_index: usize,
        prompt_text: &str,
        continuation_text: &str,
    ) -> Result<TokenScores, BackendError>;
}

/// Draws `config.num_samples` completions in sample-index order.
pub fn sample(
    backend: &dyn Backend,
    key: &PromptKey,
    prompt: &PromptBundle,
    config: &GenerationConfig,
) -> Result<Vec<Completion>, BackendError> {
    config.validate()?;
    let mut out = backend.generate(key, prompt, config, 0, config.num_samples)?;
    out.sort_by_key(|c| c.sample_index);
    if out.len() != config.num_samples {
        return Err(BackendError::ResponseMalformed(format!(
            "expected {} completions, got {}",
            config.num_samples,
            out.len()
        )));
    }
    Ok(out)
}

/// Draws samples one at a time until `keep_going` returns false or `num_samples` are issued.
pub fn sample_while(
    backend: &dyn Backend,
    key: &PromptKey,
    prompt: &PromptBundle,
    config: &GenerationConfig,
    mut keep_going: impl FnMut(&Completion) -> bool,
) -> Result<Vec<Completion>, BackendError> {
    config.validate()?;
    let mut out = Vec::new();
    for index in 0..config.num_samples {
        let mut batch = backend.generate(key, prompt, config, index, 1)?;
        let completion = batch
            .pop()
            .ok_or_else(|| BackendError::ResponseMalformed(format!("no completion for sample {index}")))?;
        let go_on = keep_going(&completion);
        out.push(completion);
        if !go_on {
            break;
        }
    }
    Ok(out)
}

pub fn score_tokens(
    backend: &dyn Backend,
    key: &PromptKey,
    sample_index: usize,
    prompt_text: &str,
    continuation_text: &str,
) -> Result<TokenScores, BackendError> {
    if !backend.supports_logprobs() {
        return Err(BackendError::CapabilityUnsupported(format!("log-probability scoring ({})", backend.identity())));
    }
    let scores = backend.score(key, sample_index, prompt_text, continuation_text)?;
    if let Some(bad) = scores.prompt.iter().chain(&scores.continuation).find(|t| !t.logprob.is_finite()) {
        return Err(BackendError::ResponseMalformed(format!("non-finite logprob for token {:?}", bad.token_text)));
    }
    Ok(scores)
}

/// Bounded retry with exponential backoff and proportional jitter.
#[derive(Debug, Clone, PartialEq)]
pub struct RetryPolicy {
    /// Total calls, including the first.
    pub attempts: u32,
    pub initial_backoff: Duration,
    /// Relative jitter, e.g. 0.2 for +/-20%.
    pub jitter: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { attempts: 3, initial_backoff: Duration::from_secs(1), jitter: 0.2 }
    }
}

pub(crate) enum Attempt {
    Retry(String),
    Fatal(BackendError),
}

impl RetryPolicy {
    pub fn backoff(&self, retry: u32) -> Duration {
        let base = self.initial_backoff.as_secs_f64() * 2f64.powi(retry as i32);
        let factor = if self.jitter > 0.0 { 1.0 + rand::random_range(-self.jitter..=self.jitter) } else { 1.0 };
        Duration::from_secs_f64((base * factor).max(0.0))
    }

    pub(crate) fn run<T>(&self, mut call: impl FnMut() -> Result<T, Attempt>) -> Result<T, BackendError> {
        let attempts = self.attempts.max(1);
        let mut last_error = String::new();
        for attempt in 0..attempts {
            if attempt > 0 {
                std::thread::sleep(self.backoff(attempt - 1));
            }
            match call() {
                Ok(v) => return Ok(v),
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::Retry(msg)) => {
                    tracing::warn!(attempt = attempt + 1, error = %msg, "backend call failed");
                    last_error = msg;
                }
            }
        }
        Err(BackendError::BackendUnavailable { attempts, last_error })
    }
}
