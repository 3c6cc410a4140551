//! HTTP backends: an OpenAI-style chat endpoint and a local text-completion endpoint.

use std::time::Duration;

use serde::Deserialize;
use serde_json::{json, Value};
use ureq::Agent;

use super::{
    estimate_tokens, Attempt, Backend, BackendError, Completion, FinishReason, GenerationConfig, PromptKey, RetryPolicy,
    TokenScore, TokenScores,
};
use crate::report::{Message, PromptBundle, RenderMode, Role, Separators};

/// Environment variable holding the remote API key.
pub const API_KEY_ENV: &str = "D4C_API_KEY";

fn agent(timeout: Duration) -> Agent {
    Agent::new_with_config(Agent::config_builder().timeout_global(Some(timeout)).http_status_as_error(false).build())
}

fn post_json(agent: &Agent, url: &str, api_key: Option<&str>, body: &Value) -> Result<Value, Attempt> {
    let mut request = agent.post(url).header("Content-Type", "application/json");
    if let Some(key) = api_key {
        request = request.header("Authorization", &format!("Bearer {key}"));
    }
    let mut response = request.send_json(body).map_err(|e| Attempt::Retry(e.to_string()))?;
    let status = response.status().as_u16();
    let text = response.body_mut().read_to_string().map_err(|e| Attempt::Retry(e.to_string()))?;
    match status {
        200..=299 => serde_json::from_str(&text)
            .map_err(|e| Attempt::Fatal(BackendError::ResponseMalformed(format!("invalid JSON body: {e}")))),
        401 | 403 => Err(Attempt::Fatal(BackendError::AuthError(format!("HTTP {status}: {}", truncate(&text))))),
        408 | 429 | 500..=599 => Err(Attempt::Retry(format!("HTTP {status}: {}", truncate(&text)))),
        _ => Err(Attempt::Fatal(BackendError::ResponseMalformed(format!("HTTP {status}: {}", truncate(&text))))),
    }
}

fn truncate(s: &str) -> &str {
    let end = s.char_indices().nth(200).map_or(s.len(), |(i, _)| i);
    &s[..end]
}

#[derive(Debug, Deserialize)]
struct Usage {
    prompt_tokens: Option<u64>,
    completion_tokens: Option<u64>,
}

fn finish_reason(v: Option<&str>) -> FinishReason {
    match v {
        Some("length") => FinishReason::Length,
        Some("stop") | None => FinishReason::Stop,
        Some(_) => FinishReason::Error,
    }
}

/// Per-choice usage. A single choice gets the exact counts; with several choices the shared
/// prompt count is kept per choice and output tokens are estimated from each choice's text.
fn completions(
    choices: Vec<(String, FinishReason)>,
    usage: Option<Usage>,
    prompt_text: &str,
    first_index: usize,
) -> Vec<Completion> {
    let single = choices.len() == 1;
    let (prompt_tokens, completion_tokens) = usage.map_or((None, None), |u| (u.prompt_tokens, u.completion_tokens));
    choices
        .into_iter()
        .enumerate()
        .map(|(i, (text, finish_reason))| {
            let exact_output = if single { completion_tokens } else { None };
            Completion {
                input_tokens: prompt_tokens.unwrap_or_else(|| estimate_tokens(prompt_text)),
                output_tokens: exact_output.unwrap_or_else(|| estimate_tokens(&text)),
                usage_estimated: prompt_tokens.is_none() || exact_output.is_none(),
                sample_index: first_index + i,
                finish_reason,
                text,
            }
        })
        .collect()
}

fn check_count(got: usize, want: usize) -> Result<(), BackendError> {
    if got == want {
        Ok(())
    } else {
        Err(BackendError::ResponseMalformed(format!("asked for {want} choices, got {got}")))
    }
}

/// Chat-completions style endpoint (`model`, `messages`, `temperature`, `n`).
#[derive(Debug, Clone)]
pub struct RemoteChatBackend {
    endpoint: String,
    model: String,
    api_key: String,
    pub retry: RetryPolicy,
}

impl RemoteChatBackend {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>, api_key: impl Into<String>) -> Self {
        RemoteChatBackend { endpoint: endpoint.into(), model: model.into(), api_key: api_key.into(), retry: RetryPolicy::default() }
    }

    /// Reads the API key from [`API_KEY_ENV`].
    pub fn from_env(endpoint: impl Into<String>, model: impl Into<String>) -> Result<Self, BackendError> {
        match std::env::var(API_KEY_ENV) {
            Ok(key) if !key.trim().is_empty() => Ok(Self::new(endpoint, model, key)),
            _ => Err(BackendError::AuthError(format!("environment variable {API_KEY_ENV} is not set"))),
        }
    }

    fn messages(prompt: &PromptBundle) -> Vec<Message> {
        if prompt.messages.is_empty() {
            vec![Message { role: Role::User, content: prompt.as_text() }]
        } else {
            prompt.messages.clone()
        }
    }
}

#[derive(Debug, Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
    usage: Option<Usage>,
}

#[derive(Debug, Deserialize)]
struct ChatChoice {
    message: ChatMessage,
    finish_reason: Option<String>,
}

#[derive(Debug, Deserialize)]
struct ChatMessage {
    content: Option<String>,
}

impl Backend for RemoteChatBackend {
    fn identity(&self) -> String {
        format!("remote_chat:{}@{}", self.model, self.endpoint)
    }

    fn preferred_mode(&self) -> RenderMode {
        RenderMode::Chat
    }

    fn generate(
        &self,
        _key: &PromptKey,
        prompt: &PromptBundle,
        config: &GenerationConfig,
        first_index: usize,
        count: usize,
    ) -> Result<Vec<Completion>, BackendError> {
        let body = json!({
            "model": self.model,
            "messages": Self::messages(prompt),
            "temperature": config.temperature,
            "n": count,
            "max_tokens": config.max_output_tokens,
        });
        let agent = agent(config.request_timeout);
        let value = self.retry.run(|| post_json(&agent, &self.endpoint, Some(&self.api_key), &body))?;
        let parsed: ChatResponse =
            serde_json::from_value(value).map_err(|e| BackendError::ResponseMalformed(e.to_string()))?;
        check_count(parsed.choices.len(), count)?;
        let choices = parsed
            .choices
            .into_iter()
            .map(|c| (c.message.content.unwrap_or_default(), finish_reason(c.finish_reason.as_deref())))
            .collect();
        Ok(completions(choices, parsed.usage, &prompt.as_text(), first_index))
    }

    fn supports_logprobs(&self) -> bool {
        false
    }

    fn score(&self, _: &PromptKey, _: usize, _: &str, _: &str) -> Result<TokenScores, BackendError> {
        Err(BackendError::CapabilityUnsupported(format!("log-probability scoring ({})", self.identity())))
    }
}

/// Local text-completion server (`prompt`, `temperature`, `logprobs`), scoring through
/// `echo` with zero new tokens.
#[derive(Debug, Clone)]
pub struct LocalCompletionBackend {
    endpoint: String,
    pub retry: RetryPolicy,
    pub separators: Separators,
    pub score_timeout: Duration,
}

impl LocalCompletionBackend {
    pub fn new(endpoint: impl Into<String>) -> Self {
        LocalCompletionBackend {
            endpoint: endpoint.into(),
            retry: RetryPolicy::default(),
            separators: Separators::default(),
            score_timeout: Duration::from_secs(120),
        }
    }
}

#[derive(Debug, Deserialize)]
struct CompletionResponse {
    choices: Vec<CompletionChoice>,
    usage: Option<Usage>,
}

#[derive(Debug, Deserialize)]
struct CompletionChoice {
    #[serde(default)]
    text: String,
    finish_reason: Option<String>,
    logprobs: Option<EchoLogprobs>,
}

#[derive(Debug, Deserialize)]
struct EchoLogprobs {
    tokens: Vec<String>,
    token_logprobs: Vec<Option<f64>>,
    text_offset: Option<Vec<usize>>,
}

impl Backend for LocalCompletionBackend {
    fn identity(&self) -> String {
        format!("local_completion@{}", self.endpoint)
    }

    fn preferred_mode(&self) -> RenderMode {
        RenderMode::TextCompletion
    }

    fn separators(&self) -> Separators {
        self.separators.clone()
    }

    fn generate(
        &self,
        _key: &PromptKey,
        prompt: &PromptBundle,
        config: &GenerationConfig,
        first_index: usize,
        count: usize,
    ) -> Result<Vec<Completion>, BackendError> {
        let text = prompt.as_text();
        let body = json!({
            "prompt": text,
            "temperature": config.temperature,
            "max_tokens": config.max_output_tokens,
            "n": count,
            "logprobs": Value::Null,
        });
        let agent = agent(config.request_timeout);
        let value = self.retry.run(|| post_json(&agent, &self.endpoint, None, &body))?;
        let parsed: CompletionResponse =
            serde_json::from_value(value).map_err(|e| BackendError::ResponseMalformed(e.to_string()))?;
        check_count(parsed.choices.len(), count)?;
        let choices = parsed.choices.into_iter().map(|c| (c.text, finish_reason(c.finish_reason.as_deref()))).collect();
        Ok(completions(choices, parsed.usage, &text, first_index))
    }

    fn supports_logprobs(&self) -> bool {
        true
    }

    fn score(&self, _key: &PromptKey, _sample_index: usize, prompt_text: &str, continuation_text: &str) -> Result<TokenScores, BackendError> {
        let body = json!({
            "prompt": format!("{prompt_text}{continuation_text}"),
            "temperature": 0.0,
            "max_tokens": 0,
            "echo": true,
            "logprobs": 1,
        });
        let agent = agent(self.score_timeout);
        let value = self.retry.run(|| post_json(&agent, &self.endpoint, None, &body))?;
        let parsed: CompletionResponse =
            serde_json::from_value(value).map_err(|e| BackendError::ResponseMalformed(e.to_string()))?;
        let logprobs = parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.logprobs)
            .ok_or_else(|| BackendError::ResponseMalformed("echo response without logprobs".into()))?;
        split_echo(logprobs, prompt_text.len())
    }
}

/// Splits echoed tokens into prompt and continuation by byte offset. A missing logprob is
/// allowed only on the very first token, which has nothing to condition on.
fn split_echo(lp: EchoLogprobs, prompt_len: usize) -> Result<TokenScores, BackendError> {
    if lp.tokens.len() != lp.token_logprobs.len() {
        return Err(BackendError::ResponseMalformed("tokens and token_logprobs differ in length".into()));
    }
    let offsets = match lp.text_offset {
        Some(o) if o.len() == lp.tokens.len() => o,
        Some(_) => return Err(BackendError::ResponseMalformed("text_offset length mismatch".into())),
        None => lp
            .tokens
            .iter()
            .scan(0usize, |acc, t| {
                let at = *acc;
                *acc += t.len();
                Some(at)
            })
            .collect(),
    };
    let mut scores = TokenScores::default();
    for (i, ((token, logprob), offset)) in lp.tokens.into_iter().zip(lp.token_logprobs).zip(offsets).enumerate() {
        let Some(logprob) = logprob else {
            if i == 0 {
                scores.first_prompt_token_excluded = true;
                continue;
            }
            return Err(BackendError::ResponseMalformed(format!("token {i} has no logprob")));
        };
        let score = TokenScore { token_text: token, logprob };
        if offset < prompt_len {
            scores.prompt.push(score);
        } else {
            scores.continuation.push(score);
        }
    }
    Ok(scores)
}
