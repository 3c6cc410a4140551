//! Scripted, deterministic backend.
//!
//! The script is a JSON object mapping `"<bug id>/<format>/<sample index>"` to
//! `{text, token_scores?, prompt_scores?}`, where scores are `[token, logprob]` pairs.
//! Replies ignore temperature entirely, so runs over the mock are reproducible byte for byte.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{estimate_tokens, Backend, BackendError, Completion, FinishReason, GenerationConfig, PromptKey, TokenScore, TokenScores};
use crate::report::{PromptBundle, PromptFormat, RenderMode};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockEntry {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_scores: Option<Vec<(String, f64)>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_scores: Option<Vec<(String, f64)>>,
}

type EntryKey = (String, PromptFormat, usize);

#[derive(Debug, Clone)]
pub struct MockBackend {
    name: String,
    entries: BTreeMap<EntryKey, MockEntry>,
    logprobs: bool,
}

pub fn load_mock(script_path: &Path) -> Result<MockBackend, BackendError> {
    let text = fs::read_to_string(script_path)
        .map_err(|e| BackendError::ScriptMalformed(format!("cannot read {}: {e}", script_path.display())))?;
    MockBackend::from_json(&text, &format!("mock:{}", script_path.file_name().unwrap_or_default().to_string_lossy()))
}

fn script_key(key: &PromptKey, index: usize) -> String {
    format!("{}/{}/{}", key.bug_id, key.format, index)
}

fn to_scores(pairs: &[(String, f64)]) -> Vec<TokenScore> {
    pairs.iter().map(|(t, lp)| TokenScore { token_text: t.clone(), logprob: *lp }).collect()
}

impl MockBackend {
    pub fn from_json(text: &str, name: &str) -> Result<Self, BackendError> {
        let raw: HashMap<String, MockEntry> =
            serde_json::from_str(text).map_err(|e| BackendError::ScriptMalformed(e.to_string()))?;
        Self::from_entries(raw, name)
    }

    pub fn from_entries(raw: HashMap<String, MockEntry>, name: &str) -> Result<Self, BackendError> {
        let mut entries = BTreeMap::new();
        for (key, entry) in raw {
            let malformed = |why: &str| BackendError::ScriptMalformed(format!("key {key:?}: {why}"));
            let mut parts = key.rsplitn(3, '/');
            let (Some(index), Some(format), Some(bug)) = (parts.next(), parts.next(), parts.next()) else {
                return Err(malformed("expected <bug id>/<format>/<sample index>"));
            };
            let index: usize = index.parse().map_err(|_| malformed("sample index is not a number"))?;
            let format: PromptFormat = format.parse().map_err(|e: String| malformed(&e))?;
            if bug.is_empty() {
                return Err(malformed("empty bug id"));
            }
            let all_scores = entry.token_scores.iter().flatten().chain(entry.prompt_scores.iter().flatten());
            if all_scores.clone().any(|(_, lp)| !lp.is_finite()) {
                return Err(malformed("non-finite logprob"));
            }
            entries.insert((bug.to_string(), format, index), entry);
        }
        let logprobs = entries.values().any(|e| e.token_scores.is_some());
        Ok(MockBackend { name: name.to_string(), entries, logprobs })
    }

    /// Same replies, but advertising no log-probability support (like a chat-only API).
    pub fn without_logprobs(mut self) -> Self {
        self.logprobs = false;
        self
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn entry(&self, key: &PromptKey, index: usize) -> Result<&MockEntry, BackendError> {
        self.entries
            .get(&(key.bug_id.clone(), key.format, index))
            .ok_or_else(|| BackendError::ResponseMalformed(format!("no scripted response for {}", script_key(key, index))))
    }
}

impl Backend for MockBackend {
    fn identity(&self) -> String {
        self.name.clone()
    }

    fn preferred_mode(&self) -> RenderMode {
        RenderMode::Chat
    }

    fn generate(
        &self,
        key: &PromptKey,
        prompt: &PromptBundle,
        _config: &GenerationConfig,
        first_index: usize,
        count: usize,
    ) -> Result<Vec<Completion>, BackendError> {
        let input_tokens = estimate_tokens(&prompt.as_text());
        (first_index..first_index + count)
            .map(|index| {
                let entry = self.entry(key, index)?;
                Ok(Completion {
                    text: entry.text.clone(),
                    input_tokens,
                    output_tokens: estimate_tokens(&entry.text),
                    usage_estimated: true,
                    sample_index: index,
                    finish_reason: FinishReason::Stop,
                })
            })
            .collect()
    }

    fn supports_logprobs(&self) -> bool {
        self.logprobs
    }

    fn score(&self, key: &PromptKey, sample_index: usize, _prompt_text: &str, continuation_text: &str) -> Result<TokenScores, BackendError> {
        let entry = self.entry(key, sample_index)?;
        let prompt = entry.prompt_scores.as_deref().map(to_scores).unwrap_or_default();
        if continuation_text.is_empty() {
            return Ok(TokenScores { prompt, continuation: Vec::new(), first_prompt_token_excluded: false });
        }
        let continuation = entry
            .token_scores
            .as_deref()
            .map(to_scores)
            .ok_or_else(|| BackendError::ResponseMalformed(format!("no token scores scripted for {}", script_key(key, sample_index))))?;
        Ok(TokenScores { prompt, continuation, first_prompt_token_excluded: false })
    }
}
