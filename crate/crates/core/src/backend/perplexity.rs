use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::TokenScore;

/// Output-only (O) and prompt-plus-output (IO) perplexity of one scored pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerplexityRecord {
    pub output_ppl: f64,
    pub io_ppl: f64,
    pub output_token_count: usize,
    pub io_token_count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PerplexityError {
    #[error("no scored {0} tokens")]
    EmptyScores(&'static str),
}

fn mean_nll<'a>(scores: impl Iterator<Item = &'a TokenScore>) -> (f64, usize) {
    let (sum, n) = scores.fold((0.0, 0usize), |(s, n), t| (s - t.logprob, n + 1));
    (sum / n as f64, n)
}

/// `exp(mean negative log-likelihood)` over the continuation tokens (O) and over the scored
/// prompt tokens plus the continuation (IO). Callers pass prompt scores without any unscored
/// leading token.
pub fn perplexity(prompt_scores: &[TokenScore], continuation_scores: &[TokenScore]) -> Result<PerplexityRecord, PerplexityError> {
    if continuation_scores.is_empty() {
        return Err(PerplexityError::EmptyScores("continuation"));
    }
    let (o_nll, o_n) = mean_nll(continuation_scores.iter());
    let (io_nll, io_n) = mean_nll(prompt_scores.iter().chain(continuation_scores));
    Ok(PerplexityRecord { output_ppl: o_nll.exp(), io_ppl: io_nll.exp(), output_token_count: o_n, io_token_count: io_n })
}
