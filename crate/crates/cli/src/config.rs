//! Run settings: command-line flags over a TOML file over built-in defaults.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::ValueEnum;
use d4c_core::repair::{Prices, DEFAULT_COMPILE_ERROR_PATTERN};
use d4c_core::{GenerationConfig, PromptFormat, RenderMode, API_KEY_ENV};
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::ConfigError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum BackendKind {
    RemoteChat,
    LocalCompletion,
    Mock,
}

/// Every tunable, each optional so that flags and file can be layered. Flags are the field
/// names in kebab-case; file keys are the field names as written.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, clap::Args)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    /// Directory whose subdirectories are bug bundles.
    #[arg(long)]
    pub corpus_dir: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub backend: Option<BackendKind>,
    /// Chat or completion endpoint URL (remote_chat, local_completion).
    #[arg(long)]
    pub endpoint: Option<String>,
    /// Model name sent to a remote chat endpoint.
    #[arg(long)]
    pub model: Option<String>,
    /// Mock script path (mock backend).
    #[arg(long)]
    pub script: Option<PathBuf>,
    /// Prompt format for `repair` [default: report_func].
    #[arg(long)]
    pub format: Option<PromptFormat>,
    /// Prompt rendering; defaults to the backend's own preference.
    #[arg(long)]
    pub mode: Option<RenderMode>,
    /// [default: 10]
    #[arg(long)]
    pub num_samples: Option<usize>,
    /// [default: 1.0]
    #[arg(long)]
    pub temperature: Option<f64>,
    /// [default: 1024]
    #[arg(long)]
    pub max_output_tokens: Option<u32>,
    /// Per-request backend timeout [default: 120].
    #[arg(long)]
    pub request_timeout_seconds: Option<u64>,
    /// Per-candidate validation timeout; a bundle's own value wins [default: 60].
    #[arg(long)]
    pub timeout_seconds: Option<u64>,
    /// Wall-clock budget per bug across all its candidates [default: none].
    #[arg(long)]
    pub bug_budget_seconds: Option<u64>,
    /// Stop sampling a bug after its first plausible patch [default: false].
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub early_stop: Option<bool>,
    /// Bugs processed concurrently [default: available cores].
    #[arg(long)]
    pub workers: Option<usize>,
    /// Keep per-candidate working copies under output_dir/scratch [default: false].
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub keep_scratch: Option<bool>,
    /// Write every prompt sent to output_dir/prompts [default: false].
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub dump_prompts: Option<bool>,
    /// [default: d4c-out]
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    /// Output pattern that marks a failed build.
    #[arg(long)]
    pub compile_error_regex: Option<String>,
    /// Dollars per 1,000 input tokens [default: 0.01].
    #[arg(long)]
    pub input_price_per_1k: Option<f64>,
    /// Dollars per 1,000 output tokens [default: 0.03].
    #[arg(long)]
    pub output_price_per_1k: Option<f64>,
}

macro_rules! layer {
    ($hi:expr, $lo:expr, $($field:ident),* $(,)?) => {
        Settings { $($field: $hi.$field.or($lo.$field)),* }
    };
}

impl Settings {
    /// Fields set here win; the rest come from `lower`.
    pub fn over(self, lower: Settings) -> Settings {
        layer!(
            self,
            lower,
            corpus_dir,
            backend,
            endpoint,
            model,
            script,
            format,
            mode,
            num_samples,
            temperature,
            max_output_tokens,
            request_timeout_seconds,
            timeout_seconds,
            bug_budget_seconds,
            early_stop,
            workers,
            keep_scratch,
            dump_prompts,
            output_dir,
            compile_error_regex,
            input_price_per_1k,
            output_price_per_1k,
        )
    }

    pub fn from_file(path: &Path) -> Result<Settings, ConfigError> {
        let text = fs::read_to_string(path).map_err(|e| ConfigError(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| ConfigError(format!("config {}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BackendSpec {
    Mock { script: PathBuf },
    RemoteChat { endpoint: String, model: String, api_key: String },
    LocalCompletion { endpoint: String },
}

/// Fully resolved settings for one invocation.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub corpus_dir: PathBuf,
    pub backend: BackendSpec,
    pub format: PromptFormat,
    pub mode: Option<RenderMode>,
    pub generation: GenerationConfig,
    pub timeout: Duration,
    pub bug_budget: Option<Duration>,
    pub early_stop: bool,
    pub workers: usize,
    pub keep_scratch: bool,
    pub dump_prompts: bool,
    pub output_dir: PathBuf,
    pub compile_error: Regex,
    pub prices: Prices,
}

pub const DEFAULT_OUTPUT_DIR: &str = "d4c-out";

fn required<T>(value: Option<T>, what: &str) -> Result<T, ConfigError> {
    value.ok_or_else(|| ConfigError(format!("missing setting: {what}")))
}

/// Applies defaults and checks cross-field requirements. `api_key` is the value of the key
/// variable, passed in so resolution stays independent of the process environment.
pub fn resolve(s: Settings, api_key: Option<String>) -> Result<RunConfig, ConfigError> {
    let backend = match required(s.backend, "backend (--backend remote_chat|local_completion|mock)")? {
        BackendKind::Mock => BackendSpec::Mock { script: required(s.script, "script (--script) for the mock backend")? },
        BackendKind::RemoteChat => BackendSpec::RemoteChat {
            endpoint: required(s.endpoint, "endpoint (--endpoint) for the remote_chat backend")?,
            model: required(s.model, "model (--model) for the remote_chat backend")?,
            api_key: api_key
                .filter(|k| !k.trim().is_empty())
                .ok_or_else(|| ConfigError(format!("{API_KEY_ENV} is not set; the remote_chat backend needs it")))?,
        },
        BackendKind::LocalCompletion => BackendSpec::LocalCompletion {
            endpoint: required(s.endpoint, "endpoint (--endpoint) for the local_completion backend")?,
        },
    };
    let defaults = GenerationConfig::default();
    let generation = GenerationConfig {
        num_samples: s.num_samples.unwrap_or(defaults.num_samples),
        temperature: s.temperature.unwrap_or(defaults.temperature),
        max_output_tokens: s.max_output_tokens.unwrap_or(defaults.max_output_tokens),
        request_timeout: s.request_timeout_seconds.map_or(defaults.request_timeout, Duration::from_secs),
    };
    generation.validate().map_err(|e| ConfigError(e.to_string()))?;
    let timeout = Duration::from_secs(s.timeout_seconds.unwrap_or(60));
    if timeout.is_zero() {
        return Err(ConfigError("timeout_seconds must be positive".into()));
    }
    let workers = s.workers.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if workers == 0 {
        return Err(ConfigError("workers must be at least 1".into()));
    }
    let pattern = s.compile_error_regex.as_deref().unwrap_or(DEFAULT_COMPILE_ERROR_PATTERN);
    let compile_error = Regex::new(pattern).map_err(|e| ConfigError(format!("compile_error_regex: {e}")))?;
    let default_prices = Prices::default();
    let prices = Prices {
        input_per_1k: s.input_price_per_1k.unwrap_or(default_prices.input_per_1k),
        output_per_1k: s.output_price_per_1k.unwrap_or(default_prices.output_per_1k),
    };
    if !(prices.input_per_1k >= 0.0 && prices.output_per_1k >= 0.0) {
        return Err(ConfigError("prices must be non-negative".into()));
    }
    Ok(RunConfig {
        corpus_dir: required(s.corpus_dir, "corpus_dir (--corpus-dir)")?,
        backend,
        format: s.format.unwrap_or(PromptFormat::ReportFunc),
        mode: s.mode,
        generation,
        timeout,
        bug_budget: s.bug_budget_seconds.map(Duration::from_secs),
        early_stop: s.early_stop.unwrap_or(false),
        workers,
        keep_scratch: s.keep_scratch.unwrap_or(false),
        dump_prompts: s.dump_prompts.unwrap_or(false),
        output_dir: s.output_dir.unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR)),
        compile_error,
        prices,
    })
}
