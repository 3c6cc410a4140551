//! The repair pipeline: report, prompt, sample, extract, splice, validate.

mod runlog;
mod sandbox;
mod summary;

use std::fs;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::mpsc;
use std::thread;
use std::time::{Duration, Instant};

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{
    perplexity, sample, sample_while, score_tokens, Backend, BackendError, Completion, GenerationConfig,
    PerplexityRecord, PromptKey,
};
use crate::bug::{BugInstance, BundleError, FunctionSpan, Language, LocateError};
use crate::patch::{
    apply_function_patch, apply_hunk_patch, extract_function, extract_infills, extract_search_replace, patched_function,
    AppliedPatch, ExtractError, ExtractedPatch, PatchBody,
};
use crate::report::{
    build_report_from, default_exemplar, function_relative, render_prompt_with, PromptBundle, PromptFormat, RenderMode,
    ReportError,
};
use crate::syntax::strip_comments;

pub use runlog::{read_run_log, RunLogError, RunLogWriter, RUN_LOG_SCHEMA};
pub use sandbox::{materialize, validate, OutcomeStatus, SandboxError, ValidationOutcome, DEFAULT_COMPILE_ERROR_PATTERN};
pub use summary::{summarize, FormatSummary, SummaryReport, Totals};

/// Default per-candidate validation timeout.
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(60);

/// Dollar prices per thousand tokens.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prices {
    pub input_per_1k: f64,
    pub output_per_1k: f64,
}

impl Default for Prices {
    fn default() -> Self {
        Prices { input_per_1k: 0.01, output_per_1k: 0.03 }
    }
}

pub fn compute_cost(input_tokens: u64, output_tokens: u64, prices: &Prices) -> f64 {
    input_tokens as f64 / 1000.0 * prices.input_per_1k + output_tokens as f64 / 1000.0 * prices.output_per_1k
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostLedger {
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub input_price_per_1k: f64,
    pub output_price_per_1k: f64,
    pub total_dollars: f64,
}

impl CostLedger {
    pub fn new(prices: Prices) -> Self {
        CostLedger {
            input_tokens: 0,
            output_tokens: 0,
            input_price_per_1k: prices.input_per_1k,
            output_price_per_1k: prices.output_per_1k,
            total_dollars: 0.0,
        }
    }

    pub fn prices(&self) -> Prices {
        Prices { input_per_1k: self.input_price_per_1k, output_per_1k: self.output_price_per_1k }
    }

    pub fn add(&mut self, input_tokens: u64, output_tokens: u64) {
        self.input_tokens += input_tokens;
        self.output_tokens += output_tokens;
        self.total_dollars = compute_cost(self.input_tokens, self.output_tokens, &self.prices());
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidatePatch {
    pub completion: Completion,
    pub extracted: Option<ExtractedPatch>,
    pub applied: Option<AppliedPatch>,
    pub outcome: ValidationOutcome,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perplexity: Option<PerplexityRecord>,
}

/// Seconds spent per stage of one run.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RunTimings {
    pub generation_seconds: f64,
    pub validation_seconds: f64,
    pub total_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepairRun {
    pub bug_id: String,
    pub format: PromptFormat,
    pub mode: RenderMode,
    pub backend_identity: String,
    pub num_samples: usize,
    pub early_stop: bool,
    /// In sample order.
    pub candidates: Vec<CandidatePatch>,
    /// 1-based.
    pub first_plausible_index: Option<usize>,
    pub reference_match: Option<bool>,
    pub ledger: CostLedger,
    pub timings: RunTimings,
}

impl RepairRun {
    pub fn plausible_count(&self) -> usize {
        self.candidates.iter().filter(|c| c.outcome.is_plausible()).count()
    }
}

#[derive(Debug, Clone)]
pub struct RepairOptions {
    pub early_stop: bool,
    /// Used unless the bundle sets its own timeout.
    pub timeout: Duration,
    pub compile_error: Regex,
    /// Parent of the per-candidate working copies; must lie outside every bundle.
    pub work_dir: PathBuf,
    pub keep_scratch: bool,
    pub prices: Prices,
    /// Overrides the backend's preferred render mode.
    pub mode: Option<RenderMode>,
    /// Scores each completion's perplexity when the backend exposes log-probabilities.
    pub score_perplexity: bool,
    /// Writes each rendered prompt here when set.
    pub prompt_dump: Option<PathBuf>,
    /// Wall-clock budget for one bug, on top of the per-candidate timeout. Candidates reached
    /// after it runs out are recorded as timeouts without being run.
    pub bug_budget: Option<Duration>,
}

impl RepairOptions {
    pub fn new(work_dir: impl Into<PathBuf>) -> Self {
        RepairOptions {
            early_stop: false,
            timeout: DEFAULT_TIMEOUT,
            compile_error: Regex::new(DEFAULT_COMPILE_ERROR_PATTERN).expect("static regex"),
            work_dir: work_dir.into(),
            keep_scratch: false,
            prices: Prices::default(),
            mode: None,
            score_perplexity: false,
            prompt_dump: None,
            bug_budget: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum RepairError {
    #[error(transparent)]
    Bundle(#[from] BundleError),
    #[error(transparent)]
    Locate(#[from] LocateError),
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Sandbox(#[from] SandboxError),
    #[error("cannot write prompt dump {path}: {reason}")]
    PromptDump { path: PathBuf, reason: String },
}

/// File name used for prompt dumps and golden prompt files.
pub fn prompt_file_name(bug_id: &str, format: PromptFormat, mode: RenderMode) -> String {
    let ext = match mode {
        RenderMode::Chat => "json",
        RenderMode::TextCompletion => "txt",
    };
    format!("{}.{format}.{}.{ext}", safe_name(bug_id), mode.as_str())
}

fn safe_name(id: &str) -> String {
    id.chars().map(|c| if c.is_ascii_alphanumeric() || "._-".contains(c) { c } else { '_' }).collect()
}

/// Builds the prompt for one bug and format exactly as `run_repair` sends it.
pub fn prepare_prompt(
    bug: &BugInstance,
    format: PromptFormat,
    backend: &dyn Backend,
    mode: RenderMode,
) -> Result<PromptBundle, RepairError> {
    let source = bug.read_source()?;
    let span = bug.locate(&source)?;
    let report = build_report_from(bug, &source, span, format)?;
    Ok(render_prompt_with(&report, format, &default_exemplar(bug.language, format), mode, &backend.separators())?)
}

struct Context<'a> {
    bug: &'a BugInstance,
    format: PromptFormat,
    source: String,
    span: FunctionSpan,
    /// Mask position (1-based function line) and the original lines, in mask order.
    masked: Vec<(usize, Vec<String>)>,
    scoring_prompt: Option<String>,
    options: &'a RepairOptions,
    timeout: Duration,
    deadline: Option<Instant>,
}

impl Context<'_> {
    fn extract(&self, text: &str) -> Result<ExtractedPatch, ExtractError> {
        match self.format {
            PromptFormat::ReportFunc | PromptFormat::MaskFunc => extract_function(text, &self.bug.function_name),
            PromptFormat::ReportHunk => extract_search_replace(text),
            PromptFormat::MaskHunk => extract_infills(text, &self.masked),
        }
    }

    fn evaluate(&self, backend: &dyn Backend, completion: Completion) -> Result<CandidatePatch, RepairError> {
        let perplexity = match &self.scoring_prompt {
            Some(prompt) => {
                let key = PromptKey::new(&self.bug.id, self.format);
                let scores = score_tokens(backend, &key, completion.sample_index, prompt, &completion.text)?;
                perplexity(&scores.prompt, &scores.continuation).ok()
            }
            None => None,
        };
        let done = |extracted, applied, outcome| CandidatePatch { completion: completion.clone(), extracted, applied, outcome, perplexity: perplexity.clone() };

        let extracted = match self.extract(&completion.text) {
            Ok(e) => e,
            Err(e) => return Ok(done(None, None, ValidationOutcome::without_run(OutcomeStatus::ExtractionError, e.to_string()))),
        };
        let label = self.bug.target_file.to_string_lossy();
        let applied = match &extracted.body {
            PatchBody::WholeFunction { function_text } => apply_function_patch(&self.source, self.span, function_text, &label),
            PatchBody::HunkSet { .. } => apply_hunk_patch(&self.source, self.span, &extracted, &label),
        };
        let applied = match applied {
            Ok(a) => a,
            Err(e) => {
                let outcome = ValidationOutcome::without_run(OutcomeStatus::ApplyError, e.to_string());
                return Ok(done(Some(extracted), None, outcome));
            }
        };
        let timeout = match self.deadline {
            Some(deadline) => {
                let left = deadline.saturating_duration_since(Instant::now());
                if left.is_zero() {
                    let outcome = ValidationOutcome::without_run(OutcomeStatus::Timeout, "bug budget exhausted".into());
                    return Ok(done(Some(extracted), Some(applied), outcome));
                }
                left.min(self.timeout)
            }
            None => self.timeout,
        };
        let scratch = self.options.work_dir.join(format!(
            "{}-{}-{}",
            safe_name(&self.bug.id),
            self.format,
            completion.sample_index
        ));
        materialize(&self.bug.source_root, &scratch)?;
        let target = scratch.join(&self.bug.target_file);
        fs::write(&target, &applied.patched_file_text)
            .map_err(|e| SandboxError::SandboxSetupFailed(format!("{}: {e}", target.display())))?;
        let outcome = validate(&scratch, &self.bug.test_command, timeout, &self.options.compile_error);
        if !self.options.keep_scratch {
            let _ = fs::remove_dir_all(&scratch);
        }
        Ok(done(Some(extracted), Some(applied), outcome?))
    }
}

/// Runs the full pipeline for one bug and format. Candidate failures become outcomes; only
/// bundle, backend and sandbox failures abort the run.
pub fn run_repair(
    bug: &BugInstance,
    format: PromptFormat,
    config: &GenerationConfig,
    backend: &dyn Backend,
    options: &RepairOptions,
) -> Result<RepairRun, RepairError> {
    let started = Instant::now();
    config.validate()?;
    let source = bug.read_source()?;
    let span = bug.locate(&source)?;
    let report = build_report_from(bug, &source, span, format)?;
    let exemplar = default_exemplar(bug.language, format);
    let mode = options.mode.unwrap_or_else(|| backend.preferred_mode());
    let separators = backend.separators();
    let prompt = render_prompt_with(&report, format, &exemplar, mode, &separators)?;
    if let Some(dir) = &options.prompt_dump {
        let path = dir.join(prompt_file_name(&bug.id, format, mode));
        fs::create_dir_all(dir)
            .and_then(|_| fs::write(&path, prompt.golden_text()))
            .map_err(|e| RepairError::PromptDump { path, reason: e.to_string() })?;
    }
    let scoring_prompt = if options.score_perplexity && backend.supports_logprobs() {
        Some(render_prompt_with(&report, format, &exemplar, RenderMode::TextCompletion, &separators)?.as_text())
    } else {
        None
    };
    let masked = match (&bug.known_hunks, format) {
        (Some(hunks), PromptFormat::MaskHunk) => {
            let lines: Vec<&str> = span.text(&source).split('\n').collect();
            let mut rel = function_relative(hunks, span);
            rel.sort_by_key(|h| h.start_line);
            rel.iter()
                .map(|h| (h.start_line, lines[h.start_line - 1..h.end_line].iter().map(|l| l.to_string()).collect()))
                .collect()
        }
        _ => Vec::new(),
    };
    let ctx = Context {
        bug,
        format,
        source,
        span,
        masked,
        scoring_prompt,
        options,
        timeout: bug.timeout_seconds.map_or(options.timeout, Duration::from_secs),
        deadline: options.bug_budget.map(|b| started + b),
    };
    let key = PromptKey::new(&bug.id, format);

    let mut candidates = Vec::new();
    let mut generation = Duration::ZERO;
    let mut validation = Duration::ZERO;
    if options.early_stop {
        let mut failure = None;
        let mut last = Instant::now();
        sample_while(backend, &key, &prompt, config, |completion| {
            generation += last.elapsed();
            let v = Instant::now();
            let result = ctx.evaluate(backend, completion.clone());
            validation += v.elapsed();
            last = Instant::now();
            match result {
                Ok(c) => {
                    let stop = c.outcome.is_plausible();
                    candidates.push(c);
                    !stop
                }
                Err(e) => {
                    failure = Some(e);
                    false
                }
            }
        })?;
        if let Some(e) = failure {
            return Err(e);
        }
    } else {
        let t = Instant::now();
        let completions = sample(backend, &key, &prompt, config)?;
        generation = t.elapsed();
        let v = Instant::now();
        for completion in completions {
            candidates.push(ctx.evaluate(backend, completion)?);
        }
        validation = v.elapsed();
    }

    let mut ledger = CostLedger::new(options.prices);
    for c in &candidates {
        ledger.add(c.completion.input_tokens, c.completion.output_tokens);
    }
    let first_plausible_index = candidates.iter().position(|c| c.outcome.is_plausible()).map(|i| i + 1);
    let reference_match = bug.reference_fix.as_deref().map(|reference| {
        candidates.iter().filter(|c| c.outcome.is_plausible()).any(|c| {
            let patched = c.applied.as_ref().and_then(|a| {
                patched_function(&a.patched_file_text, bug.language, &bug.function_name, ctx.span.start_offset)
            });
            patched.is_some_and(|f| match_reference(&f, reference, bug.language))
        })
    });
    Ok(RepairRun {
        bug_id: bug.id.clone(),
        format,
        mode,
        backend_identity: backend.identity(),
        num_samples: config.num_samples,
        early_stop: options.early_stop,
        candidates,
        first_plausible_index,
        reference_match,
        ledger,
        timings: RunTimings {
            generation_seconds: generation.as_secs_f64(),
            validation_seconds: validation.as_secs_f64(),
            total_seconds: started.elapsed().as_secs_f64(),
        },
    })
}

fn normalize_code(text: &str, language: Language) -> String {
    strip_comments(text, language).split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Conservative correctness proxy: equal after removing comments and collapsing every
/// whitespace run (line breaks included) to one space. Refactored equivalents compare false.
pub fn match_reference(patched_function: &str, reference_fix: &str, language: Language) -> bool {
    let a = normalize_code(patched_function, language);
    !a.is_empty() && a == normalize_code(reference_fix, language)
}

/// A run that aborted with a harness error.
#[derive(Debug)]
pub struct RunFailure {
    pub bug_id: String,
    pub format: PromptFormat,
    pub error: RepairError,
}

/// Coarse class of an aborted run, enough to pick a process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AbortKind {
    BackendUnavailable,
    AuthFailed,
    Harness,
}

impl RunFailure {
    pub fn kind(&self) -> AbortKind {
        match self.error {
            RepairError::Backend(BackendError::BackendUnavailable { .. }) => AbortKind::BackendUnavailable,
            RepairError::Backend(BackendError::AuthError(_)) => AbortKind::AuthFailed,
            _ => AbortKind::Harness,
        }
    }

    /// Errors that make every further request pointless.
    pub fn is_backend_fatal(&self) -> bool {
        self.kind() != AbortKind::Harness
    }
}

/// Runs every (bug, format) pair on up to `workers` threads and hands each result to `sink`
/// on the calling thread. No new pair starts once `cancel` is set or the backend fails fatally;
/// pairs already in flight finish.
pub fn run_corpus(
    bugs: &[BugInstance],
    formats: &[PromptFormat],
    config: &GenerationConfig,
    backend: &dyn Backend,
    options: &RepairOptions,
    workers: usize,
    cancel: &AtomicBool,
    mut sink: impl FnMut(Result<RepairRun, RunFailure>),
) {
    let jobs: Vec<(&BugInstance, PromptFormat)> = bugs.iter().flat_map(|b| formats.iter().map(move |&f| (b, f))).collect();
    let next = AtomicUsize::new(0);
    let halted = AtomicBool::new(false);
    let stop = || cancel.load(Ordering::SeqCst) || halted.load(Ordering::SeqCst);
    thread::scope(|scope| {
        let (tx, rx) = mpsc::channel();
        for _ in 0..workers.clamp(1, jobs.len().max(1)) {
            let tx = tx.clone();
            let (jobs, next, stop) = (&jobs, &next, &stop);
            scope.spawn(move || loop {
                if stop() {
                    break;
                }
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(&(bug, format)) = jobs.get(i) else { break };
                let result = run_repair(bug, format, config, backend, options)
                    .map_err(|error| RunFailure { bug_id: bug.id.clone(), format, error });
                if tx.send(result).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        for result in rx {
            if let Err(failure) = &result {
                if failure.is_backend_fatal() {
                    halted.store(true, Ordering::SeqCst);
                }
            }
            sink(result);
        }
    });
}

/// Sorts runs by format order, then bug id.
pub fn sort_runs(runs: &mut [RepairRun]) {
    runs.sort_by(|a, b| (a.format, &a.bug_id).cmp(&(b.format, &b.bug_id)));
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cost_formula() {
        let p = Prices::default();
        assert_eq!(compute_cost(0, 0, &p), 0.0);
        // 1000 * 0.01/1000 + 1000 * 0.03/1000, written out independently.
        assert!((compute_cost(1000, 1000, &p) - 0.04).abs() < 1e-12);
        let c = compute_cost(1387, 314, &p);
        assert!((0.0228..=0.0238).contains(&c), "{c}");
        assert!((c - (13.87 + 9.42) / 1000.0).abs() < 1e-12);
    }

    #[test]
    fn ledger_accumulates() {
        let mut l = CostLedger::new(Prices::default());
        l.add(500, 100);
        l.add(500, 900);
        assert_eq!((l.input_tokens, l.output_tokens), (1000, 1000));
        assert!((l.total_dollars - 0.04).abs() < 1e-12);
    }

    #[test]
    fn reference_match_normalization() {
        let reference = "int f(int a) {\n    return a + 1;\n}";
        assert!(match_reference(reference, reference, Language::CLike));
        let reindented = "int f(int a)\n{\n  // add one\n\n  return  a + 1;   /* done */\n}\n";
        assert!(match_reference(reindented, reference, Language::CLike));
        let refactored = "int f(int a) {\n    return 1 + a;\n}";
        assert!(!match_reference(refactored, reference, Language::CLike));
        let py = "def f(a):\n    # bump\n    return a + 1\n";
        assert!(match_reference(py, "def f(a):\n    return a + 1", Language::PythonLike));
        assert!(!match_reference("", "", Language::PythonLike));
    }

    #[test]
    fn prompt_file_names_are_flat() {
        assert_eq!(prompt_file_name("group/b-1", PromptFormat::MaskHunk, RenderMode::Chat), "group_b-1.mask_hunk.chat.json");
        assert_eq!(
            prompt_file_name("b", PromptFormat::ReportFunc, RenderMode::TextCompletion),
            "b.report_func.text_completion.txt"
        );
    }
}
