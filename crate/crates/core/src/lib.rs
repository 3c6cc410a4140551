//! Completion-style automated program repair harness.
//!
//! A bug bundle is turned into a bug report, rendered into a one-shot prompt, sampled from a
//! model backend, and every sampled function is spliced back into a scratch copy of the
//! source tree and validated by the bundle's own tests.

pub mod backend;
pub mod bug;
pub mod lab;
pub mod patch;
pub mod repair;
pub mod report;
pub mod syntax;

pub use bug::{
    load_bundle, load_corpus, locate_function, locate_function_at, validate_bundle, validate_corpus, BugInstance, BundleError,
    FunctionSpan, HunkSpec, Issue, Language, LocateError, TestCase,
};
pub use backend::{
    load_mock, perplexity, Backend, BackendError, Completion, GenerationConfig, LocalCompletionBackend, MockBackend,
    PerplexityRecord, PromptKey, RemoteChatBackend, API_KEY_ENV,
};
pub use lab::{compare_formats, render_table, FormatCell, FormatReport};
pub use patch::{apply_function_patch, apply_hunk_patch, unified_diff, AppliedPatch, ExtractedPatch, PatchBody};
pub use repair::{
    compute_cost, match_reference, run_corpus, run_repair, summarize, validate, CandidatePatch, CostLedger, OutcomeStatus,
    RepairError, RepairOptions, RepairRun, SummaryReport, ValidationOutcome,
};
pub use report::{build_report, render_prompt, BugReport, PromptBundle, PromptFormat, RenderMode};
