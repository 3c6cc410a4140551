//! The `d4c` command line: `repair`, `compare` and `report`.
//!
//! Exit codes: 0 success; 1 a bundle aborted with a harness error; 2 configuration or input
//! error (also rejected credentials); 3 backend unavailable before any run finished;
//! 130 interrupted.

pub mod config;

use std::collections::BTreeSet;
use std::fmt;
use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};

use clap::{Args, Parser, Subcommand};
use d4c_core::bug::Severity;
use d4c_core::lab::{compare_formats, render_table, FormatReport, LabError};
use d4c_core::repair::{read_run_log, run_corpus, AbortKind, RunLogWriter};
use d4c_core::{
    load_corpus, load_mock, summarize, validate_corpus, Backend, BugInstance, LocalCompletionBackend, PromptFormat,
    RemoteChatBackend, RepairOptions, RepairRun, API_KEY_ENV,
};

use config::{resolve, BackendSpec, RunConfig, Settings};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ABORTED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_UNAVAILABLE: i32 = 3;
pub const EXIT_INTERRUPTED: i32 = 130;

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Parser)]
#[command(name = "d4c", version, about = "Completion-style automated program repair harness")]
pub struct Cli {
    /// More log output on stderr; repeat for more.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Repair every bundle in a corpus with one prompt format.
    Repair(RunArgs),
    /// Run a corpus under several prompt formats and compare plausibility and perplexity.
    Compare {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated formats, in table order.
        #[arg(long, value_delimiter = ',', default_value = "report_func,mask_func,report_hunk,mask_hunk")]
        formats: Vec<PromptFormat>,
    },
    /// Recompute the summary of a run log without contacting any backend.
    Report {
        run_log: PathBuf,
        /// Print the summary as JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// TOML file with the same keys as the flags, in snake_case.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub settings: Settings,
}

impl RunArgs {
    pub fn resolve(&self) -> Result<RunConfig, ConfigError> {
        let file = match &self.config {
            Some(path) => Settings::from_file(path)?,
            None => Settings::default(),
        };
        resolve(self.settings.clone().over(file), std::env::var(API_KEY_ENV).ok())
    }
}

/// Runs one parsed command and returns the process exit code.
pub fn run(cli: Cli, cancel: &AtomicBool) -> i32 {
    let result = match cli.command {
        Command::Repair(args) => args.resolve().and_then(|c| cmd_repair(&c, cancel)),
        Command::Compare { run, formats } => run.resolve().and_then(|c| cmd_compare(&c, &formats, cancel)),
        Command::Report { run_log, json } => cmd_report(&run_log, json),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_CONFIG
        }
    }
}

fn io_error(what: &Path, e: io::Error) -> ConfigError {
    ConfigError(format!("{}: {e}", what.display()))
}

/// Loads and checks the corpus; mask formats additionally need known hunks everywhere.
pub fn load_checked_corpus(dir: &Path, formats: &[PromptFormat]) -> Result<Vec<BugInstance>, ConfigError> {
    let corpus = load_corpus(dir).map_err(|e| ConfigError(e.to_string()))?;
    if corpus.is_empty() {
        return Err(ConfigError(format!("no bundles found in {}", dir.display())));
    }
    let mut errors = Vec::new();
    for (id, issue) in validate_corpus(&corpus) {
        match issue.severity {
            Severity::Error => errors.push(format!("{id}: {}", issue.message)),
            Severity::Warning => tracing::warn!(bundle = %id, "{}", issue.message),
        }
    }
    if !errors.is_empty() {
        return Err(ConfigError(format!("invalid bundles:\n  {}", errors.join("\n  "))));
    }
    for format in formats.iter().filter(|f| f.is_mask()) {
        let lacking: Vec<&str> = corpus.iter().filter(|b| b.known_hunks.is_none()).map(|b| b.id.as_str()).collect();
        if !lacking.is_empty() {
            return Err(ConfigError(format!("{format} needs known hunks; missing in: {}", lacking.join(", "))));
        }
    }
    Ok(corpus)
}

pub fn build_backend(spec: &BackendSpec) -> Result<Box<dyn Backend>, ConfigError> {
    Ok(match spec {
        BackendSpec::Mock { script } => Box::new(load_mock(script).map_err(|e| ConfigError(format!("{}: {e}", script.display())))?),
        BackendSpec::RemoteChat { endpoint, model, api_key } => {
            Box::new(RemoteChatBackend::new(endpoint.clone(), model.clone(), api_key.clone()))
        }
        BackendSpec::LocalCompletion { endpoint } => Box::new(LocalCompletionBackend::new(endpoint.clone())),
    })
}

fn repair_options(config: &RunConfig) -> RepairOptions {
    RepairOptions {
        early_stop: config.early_stop,
        timeout: config.timeout,
        compile_error: config.compile_error.clone(),
        keep_scratch: config.keep_scratch,
        prices: config.prices,
        mode: config.mode,
        score_perplexity: false,
        prompt_dump: config.dump_prompts.then(|| config.output_dir.join("prompts")),
        bug_budget: config.bug_budget,
        ..RepairOptions::new(config.output_dir.join("scratch"))
    }
}

/// Output files of one invocation, with the run log opened for appending records.
struct Outputs {
    dir: PathBuf,
    log: RunLogWriter<BufWriter<File>>,
}

impl Outputs {
    fn create(dir: &Path) -> Result<Outputs, ConfigError> {
        fs::create_dir_all(dir.join("scratch")).map_err(|e| io_error(dir, e))?;
        let path = dir.join("run.jsonl");
        let file = File::create(&path).map_err(|e| io_error(&path, e))?;
        let log = RunLogWriter::new(BufWriter::new(file)).map_err(|e| io_error(&path, e))?;
        Ok(Outputs { dir: dir.to_path_buf(), log })
    }

    fn append(&mut self, run: &RepairRun) {
        if let Err(e) = self.log.append(run) {
            tracing::error!("cannot append to run log: {e}");
        }
    }

    fn write(&self, name: &str, text: &str) -> Result<(), ConfigError> {
        let path = self.dir.join(name);
        fs::write(&path, text).map_err(|e| io_error(&path, e))
    }

    fn finish(self, keep_scratch: bool) {
        if !keep_scratch {
            let _ = fs::remove_dir_all(self.dir.join("scratch"));
        }
    }
}

fn progress(done: usize, total: usize, run: &RepairRun) {
    let outcome = match run.first_plausible_index {
        Some(i) => format!("first plausible at {i}, {} plausible", run.plausible_count()),
        None => "no plausible patch".to_string(),
    };
    eprintln!("[{done}/{total}] {} {}: {outcome} in {} samples", run.bug_id, run.format, run.candidates.len());
}

/// Maps aborted pairs to an exit code; `completed` counts runs that finished.
fn exit_code(aborts: &[(String, PromptFormat, AbortKind, String)], completed: usize, total: usize, cancel: &AtomicBool) -> i32 {
    for (bug, format, _, message) in aborts {
        eprintln!("aborted: {bug} {format}: {message}");
    }
    let skipped = total - completed - aborts.len();
    if skipped > 0 {
        eprintln!("{skipped} of {total} bug/format pairs were not started");
    }
    let kinds: Vec<AbortKind> = aborts.iter().map(|a| a.2).collect();
    if kinds.contains(&AbortKind::AuthFailed) {
        EXIT_CONFIG
    } else if completed == 0 && kinds.contains(&AbortKind::BackendUnavailable) {
        EXIT_UNAVAILABLE
    } else if cancel.load(Ordering::SeqCst) {
        EXIT_INTERRUPTED
    } else if !aborts.is_empty() {
        EXIT_ABORTED
    } else {
        EXIT_OK
    }
}

pub fn cmd_repair(config: &RunConfig, cancel: &AtomicBool) -> Result<i32, ConfigError> {
    let corpus = load_checked_corpus(&config.corpus_dir, &[config.format])?;
    let backend = build_backend(&config.backend)?;
    let mut out = Outputs::create(&config.output_dir)?;
    let options = repair_options(config);
    let total = corpus.len();
    let mut runs = Vec::new();
    let mut aborts = Vec::new();
    run_corpus(&corpus, &[config.format], &config.generation, backend.as_ref(), &options, config.workers, cancel, |result| {
        match result {
            Ok(run) => {
                out.append(&run);
                runs.push(run);
                progress(runs.len() + aborts.len(), total, runs.last().unwrap());
            }
            Err(f) => aborts.push((f.bug_id.clone(), f.format, f.kind(), f.error.to_string())),
        }
    });
    let summary = summarize(&runs);
    let text = summary.render_text();
    out.write("summary.json", &(serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n"))?;
    out.write("summary.txt", &text)?;
    out.finish(config.keep_scratch);
    print!("{text}");
    Ok(exit_code(&aborts, runs.len(), total, cancel))
}

pub fn cmd_compare(config: &RunConfig, formats: &[PromptFormat], cancel: &AtomicBool) -> Result<i32, ConfigError> {
    if formats.is_empty() {
        return Err(ConfigError("no formats requested".into()));
    }
    let corpus = load_checked_corpus(&config.corpus_dir, formats)?;
    let backend = build_backend(&config.backend)?;
    if !backend.supports_logprobs() {
        tracing::warn!("backend exposes no log-probabilities; perplexity columns stay empty");
    }
    let mut out = Outputs::create(&config.output_dir)?;
    let options = repair_options(config);
    let total = corpus.len() * formats.iter().collect::<BTreeSet<_>>().len();
    let corpus_id = config.corpus_dir.file_name().map_or_else(|| config.corpus_dir.display().to_string(), |n| n.to_string_lossy().into_owned());
    let mut runs = Vec::new();
    let report: FormatReport = compare_formats(
        &corpus,
        &corpus_id,
        formats,
        backend.as_ref(),
        &config.generation,
        &options,
        config.workers,
        cancel,
        |run| {
            out.append(run);
            runs.push(run.clone());
            progress(runs.len(), total, run);
        },
    );
    let table = render_table(&report);
    let summary = summarize(&runs);
    out.write("lab.json", &(serde_json::to_string_pretty(&report).expect("report serializes") + "\n"))?;
    out.write("lab.txt", &table)?;
    out.write("summary.json", &(serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n"))?;
    out.write("summary.txt", &summary.render_text())?;
    out.finish(config.keep_scratch);
    print!("{table}");
    let aborts: Vec<_> = report
        .errors
        .iter()
        .map(|LabError { bug_id, format, kind, message }| (bug_id.clone(), *format, *kind, message.clone()))
        .collect();
    Ok(exit_code(&aborts, runs.len(), total, cancel))
}

pub fn cmd_report(run_log: &Path, json: bool) -> Result<i32, ConfigError> {
    let file = File::open(run_log).map_err(|e| io_error(run_log, e))?;
    let runs = read_run_log(BufReader::new(file)).map_err(|e| ConfigError(format!("{}: {e}", run_log.display())))?;
    let summary = summarize(&runs);
    let text = if json { serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n" } else { summary.render_text() };
    let mut stdout = io::stdout().lock();
    let _ = stdout.write_all(text.as_bytes());
    Ok(EXIT_OK)
}
