//! Prompt-format comparison: plausible counts and mean O/IO perplexity per format.

use std::sync::atomic::AtomicBool;

use serde::{Deserialize, Serialize};

use crate::backend::{Backend, GenerationConfig};
use crate::bug::BugInstance;
use crate::repair::{run_corpus, sort_runs, AbortKind, RepairOptions, RepairRun};
use crate::report::PromptFormat;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FormatCell {
    pub format: PromptFormat,
    pub bugs: usize,
    pub plausible_bugs: usize,
    /// Mean of per-pair perplexities; absent without log-probability support or scored pairs.
    pub mean_output_ppl: Option<f64>,
    pub mean_io_ppl: Option<f64>,
    pub scored_pairs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabError {
    pub bug_id: String,
    pub format: PromptFormat,
    pub kind: AbortKind,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FormatReport {
    /// One per requested format, in request order.
    pub cells: Vec<FormatCell>,
    pub backend_identity: String,
    pub corpus_id: String,
    /// Bugs that aborted; their cells are partial.
    pub errors: Vec<LabError>,
}

/// Folds runs into one cell per format. Runs of formats not listed are ignored.
pub fn aggregate(
    runs: &[RepairRun],
    formats: &[PromptFormat],
    logprobs: bool,
    backend_identity: &str,
    corpus_id: &str,
    errors: Vec<LabError>,
) -> FormatReport {
    let mut sorted = runs.to_vec();
    sort_runs(&mut sorted);
    let cells = formats
        .iter()
        .map(|&format| {
            let runs: Vec<&RepairRun> = sorted.iter().filter(|r| r.format == format).collect();
            let records: Vec<_> = runs.iter().flat_map(|r| &r.candidates).filter_map(|c| c.perplexity.as_ref()).collect();
            let mean = |f: fn(&crate::backend::PerplexityRecord) -> f64| {
                (logprobs && !records.is_empty()).then(|| records.iter().map(|r| f(r)).sum::<f64>() / records.len() as f64)
            };
            FormatCell {
                format,
                bugs: runs.len(),
                plausible_bugs: runs.iter().filter(|r| r.first_plausible_index.is_some()).count(),
                mean_output_ppl: mean(|r| r.output_ppl),
                mean_io_ppl: mean(|r| r.io_ppl),
                scored_pairs: if logprobs { records.len() } else { 0 },
            }
        })
        .collect();
    FormatReport { cells, backend_identity: backend_identity.to_string(), corpus_id: corpus_id.to_string(), errors }
}

/// Runs every bug under every format without early stop, scoring each completion when the
/// backend supports log-probabilities. `on_run` sees each finished run, e.g. for logging.
#[allow(clippy::too_many_arguments)]
pub fn compare_formats(
    corpus: &[BugInstance],
    corpus_id: &str,
    formats: &[PromptFormat],
    backend: &dyn Backend,
    config: &GenerationConfig,
    options: &RepairOptions,
    workers: usize,
    cancel: &AtomicBool,
    mut on_run: impl FnMut(&RepairRun),
) -> FormatReport {
    let mut unique = Vec::new();
    for &f in formats {
        if !unique.contains(&f) {
            unique.push(f);
        }
    }
    let options = RepairOptions { early_stop: false, score_perplexity: true, ..options.clone() };
    let mut runs = Vec::new();
    let mut errors = Vec::new();
    run_corpus(corpus, &unique, config, backend, &options, workers, cancel, |result| match result {
        Ok(run) => {
            on_run(&run);
            runs.push(run);
        }
        Err(f) => errors.push(LabError { kind: f.kind(), message: f.error.to_string(), bug_id: f.bug_id, format: f.format }),
    });
    errors.sort_by(|a, b| (a.format, &a.bug_id).cmp(&(b.format, &b.bug_id)));
    aggregate(&runs, &unique, backend.supports_logprobs(), &backend.identity(), corpus_id, errors)
}

fn ppl(v: Option<f64>) -> String {
    v.map_or_else(|| "—".to_string(), |v| format!("{v:.2}"))
}

/// One row per cell: format, O-ppl, IO-ppl, plausible. Absent values print as "—".
pub fn render_table(report: &FormatReport) -> String {
    let rows: Vec<Vec<String>> = report
        .cells
        .iter()
        .map(|c| vec![c.format.to_string(), ppl(c.mean_output_ppl), ppl(c.mean_io_ppl), c.plausible_bugs.to_string()])
        .collect();
    aligned_table(&["format", "O-ppl", "IO-ppl", "plausible"], &rows)
}

/// First column left-aligned, the rest right-aligned, two spaces apart, with a rule under
/// the header.
pub(crate) fn aligned_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |cells: &mut dyn Iterator<Item = &str>| {
        let mut s = String::new();
        for (i, (cell, w)) in cells.zip(&widths).enumerate() {
            let pad = " ".repeat(w - cell.chars().count());
            if i == 0 {
                s.push_str(cell);
                s.push_str(&pad);
            } else {
                s.push_str("  ");
                s.push_str(&pad);
                s.push_str(cell);
            }
        }
        s.trim_end().to_string() + "\n"
    };
    let mut out = line(&mut header.iter().copied());
    out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
    out.push('\n');
    for row in rows {
        out.push_str(&line(&mut row.iter().map(String::as_str)));
    }
    out
}
