use std::collections::BTreeMap;
use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::RepairRun;
use crate::report::PromptFormat;

/// Statistics over the runs of one prompt format (one run per bug).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FormatSummary {
    pub format: PromptFormat,
    pub bugs: usize,
    /// Bugs with at least one plausible patch.
    pub plausible_bugs: usize,
    pub reference_matches: usize,
    /// Over bugs with a plausible patch; population standard deviation.
    pub mean_first_plausible_index: Option<f64>,
    pub std_first_plausible_index: Option<f64>,
    /// Plausible patches per bug, over bugs with at least one.
    pub mean_plausible_patches: Option<f64>,
    pub std_plausible_patches: Option<f64>,
    pub samples_issued: usize,
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub total_dollars: f64,
    pub wall_time_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Totals {
    pub runs: usize,
    pub samples_issued: usize,
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub total_dollars: f64,
    pub wall_time_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SummaryReport {
    /// In prompt-format order.
    pub formats: Vec<FormatSummary>,
    pub totals: Totals,
}

/// Starts from +0.0; `Iterator::sum` over no floats yields -0.0, which prints as "-0".
fn total(values: impl Iterator<Item = f64>) -> f64 {
    values.fold(0.0, |a, b| a + b)
}

fn mean_std(values: &[f64]) -> (Option<f64>, Option<f64>) {
    if values.is_empty() {
        return (None, None);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (Some(mean), Some(var.sqrt()))
}

fn summarize_format(format: PromptFormat, runs: &[&RepairRun]) -> FormatSummary {
    let indices: Vec<f64> = runs.iter().filter_map(|r| r.first_plausible_index).map(|i| i as f64).collect();
    let plausible: Vec<f64> =
        runs.iter().map(|r| r.plausible_count()).filter(|&n| n > 0).map(|n| n as f64).collect();
    let (mean_idx, std_idx) = mean_std(&indices);
    let (mean_pl, std_pl) = mean_std(&plausible);
    FormatSummary {
        format,
        bugs: runs.len(),
        plausible_bugs: indices.len(),
        reference_matches: runs.iter().filter(|r| r.reference_match == Some(true)).count(),
        mean_first_plausible_index: mean_idx,
        std_first_plausible_index: std_idx,
        mean_plausible_patches: mean_pl,
        std_plausible_patches: std_pl,
        samples_issued: runs.iter().map(|r| r.candidates.len()).sum(),
        input_tokens: runs.iter().map(|r| r.ledger.input_tokens).sum(),
        output_tokens: runs.iter().map(|r| r.ledger.output_tokens).sum(),
        total_dollars: total(runs.iter().map(|r| r.ledger.total_dollars)),
        wall_time_seconds: total(runs.iter().map(|r| r.timings.total_seconds)),
    }
}

/// Aggregates runs per format. Independent of the order of `runs`.
pub fn summarize(runs: &[RepairRun]) -> SummaryReport {
    let mut sorted: Vec<&RepairRun> = runs.iter().collect();
    sorted.sort_by(|a, b| (a.format, &a.bug_id).cmp(&(b.format, &b.bug_id)));
    let mut by_format: BTreeMap<PromptFormat, Vec<&RepairRun>> = BTreeMap::new();
    for run in &sorted {
        by_format.entry(run.format).or_default().push(run);
    }
    let formats: Vec<FormatSummary> = by_format.into_iter().map(|(f, rs)| summarize_format(f, &rs)).collect();
    let totals = Totals {
        runs: runs.len(),
        samples_issued: formats.iter().map(|f| f.samples_issued).sum(),
        input_tokens: formats.iter().map(|f| f.input_tokens).sum(),
        output_tokens: formats.iter().map(|f| f.output_tokens).sum(),
        total_dollars: total(formats.iter().map(|f| f.total_dollars)),
        wall_time_seconds: total(formats.iter().map(|f| f.wall_time_seconds)),
    };
    SummaryReport { formats, totals }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "—".to_string(), |v| format!("{v:.2}"))
}

impl SummaryReport {
    /// Aligned plain-text rendering.
    pub fn render_text(&self) -> String {
        let header = [
            "format", "bugs", "plausible", "ref-match", "mean-idx", "std-idx", "plaus/bug", "samples", "in-tok", "out-tok",
            "cost($)",
        ];
        let rows: Vec<Vec<String>> = self
            .formats
            .iter()
            .map(|f| {
                vec![
                    f.format.to_string(),
                    f.bugs.to_string(),
                    f.plausible_bugs.to_string(),
                    f.reference_matches.to_string(),
                    opt(f.mean_first_plausible_index),
                    opt(f.std_first_plausible_index),
                    opt(f.mean_plausible_patches),
                    f.samples_issued.to_string(),
                    f.input_tokens.to_string(),
                    f.output_tokens.to_string(),
                    format!("{:.4}", f.total_dollars),
                ]
            })
            .collect();
        let mut out = crate::lab::aligned_table(&header, &rows);
        let t = &self.totals;
        let _ = writeln!(
            out,
            "total: {} runs, {} samples, {} input tokens, {} output tokens, ${:.4}, {:.1}s wall time",
            t.runs, t.samples_issued, t.input_tokens, t.output_tokens, t.total_dollars, t.wall_time_seconds
        );
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{Completion, FinishReason};
    use crate::repair::{CandidatePatch, CostLedger, OutcomeStatus, Prices, RunTimings, ValidationOutcome};
    use crate::report::RenderMode;

    fn run(bug: &str, format: PromptFormat, statuses: &[OutcomeStatus]) -> RepairRun {
        let candidates: Vec<CandidatePatch> = statuses
            .iter()
            .enumerate()
            .map(|(i, &status)| CandidatePatch {
                completion: Completion {
                    text: String::new(),
                    input_tokens: 100,
                    output_tokens: 10,
                    usage_estimated: true,
                    sample_index: i,
                    finish_reason: FinishReason::Stop,
                },
                extracted: None,
                applied: None,
                outcome: ValidationOutcome { status, detail: String::new(), wall_time: 0.5 },
                perplexity: None,
            })
            .collect();
        let mut ledger = CostLedger::new(Prices::default());
        for _ in &candidates {
            ledger.add(100, 10);
        }
        RepairRun {
            bug_id: bug.into(),
            format,
            mode: RenderMode::Chat,
            backend_identity: "test".into(),
            num_samples: statuses.len(),
            early_stop: false,
            first_plausible_index: candidates.iter().position(|c| c.outcome.is_plausible()).map(|i| i + 1),
            candidates,
            reference_match: None,
            ledger,
            timings: RunTimings { generation_seconds: 0.0, validation_seconds: 1.0, total_seconds: 1.0 },
        }
    }

    use OutcomeStatus::{Plausible as P, TestFail as F};

    #[test]
    fn empty_input_has_no_formats_and_zero_totals() {
        let s = summarize(&[]);
        assert!(s.formats.is_empty());
        assert_eq!(s.totals, Totals::default());
        assert!(s.totals.total_dollars.is_sign_positive());
    }

    #[test]
    fn two_runs_one_plausible() {
        let runs = [run("a", PromptFormat::ReportFunc, &[P, F]), run("b", PromptFormat::ReportFunc, &[F, F])];
        let s = summarize(&runs);
        let f = &s.formats[0];
        assert_eq!((f.bugs, f.plausible_bugs), (2, 1));
        assert_eq!(f.mean_first_plausible_index, Some(1.0));
        assert_eq!(f.std_first_plausible_index, Some(0.0));
        assert_eq!(f.mean_plausible_patches, Some(1.0));
        assert_eq!((f.samples_issued, f.input_tokens, f.output_tokens), (4, 400, 40));
        assert!((f.total_dollars - (0.4 * 0.01 + 0.04 * 0.03)).abs() < 1e-12);
        assert_eq!(s.totals.runs, 2);
    }

    #[test]
    fn population_spread_of_first_indices() {
        let runs = [
            run("a", PromptFormat::MaskFunc, &[P]),
            run("b", PromptFormat::MaskFunc, &[F, F, P]),
            run("c", PromptFormat::MaskHunk, &[F]),
        ];
        let s = summarize(&runs);
        assert_eq!(s.formats.len(), 2);
        let f = &s.formats[1];
        assert_eq!(f.format, PromptFormat::MaskFunc);
        assert_eq!(f.mean_first_plausible_index, Some(2.0));
        assert_eq!(f.std_first_plausible_index, Some(1.0));
        let h = &s.formats[0];
        assert_eq!((h.plausible_bugs, h.mean_first_plausible_index, h.mean_plausible_patches), (0, None, None));
    }

    #[test]
    fn text_rendering_prints_absent_means_as_dashes() {
        let text = summarize(&[run("a", PromptFormat::ReportHunk, &[F])]).render_text();
        let row = text.lines().nth(2).unwrap();
        assert!(row.starts_with("report_hunk"));
        assert_eq!(row.matches('—').count(), 3);
        assert!(text.ends_with("total: 1 runs, 1 samples, 100 input tokens, 10 output tokens, $0.0013, 1.0s wall time\n"));
    }
}
