//! Bug reports and prompt rendering.
//!
//! A [`BugReport`] always has four nonempty sections; missing artifacts are replaced by a
//! fixed placeholder sentence. Prompts are one-shot: a system instruction, one fixed
//! exemplar report/answer pair, then the target report. The same sections feed both the
//! chat rendering (a message list) and the text-completion rendering (one flat string).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bug::{BugInstance, BundleError, FunctionSpan, HunkSpec, Language, LocateError};

/// Replaces each masked hunk in the program text.
pub const MASK_TOKEN: &str = ">>> INFILL <<<";

pub const PLACEHOLDER_DOCUMENTS: &str = "This program does not possess any known documents.";
pub const PLACEHOLDER_TESTS: &str = "This program does not possess any known test cases.";
pub const PLACEHOLDER_MESSAGES: &str = "This program does not possess any known error messages.";

/// Input/output format pair. `mask_*` masks the known buggy hunks in the program text,
/// `*_hunk` asks for fixed hunks only, `*_func` for the whole refined function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptFormat {
    MaskHunk,
    MaskFunc,
    ReportHunk,
    ReportFunc,
}

impl PromptFormat {
    pub const ALL: [PromptFormat; 4] =
        [PromptFormat::MaskHunk, PromptFormat::MaskFunc, PromptFormat::ReportHunk, PromptFormat::ReportFunc];

    pub fn as_str(self) -> &'static str {
        match self {
            PromptFormat::MaskHunk => "mask_hunk",
            PromptFormat::MaskFunc => "mask_func",
            PromptFormat::ReportHunk => "report_hunk",
            PromptFormat::ReportFunc => "report_func",
        }
    }

    pub fn is_mask(self) -> bool {
        matches!(self, PromptFormat::MaskHunk | PromptFormat::MaskFunc)
    }

    pub fn wants_function(self) -> bool {
        matches!(self, PromptFormat::MaskFunc | PromptFormat::ReportFunc)
    }
}

impl fmt::Display for PromptFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PromptFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PromptFormat::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| format!("unknown format `{s}` (expected one of mask_hunk, mask_func, report_hunk, report_func)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RenderMode {
    Chat,
    TextCompletion,
}

impl RenderMode {
    pub fn as_str(self) -> &'static str {
        match self {
            RenderMode::Chat => "chat",
            RenderMode::TextCompletion => "text_completion",
        }
    }
}

impl fmt::Display for RenderMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RenderMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "chat" => Ok(RenderMode::Chat),
            "text_completion" => Ok(RenderMode::TextCompletion),
            _ => Err(format!("unknown mode `{s}` (expected chat or text_completion)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BugReport {
    pub program_text: String,
    pub document_section: String,
    pub test_section: String,
    pub message_section: String,
    /// Language tag for the program's code fence.
    pub fence_tag: String,
}

impl BugReport {
    /// Renders the report body shared by every prompt mode. Section order is fixed:
    /// program, document, failed tests, error messages.
    pub fn render(&self) -> String {
        format!(
            "# Program\n```{}\n{}\n```\n\n# Document\n{}\n\n# Failed Tests\n{}\n\n# Error Messages\n{}",
            self.fence_tag, self.program_text, self.document_section, self.test_section, self.message_section
        )
    }
}

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("format {0} needs known_hunks but the bundle has none")]
    MissingHunks(PromptFormat),
    #[error(transparent)]
    Mask(#[from] MaskError),
    #[error("exemplar is for {exemplar} but the prompt format is {requested}")]
    FormatMismatch { exemplar: PromptFormat, requested: PromptFormat },
    #[error(transparent)]
    Bundle(#[from] BundleError),
    #[error(transparent)]
    Locate(#[from] LocateError),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MaskError {
    #[error("hunks {0} and {1} overlap")]
    OverlappingHunks(usize, usize),
    #[error("hunk {index} (lines {start}..={end}) is outside the {lines}-line function")]
    HunkOutOfRange { index: usize, start: usize, end: usize, lines: usize },
}

/// Builds the report for `bug` by reading and locating its target function.
pub fn build_report(bug: &BugInstance, format: PromptFormat) -> Result<BugReport, ReportError> {
    let source = bug.read_source()?;
    let span = bug.locate(&source)?;
    build_report_from(bug, &source, span, format)
}

/// Builds the report from an already located function.
pub fn build_report_from(
    bug: &BugInstance,
    source: &str,
    span: FunctionSpan,
    format: PromptFormat,
) -> Result<BugReport, ReportError> {
    let function_text = span.text(source);
    let program_text = if format.is_mask() {
        let hunks = bug
            .known_hunks
            .as_deref()
            .filter(|h| !h.is_empty())
            .ok_or(ReportError::MissingHunks(format))?;
        mask_hunks(function_text, &function_relative(hunks, span))?
    } else {
        function_text.to_string()
    };
    Ok(BugReport {
        program_text,
        document_section: bug
            .doc_text
            .as_deref()
            .filter(|d| !d.trim().is_empty())
            .unwrap_or(PLACEHOLDER_DOCUMENTS)
            .to_string(),
        test_section: if bug.failed_tests.is_empty() {
            PLACEHOLDER_TESTS.to_string()
        } else {
            bug.failed_tests
                .iter()
                .enumerate()
                .map(|(i, t)| {
                    format!("Test {}: {}\nInput: {}\nExpected Output: {}", i + 1, t.name, t.input_repr, t.expected_output_repr)
                })
                .collect::<Vec<_>>()
                .join("\n\n")
        },
        message_section: if bug.error_messages.is_empty() {
            PLACEHOLDER_MESSAGES.to_string()
        } else {
            bug.error_messages.join("\n")
        },
        fence_tag: fence_tag_for(&bug.target_file.to_string_lossy(), bug.language).to_string(),
    })
}

/// Converts file-relative hunks to 1-based lines of the function text.
pub fn function_relative(hunks: &[HunkSpec], span: FunctionSpan) -> Vec<HunkSpec> {
    hunks
        .iter()
        .map(|h| HunkSpec {
            start_line: (h.start_line + 1).saturating_sub(span.header_line),
            end_line: (h.end_line + 1).saturating_sub(span.header_line),
        })
        .collect()
}

fn fence_tag_for(path: &str, language: Language) -> &'static str {
    let ext = path.rsplit_once('.').map(|(_, e)| e).unwrap_or("");
    match ext {
        "c" | "h" => "c",
        "cc" | "cpp" | "cxx" | "hpp" | "hh" => "cpp",
        "java" => "java",
        "js" => "javascript",
        "py" => "python",
        _ => match language {
            Language::CLike => "c",
            Language::PythonLike => "python",
        },
    }
}

/// Replaces every hunk (1-based lines of `function_text`) by one mask line that keeps the
/// indentation of the hunk's first line. Lines outside hunks are untouched.
pub fn mask_hunks(function_text: &str, hunks: &[HunkSpec]) -> Result<String, MaskError> {
    let lines: Vec<&str> = function_text.split('\n').collect();
    let mut order: Vec<usize> = (0..hunks.len()).collect();
    order.sort_by_key(|&i| (hunks[i].start_line, hunks[i].end_line));
    for &i in &order {
        let h = hunks[i];
        if h.start_line == 0 || h.start_line > h.end_line || h.end_line > lines.len() {
            return Err(MaskError::HunkOutOfRange { index: i, start: h.start_line, end: h.end_line, lines: lines.len() });
        }
    }
    for pair in order.windows(2) {
        if hunks[pair[1]].start_line <= hunks[pair[0]].end_line {
            let (a, b) = (pair[0].min(pair[1]), pair[0].max(pair[1]));
            return Err(MaskError::OverlappingHunks(a, b));
        }
    }
    let mut out: Vec<String> = Vec::with_capacity(lines.len());
    let mut next = order.iter().map(|&i| hunks[i]).peekable();
    let mut line_no = 1;
    while line_no <= lines.len() {
        match next.peek() {
            Some(h) if h.start_line == line_no => {
                let first = lines[line_no - 1];
                let indent_len = first.len() - first.trim_start_matches([' ', '\t']).len();
                out.push(format!("{}{MASK_TOKEN}", &first[..indent_len]));
                line_no = h.end_line + 1;
                next.next();
            }
            _ => {
                out.push(lines[line_no - 1].to_string());
                line_no += 1;
            }
        }
    }
    Ok(out.join("\n"))
}

/// Fixed one-shot example for a `(language, format)` pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExemplarPair {
    pub language: Language,
    pub format: PromptFormat,
    pub input_report: BugReport,
    /// One fenced code block.
    pub output_text: String,
}

macro_rules! exemplar_asset {
    ($name:literal) => {
        include_str!(concat!(env!("CARGO_MANIFEST_DIR"), "/assets/exemplars/", $name, ".txt"))
    };
}

fn exemplar_source(language: Language, format: PromptFormat) -> &'static str {
    use Language::*;
    use PromptFormat::*;
    match (language, format) {
        (CLike, MaskHunk) => exemplar_asset!("c_like.mask_hunk"),
        (CLike, MaskFunc) => exemplar_asset!("c_like.mask_func"),
        (CLike, ReportHunk) => exemplar_asset!("c_like.report_hunk"),
        (CLike, ReportFunc) => exemplar_asset!("c_like.report_func"),
        (PythonLike, MaskHunk) => exemplar_asset!("python_like.mask_hunk"),
        (PythonLike, MaskFunc) => exemplar_asset!("python_like.mask_func"),
        (PythonLike, ReportHunk) => exemplar_asset!("python_like.report_hunk"),
        (PythonLike, ReportFunc) => exemplar_asset!("python_like.report_func"),
    }
}

/// Returns the shipped handcrafted exemplar.
pub fn default_exemplar(language: Language, format: PromptFormat) -> ExemplarPair {
    let text = exemplar_source(language, format);
    let mut sections: Vec<(&str, Vec<&str>)> = Vec::new();
    for line in text.lines() {
        if let Some(name) = line.strip_prefix("=== ").and_then(|l| l.strip_suffix(" ===")) {
            sections.push((name, Vec::new()));
        } else if let Some((_, body)) = sections.last_mut() {
            body.push(line);
        }
    }
    let section = |name: &str| -> String {
        sections
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, body)| body.join("\n"))
            .unwrap_or_else(|| panic!("exemplar asset for {language}/{format} lacks section {name}"))
    };
    ExemplarPair {
        language,
        format,
        input_report: BugReport {
            program_text: section("program"),
            document_section: section("document"),
            test_section: section("tests"),
            message_section: section("messages"),
            fence_tag: match language {
                Language::CLike => "c",
                Language::PythonLike => "python",
            }
            .to_string(),
        },
        output_text: section("output"),
    }
}

/// Role-play instruction per format. The hunk formats also spell out the answer shape the
/// patch engine parses.
pub fn system_instruction(format: PromptFormat) -> &'static str {
    match format {
        PromptFormat::ReportFunc => {
            "You are an AI debugger. You will receive a bug report made of a buggy function, its document, \
             the failed test cases and the error messages. Find the bug and reply with the complete refined \
             function in a single fenced code block."
        }
        PromptFormat::MaskFunc => {
            "You are an AI debugger. You will receive a bug report made of a buggy function whose buggy lines \
             are replaced by the line `>>> INFILL <<<`, its document, the failed test cases and the error \
             messages. Reply with the complete refined function, every mask filled in, in a single fenced \
             code block."
        }
        PromptFormat::ReportHunk => {
            "You are an AI debugger. You will receive a bug report made of a buggy function, its document, \
             the failed test cases and the error messages. Find the bug and reply with the fixed hunks only, \
             in a single fenced code block. Write each hunk as the original lines between `<<<<<<< SEARCH` \
             and `=======`, followed by their replacement and `>>>>>>> REPLACE`."
        }
        PromptFormat::MaskHunk => {
            "You are an AI debugger. You will receive a bug report made of a buggy function whose buggy lines \
             are replaced by the line `>>> INFILL <<<`, its document, the failed test cases and the error \
             messages. Reply with the code for each mask only, in order, in a single fenced code block, \
             starting each filled hunk with the line `>>> INFILL <<<`."
        }
    }
}

/// Markers for the text-completion rendering. Backends that need their own special tokens
/// supply a different set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Separators {
    pub inst_open: String,
    pub inst_close: String,
    pub turn: String,
}

impl Default for Separators {
    fn default() -> Self {
        Separators { inst_open: "[INST]".into(), inst_close: "[/INST]".into(), turn: "<SEP>".into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub format: PromptFormat,
    pub mode: RenderMode,
    pub system_instruction: String,
    /// Chat mode: system, user (exemplar report), assistant (exemplar answer), user (target report).
    pub messages: Vec<Message>,
    /// Text-completion mode only.
    pub flat_text: Option<String>,
}

impl PromptBundle {
    /// The prompt as a single string: `flat_text` in text mode, the joined message contents otherwise.
    pub fn as_text(&self) -> String {
        match &self.flat_text {
            Some(text) => text.clone(),
            None => self.messages.iter().map(|m| m.content.as_str()).collect::<Vec<_>>().join("\n"),
        }
    }

    /// Byte-exact serialization used for golden files and prompt dumps.
    pub fn golden_text(&self) -> String {
        match (&self.mode, &self.flat_text) {
            (RenderMode::TextCompletion, Some(text)) => text.clone(),
            _ => {
                let mut s = serde_json::to_string_pretty(&self.messages).expect("messages serialize");
                s.push('\n');
                s
            }
        }
    }
}

pub fn render_prompt(
    report: &BugReport,
    format: PromptFormat,
    exemplar: &ExemplarPair,
    mode: RenderMode,
) -> Result<PromptBundle, ReportError> {
    render_prompt_with(report, format, exemplar, mode, &Separators::default())
}

pub fn render_prompt_with(
    report: &BugReport,
    format: PromptFormat,
    exemplar: &ExemplarPair,
    mode: RenderMode,
    separators: &Separators,
) -> Result<PromptBundle, ReportError> {
    if exemplar.format != format {
        return Err(ReportError::FormatMismatch { exemplar: exemplar.format, requested: format });
    }
    let instruction = system_instruction(format).to_string();
    let exemplar_input = exemplar.input_report.render();
    let target = report.render();
    let (messages, flat_text) = match mode {
        RenderMode::Chat => (
            vec![
                Message { role: Role::System, content: instruction.clone() },
                Message { role: Role::User, content: exemplar_input },
                Message { role: Role::Assistant, content: exemplar.output_text.clone() },
                Message { role: Role::User, content: target },
            ],
            None,
        ),
        RenderMode::TextCompletion => {
            let Separators { inst_open, inst_close, turn } = separators;
            let text = format!(
                "{inst_open}\n{instruction}\n{inst_close}\n{exemplar_input}\n{turn}\n{}\n{turn}\n{target}\n{turn}\n",
                exemplar.output_text
            );
            (Vec::new(), Some(text))
        }
    };
    Ok(PromptBundle { format, mode, system_instruction: instruction, messages, flat_text })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bug::TestCase;
    use std::path::PathBuf;

    fn hunk(start_line: usize, end_line: usize) -> HunkSpec {
        HunkSpec { start_line, end_line }
    }

    const SIX: &str = "int f(int x) {\n  int y = x;\n  y += 1;\n  y *= 2;\n  return y;\n}";

    #[test]
    fn mask_single_hunk() {
        let out = mask_hunks(SIX, &[hunk(3, 4)]).unwrap();
        assert_eq!(out, "int f(int x) {\n  int y = x;\n  >>> INFILL <<<\n  return y;\n}");
        assert_eq!(out.lines().count(), 5);
    }

    #[test]
    fn mask_two_hunks_given_out_of_order() {
        let out = mask_hunks(SIX, &[hunk(4, 5), hunk(2, 2)]).unwrap();
        let lines: Vec<_> = out.lines().collect();
        assert_eq!(lines, ["int f(int x) {", "  >>> INFILL <<<", "  y += 1;", "  >>> INFILL <<<", "}"]);
    }

    #[test]
    fn mask_errors() {
        assert_eq!(mask_hunks(SIX, &[hunk(2, 4), hunk(3, 5)]), Err(MaskError::OverlappingHunks(0, 1)));
        assert!(matches!(mask_hunks(SIX, &[hunk(6, 7)]), Err(MaskError::HunkOutOfRange { index: 0, .. })));
        assert!(matches!(mask_hunks(SIX, &[hunk(0, 1)]), Err(MaskError::HunkOutOfRange { .. })));
    }

    fn bug_with(tests: Vec<TestCase>) -> BugInstance {
        BugInstance {
            id: "t".into(),
            language: Language::CLike,
            source_root: PathBuf::from("/nonexistent"),
            target_file: PathBuf::from("src/f.c"),
            function_name: "f".into(),
            header_line: None,
            doc_text: None,
            failed_tests: tests,
            error_messages: vec![],
            test_command: "true".into(),
            known_hunks: Some(vec![hunk(3, 4)]),
            reference_fix: None,
            timeout_seconds: None,
        }
    }

    fn span() -> FunctionSpan {
        FunctionSpan { start_offset: 0, end_offset: SIX.len(), header_line: 1 }
    }

    #[test]
    fn placeholders_fill_missing_artifacts() {
        let report = build_report_from(&bug_with(vec![]), SIX, span(), PromptFormat::ReportFunc).unwrap();
        assert_eq!(report.test_section, "This program does not possess any known test cases.");
        assert_eq!(report.document_section, PLACEHOLDER_DOCUMENTS);
        assert_eq!(report.message_section, PLACEHOLDER_MESSAGES);
        assert_eq!(report.program_text, SIX);
        assert_eq!(report.fence_tag, "c");
    }

    #[test]
    fn tests_keep_manifest_order() {
        let t = |n: &str| TestCase { name: n.into(), input_repr: format!("in {n}"), expected_output_repr: "1".into() };
        let report = build_report_from(&bug_with(vec![t("b"), t("a")]), SIX, span(), PromptFormat::ReportFunc).unwrap();
        assert_eq!(
            report.test_section,
            "Test 1: b\nInput: in b\nExpected Output: 1\n\nTest 2: a\nInput: in a\nExpected Output: 1"
        );
    }

    #[test]
    fn mask_format_masks_and_requires_hunks() {
        let report = build_report_from(&bug_with(vec![]), SIX, span(), PromptFormat::MaskFunc).unwrap();
        assert!(report.program_text.contains(MASK_TOKEN));
        assert_eq!(report.program_text.lines().count(), 5);
        let mut bug = bug_with(vec![]);
        bug.known_hunks = None;
        assert!(matches!(
            build_report_from(&bug, SIX, span(), PromptFormat::MaskHunk),
            Err(ReportError::MissingHunks(PromptFormat::MaskHunk))
        ));
    }

    #[test]
    fn file_relative_hunks_shift_with_span() {
        let span = FunctionSpan { start_offset: 0, end_offset: 1, header_line: 10 };
        assert_eq!(function_relative(&[hunk(12, 13)], span), vec![hunk(3, 4)]);
    }

    #[test]
    fn chat_rendering_structure_and_determinism() {
        let report = build_report_from(&bug_with(vec![]), SIX, span(), PromptFormat::ReportFunc).unwrap();
        let ex = default_exemplar(Language::CLike, PromptFormat::ReportFunc);
        let a = render_prompt(&report, PromptFormat::ReportFunc, &ex, RenderMode::Chat).unwrap();
        let roles: Vec<_> = a.messages.iter().map(|m| m.role).collect();
        assert_eq!(roles, [Role::System, Role::User, Role::Assistant, Role::User]);
        assert!(a.flat_text.is_none());
        assert_eq!(a, render_prompt(&report, PromptFormat::ReportFunc, &ex, RenderMode::Chat).unwrap());
    }

    #[test]
    fn text_rendering_uses_markers_and_same_report() {
        let report = build_report_from(&bug_with(vec![]), SIX, span(), PromptFormat::ReportFunc).unwrap();
        let ex = default_exemplar(Language::CLike, PromptFormat::ReportFunc);
        let chat = render_prompt(&report, PromptFormat::ReportFunc, &ex, RenderMode::Chat).unwrap();
        let text = render_prompt(&report, PromptFormat::ReportFunc, &ex, RenderMode::TextCompletion).unwrap();
        let flat = text.flat_text.unwrap();
        assert!(flat.starts_with("[INST]\nYou are an AI debugger."));
        assert!(flat.contains("\n[/INST]\n"));
        assert_eq!(flat.matches("<SEP>").count(), 3);
        assert!(flat.ends_with(&format!("{}\n<SEP>\n", chat.messages[3].content)));
        let custom = Separators { inst_open: "<s>[INST]".into(), inst_close: "[/INST]".into(), turn: "</s>".into() };
        let mixtral = render_prompt_with(&report, PromptFormat::ReportFunc, &ex, RenderMode::TextCompletion, &custom).unwrap();
        assert!(mixtral.flat_text.unwrap().ends_with("</s>\n"));
    }

    #[test]
    fn exemplar_format_must_match() {
        let report = build_report_from(&bug_with(vec![]), SIX, span(), PromptFormat::ReportFunc).unwrap();
        let ex = default_exemplar(Language::CLike, PromptFormat::MaskHunk);
        assert!(matches!(
            render_prompt(&report, PromptFormat::ReportFunc, &ex, RenderMode::Chat),
            Err(ReportError::FormatMismatch { .. })
        ));
    }

    #[test]
    fn exemplars_have_expected_shapes() {
        for language in [Language::CLike, Language::PythonLike] {
            for format in PromptFormat::ALL {
                let ex = default_exemplar(language, format);
                assert_eq!(ex, default_exemplar(language, format));
                let out = &ex.output_text;
                assert!(out.starts_with("```") && out.ends_with("```"), "{language}/{format}");
                assert_eq!(out.matches("```").count(), 2, "{language}/{format}");
                let body: Vec<&str> = out.lines().skip(1).collect();
                let first = body[0];
                let signature = first.starts_with("int sum_to(") || first.starts_with("def last_index(");
                assert_eq!(signature, format.wants_function(), "{language}/{format}: {first}");
                assert_eq!(ex.input_report.program_text.contains(MASK_TOKEN), format.is_mask());
                for section in [&ex.input_report.document_section, &ex.input_report.test_section, &ex.input_report.message_section] {
                    assert!(!section.trim().is_empty());
                }
            }
        }
    }

    #[test]
    fn format_parses_from_str() {
        for f in PromptFormat::ALL {
            assert_eq!(f.as_str().parse::<PromptFormat>(), Ok(f));
        }
        assert!("report".parse::<PromptFormat>().is_err());
    }
}
