//! Turning raw model output into source edits.
//!
//! Whole-function answers are spliced over the located function span. Hunk answers are
//! anchored replacements applied inside the span, all or nothing. Every applied patch
//! carries a unified diff against the original file.

use serde::{Deserialize, Serialize};
use similar::TextDiff;
use thiserror::Error;

use crate::bug::{locate_function, FunctionSpan, Language, LineIndex};
use crate::report::MASK_TOKEN;
use crate::syntax::is_ident_byte;

pub const SEARCH_MARKER: &str = "<<<<<<< SEARCH";
pub const DIVIDER_MARKER: &str = "=======";
pub const REPLACE_MARKER: &str = ">>>>>>> REPLACE";

/// Context lines in emitted diffs.
pub const DIFF_CONTEXT: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Replacement {
    pub anchor_lines: Vec<String>,
    pub replacement_lines: Vec<String>,
    /// 1-based function line where the anchor must start. Set when the hunk position is
    /// already known (masked hunks); otherwise the anchor is searched for.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub at_line: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PatchBody {
    WholeFunction { function_text: String },
    HunkSet { replacements: Vec<Replacement> },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractedPatch {
    #[serde(flatten)]
    pub body: PatchBody,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_fence_language_tag: Option<String>,
}

/// A 1-based inclusive line range; `end < start` marks an empty range before `start`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineRange {
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AppliedPatch {
    pub patched_file_text: String,
    pub diff_text: String,
    pub touched_line_ranges: Vec<LineRange>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExtractError {
    #[error("no code block contains a definition of `{0}`")]
    NoFunctionFound(String),
    #[error("response has several code blocks and none defines `{0}`")]
    AmbiguousWithoutName(String),
    #[error("no hunk replacement found in the response")]
    NoHunksFound,
    #[error("malformed hunk block: {0}")]
    MalformedHunks(String),
    #[error("expected {expected} filled masks, found {found}")]
    HunkCountMismatch { expected: usize, found: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PatchError {
    #[error("function span {start}..{end} is invalid for a {len}-byte file")]
    SpanInvalid { start: usize, end: usize, len: usize },
    #[error("anchor of replacement {0} not found in the function")]
    AnchorNotFound(usize),
    #[error("anchor of replacement {0} occurs more than once in the function")]
    AnchorAmbiguous(usize),
    #[error("anchors of replacements {0} and {1} overlap")]
    AnchorsOverlap(usize, usize),
    #[error("expected a hunk set, got a whole function")]
    NotAHunkSet,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FencedBlock {
    pub tag: Option<String>,
    pub content: String,
}

/// Fenced code blocks in order of appearance. An unterminated final fence runs to the end
/// of the response, since length-limited completions often stop mid-block.
pub fn fenced_blocks(response: &str) -> Vec<FencedBlock> {
    let mut blocks = Vec::new();
    let mut current: Option<(Option<String>, Vec<&str>)> = None;
    for line in response.lines() {
        let trimmed = line.trim();
        match current.take() {
            None => {
                if let Some(rest) = trimmed.strip_prefix("```") {
                    let tag = rest.trim();
                    current = Some(((!tag.is_empty()).then(|| tag.to_string()), Vec::new()));
                }
            }
            Some((tag, body)) if trimmed == "```" => {
                blocks.push(FencedBlock { tag, content: body.join("\n") });
            }
            Some((tag, mut body)) => {
                body.push(line);
                current = Some((tag, body));
            }
        }
    }
    if let Some((tag, body)) = current {
        blocks.push(FencedBlock { tag, content: body.join("\n") });
    }
    blocks
}

fn defines(text: &str, name: &str) -> bool {
    locate_function(text, Language::CLike, name).is_ok() || locate_function(text, Language::PythonLike, name).is_ok()
}

/// True when `line` mentions `name` as an identifier directly followed by `(`.
fn looks_like_signature(line: &str, name: &str) -> bool {
    let bytes = line.as_bytes();
    line.match_indices(name).any(|(pos, _)| {
        let before_ok = pos == 0 || !is_ident_byte(bytes[pos - 1]);
        let rest = &line[pos + name.len()..];
        let after_ok = rest.bytes().next().is_none_or(|b| !is_ident_byte(b));
        before_ok && after_ok && rest.trim_start().starts_with('(')
    })
}

/// Picks the refined function from a response: the last fenced block that defines
/// `function_name`, or, without fences, the whole response when its first non-blank line
/// is a signature naming the function.
pub fn extract_function(response: &str, function_name: &str) -> Result<ExtractedPatch, ExtractError> {
    let blocks = fenced_blocks(response);
    if !blocks.is_empty() {
        return match blocks.iter().rev().find(|b| defines(&b.content, function_name)) {
            Some(block) => Ok(ExtractedPatch {
                body: PatchBody::WholeFunction { function_text: block.content.clone() },
                source_fence_language_tag: block.tag.clone(),
            }),
            None if blocks.len() > 1 => Err(ExtractError::AmbiguousWithoutName(function_name.to_string())),
            None => Err(ExtractError::NoFunctionFound(function_name.to_string())),
        };
    }
    let text = response.trim_end();
    let first = text.lines().position(|l| !l.trim().is_empty());
    match first {
        Some(i) if looks_like_signature(text.lines().nth(i).unwrap_or(""), function_name) && defines(text, function_name) => {
            let body: Vec<&str> = text.lines().skip(i).collect();
            Ok(ExtractedPatch {
                body: PatchBody::WholeFunction { function_text: body.join("\n") },
                source_fence_language_tag: None,
            })
        }
        _ => Err(ExtractError::NoFunctionFound(function_name.to_string())),
    }
}

fn last_block_containing<'a>(blocks: &'a [FencedBlock], marker: &str) -> Option<&'a FencedBlock> {
    blocks.iter().rev().find(|b| b.content.lines().any(|l| l.trim() == marker))
}

/// Parses SEARCH/REPLACE hunks from the last fenced block that has any (or the bare response).
pub fn extract_search_replace(response: &str) -> Result<ExtractedPatch, ExtractError> {
    let blocks = fenced_blocks(response);
    let (text, tag) = match last_block_containing(&blocks, SEARCH_MARKER) {
        Some(b) => (b.content.as_str(), b.tag.clone()),
        None if blocks.is_empty() => (response, None),
        None => return Err(ExtractError::NoHunksFound),
    };
    enum State {
        Outside,
        Search(Vec<String>),
        Replace(Vec<String>, Vec<String>),
    }
    let mut state = State::Outside;
    let mut replacements = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let marker = line.trim();
        state = match state {
            State::Outside if marker == SEARCH_MARKER => State::Search(Vec::new()),
            State::Outside => State::Outside,
            State::Search(anchor) if marker == DIVIDER_MARKER => State::Replace(anchor, Vec::new()),
            State::Search(_) if marker == SEARCH_MARKER || marker == REPLACE_MARKER => {
                return Err(ExtractError::MalformedHunks(format!("line {}: `{marker}` before `{DIVIDER_MARKER}`", n + 1)))
            }
            State::Search(mut anchor) => {
                anchor.push(line.to_string());
                State::Search(anchor)
            }
            State::Replace(anchor, replacement) if marker == REPLACE_MARKER => {
                if anchor.is_empty() {
                    return Err(ExtractError::MalformedHunks(format!("line {}: empty search section", n + 1)));
                }
                replacements.push(Replacement { anchor_lines: anchor, replacement_lines: replacement, at_line: None });
                State::Outside
            }
            State::Replace(_, _) if marker == SEARCH_MARKER || marker == DIVIDER_MARKER => {
                return Err(ExtractError::MalformedHunks(format!("line {}: unexpected `{marker}`", n + 1)))
            }
            State::Replace(anchor, mut replacement) => {
                replacement.push(line.to_string());
                State::Replace(anchor, replacement)
            }
        };
    }
    if !matches!(state, State::Outside) {
        return Err(ExtractError::MalformedHunks("unterminated hunk".into()));
    }
    if replacements.is_empty() {
        return Err(ExtractError::NoHunksFound);
    }
    Ok(ExtractedPatch { body: PatchBody::HunkSet { replacements }, source_fence_language_tag: tag })
}

/// Parses filled masks: each hunk starts with a mask-token line. `masked` gives, per mask in
/// order, the 1-based function line it replaced and the original lines.
pub fn extract_infills(response: &str, masked: &[(usize, Vec<String>)]) -> Result<ExtractedPatch, ExtractError> {
    let blocks = fenced_blocks(response);
    let (text, tag) = match last_block_containing(&blocks, MASK_TOKEN) {
        Some(b) => (b.content.as_str(), b.tag.clone()),
        None if blocks.is_empty() => (response, None),
        None => return Err(ExtractError::NoHunksFound),
    };
    let mut segments: Vec<Vec<String>> = Vec::new();
    for line in text.lines() {
        if line.trim() == MASK_TOKEN {
            segments.push(Vec::new());
        } else if let Some(seg) = segments.last_mut() {
            seg.push(line.to_string());
        }
    }
    if segments.is_empty() {
        return Err(ExtractError::NoHunksFound);
    }
    if segments.len() != masked.len() {
        return Err(ExtractError::HunkCountMismatch { expected: masked.len(), found: segments.len() });
    }
    let replacements = segments
        .into_iter()
        .zip(masked)
        .map(|(mut seg, (line, original))| {
            while seg.last().is_some_and(|l| l.trim().is_empty()) {
                seg.pop();
            }
            Replacement { anchor_lines: original.clone(), replacement_lines: seg, at_line: Some(*line) }
        })
        .collect();
    Ok(ExtractedPatch { body: PatchBody::HunkSet { replacements }, source_fence_language_tag: tag })
}

fn check_span(source: &str, span: FunctionSpan) -> Result<(), PatchError> {
    if span.is_valid_for(source) {
        Ok(())
    } else {
        Err(PatchError::SpanInvalid { start: span.start_offset, end: span.end_offset, len: source.len() })
    }
}

fn trailing_newlines(s: &str) -> usize {
    s.len() - s.trim_end_matches('\n').len()
}

/// Splices `new_function` over the span. The replacement's trailing newline run is resized
/// to the original span's; its text is otherwise kept verbatim.
pub fn apply_function_patch(
    source: &str,
    span: FunctionSpan,
    new_function: &str,
    file_label: &str,
) -> Result<AppliedPatch, PatchError> {
    check_span(source, span)?;
    let original = span.text(source);
    let mut replacement = new_function.trim_end_matches('\n').to_string();
    replacement.push_str(&"\n".repeat(trailing_newlines(original)));
    let mut patched = String::with_capacity(source.len() + replacement.len());
    patched.push_str(&source[..span.start_offset]);
    patched.push_str(&replacement);
    patched.push_str(&source[span.end_offset..]);
    let start_line = span.header_line;
    let touched = LineRange { start: start_line, end: start_line + replacement.trim_end_matches('\n').matches('\n').count() };
    Ok(AppliedPatch {
        diff_text: labeled_diff(source, &patched, file_label),
        patched_file_text: patched,
        touched_line_ranges: vec![touched],
    })
}

fn normalize_ws(line: &str) -> String {
    line.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn matches_at(lines: &[&str], at: usize, anchor: &[String], normalized: bool) -> bool {
    at + anchor.len() <= lines.len()
        && anchor.iter().zip(&lines[at..]).all(|(a, l)| if normalized { normalize_ws(a) == normalize_ws(l) } else { a == l })
}

fn find_anchor(lines: &[&str], index: usize, rep: &Replacement) -> Result<usize, PatchError> {
    if rep.anchor_lines.is_empty() {
        return Err(PatchError::AnchorNotFound(index));
    }
    if let Some(line) = rep.at_line {
        let at = line.checked_sub(1).ok_or(PatchError::AnchorNotFound(index))?;
        return if matches_at(lines, at, &rep.anchor_lines, false) || matches_at(lines, at, &rep.anchor_lines, true) {
            Ok(at)
        } else {
            Err(PatchError::AnchorNotFound(index))
        };
    }
    for normalized in [false, true] {
        let hits: Vec<usize> = (0..lines.len()).filter(|&at| matches_at(lines, at, &rep.anchor_lines, normalized)).collect();
        match hits.as_slice() {
            [] => continue,
            [at] => return Ok(*at),
            _ => return Err(PatchError::AnchorAmbiguous(index)),
        }
    }
    Err(PatchError::AnchorNotFound(index))
}

/// Applies anchored replacements inside the function span. Anchors are resolved against the
/// original function text; any failure leaves nothing applied.
pub fn apply_hunk_patch(
    source: &str,
    span: FunctionSpan,
    patch: &ExtractedPatch,
    file_label: &str,
) -> Result<AppliedPatch, PatchError> {
    check_span(source, span)?;
    let PatchBody::HunkSet { replacements } = &patch.body else {
        return Err(PatchError::NotAHunkSet);
    };
    let function = span.text(source);
    let lines: Vec<&str> = function.split('\n').collect();
    let mut located: Vec<(usize, usize)> = replacements
        .iter()
        .enumerate()
        .map(|(i, rep)| find_anchor(&lines, i, rep).map(|at| (at, i)))
        .collect::<Result<_, _>>()?;
    located.sort();
    for pair in located.windows(2) {
        let (at, i) = pair[0];
        if pair[1].0 < at + replacements[i].anchor_lines.len() {
            return Err(PatchError::AnchorsOverlap(i.min(pair[1].1), i.max(pair[1].1)));
        }
    }

    let mut out: Vec<String> = Vec::with_capacity(lines.len());
    let mut touched = Vec::new();
    let mut cursor = 0;
    for &(at, i) in &located {
        out.extend(lines[cursor..at].iter().map(|l| l.to_string()));
        let rep = &replacements[i];
        let start = span.header_line + out.len();
        touched.push(LineRange { start, end: start + rep.replacement_lines.len() - 1 });
        out.extend(rep.replacement_lines.iter().cloned());
        cursor = at + rep.anchor_lines.len();
    }
    out.extend(lines[cursor..].iter().map(|l| l.to_string()));
    let new_function = out.join("\n");

    let mut patched = String::with_capacity(source.len());
    patched.push_str(&source[..span.start_offset]);
    patched.push_str(&new_function);
    patched.push_str(&source[span.end_offset..]);
    Ok(AppliedPatch {
        diff_text: labeled_diff(source, &patched, file_label),
        patched_file_text: patched,
        touched_line_ranges: touched,
    })
}

fn labeled_diff(old: &str, new: &str, file_label: &str) -> String {
    unified_diff(old, new, &format!("a/{file_label}"), &format!("b/{file_label}"))
}

/// Standard unified diff with three context lines; empty when the inputs are identical.
pub fn unified_diff(old: &str, new: &str, label_old: &str, label_new: &str) -> String {
    if old == new {
        return String::new();
    }
    TextDiff::from_lines(old, new)
        .unified_diff()
        .context_radius(DIFF_CONTEXT)
        .header(label_old, label_new)
        .to_string()
}

/// Locates the function again in a patched file, for reference comparison.
pub fn patched_function(patched_file: &str, language: Language, name: &str, start_offset: usize) -> Option<String> {
    let lines = LineIndex::new(patched_file);
    let header = lines.line_of(start_offset.min(patched_file.len().saturating_sub(1)));
    crate::bug::locate_function_at(patched_file, language, name, Some(header))
        .or_else(|_| locate_function(patched_file, language, name))
        .ok()
        .map(|span| span.text(patched_file).to_string())
}
