//! Bug bundles: the on-disk manifest, the in-memory [`BugInstance`], bundle validation and
//! the function locator that turns a function name into an exact byte span.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::syntax::{self, is_ident_byte};

/// File name of the bundle manifest, at the bundle root.
pub const MANIFEST_FILE: &str = "bug.json";

/// Function syntax family of a bundle's target file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Language {
    /// Brace-delimited bodies (C, C++, Java).
    CLike,
    /// Indentation-delimited bodies (Python).
    PythonLike,
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Language::CLike => "c_like",
            Language::PythonLike => "python_like",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestCase {
    pub name: String,
    pub input_repr: String,
    pub expected_output_repr: String,
}

/// A 1-based, inclusive line range relative to the target file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HunkSpec {
    pub start_line: usize,
    pub end_line: usize,
}

/// Byte span of one function definition inside a file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionSpan {
    pub start_offset: usize,
    /// Exclusive.
    pub end_offset: usize,
    /// 1-based line of `start_offset`.
    pub header_line: usize,
}

impl FunctionSpan {
    pub fn text<'a>(&self, source: &'a str) -> &'a str {
        &source[self.start_offset..self.end_offset]
    }

    /// Number of the last line covered by the span (1-based).
    pub fn last_line(&self, source: &str) -> usize {
        self.header_line + self.text(source).matches('\n').count()
    }

    pub fn is_valid_for(&self, source: &str) -> bool {
        self.start_offset < self.end_offset
            && self.end_offset <= source.len()
            && source.is_char_boundary(self.start_offset)
            && source.is_char_boundary(self.end_offset)
    }
}

/// One repairable bug.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BugInstance {
    pub id: String,
    pub language: Language,
    pub source_root: PathBuf,
    pub target_file: PathBuf,
    pub function_name: String,
    /// Picks among several definitions of `function_name`.
    pub header_line: Option<usize>,
    pub doc_text: Option<String>,
    pub failed_tests: Vec<TestCase>,
    pub error_messages: Vec<String>,
    pub test_command: String,
    pub known_hunks: Option<Vec<HunkSpec>>,
    pub reference_fix: Option<String>,
    /// Per-bundle override of the validation timeout.
    pub timeout_seconds: Option<u64>,
}

impl BugInstance {
    pub fn target_path(&self) -> PathBuf {
        self.source_root.join(&self.target_file)
    }

    pub fn read_source(&self) -> Result<String, BundleError> {
        let path = self.target_path();
        fs::read_to_string(&path).map_err(|_| BundleError::SourceFileMissing(path))
    }

    pub fn locate(&self, source: &str) -> Result<FunctionSpan, LocateError> {
        locate_function_at(source, self.language, &self.function_name, self.header_line)
    }

    /// Manifest document equivalent to this instance.
    pub fn to_manifest(&self) -> Manifest {
        Manifest {
            id: self.id.clone(),
            language: self.language,
            target_file: self.target_file.to_string_lossy().into_owned(),
            function_name: self.function_name.clone(),
            header_line: self.header_line,
            doc_text: self.doc_text.clone(),
            failed_tests: (!self.failed_tests.is_empty()).then(|| {
                self.failed_tests
                    .iter()
                    .map(|t| ManifestTest {
                        name: t.name.clone(),
                        input: t.input_repr.clone(),
                        expected: t.expected_output_repr.clone(),
                    })
                    .collect()
            }),
            error_messages: (!self.error_messages.is_empty()).then(|| self.error_messages.clone()),
            test_command: self.test_command.clone(),
            known_hunks: self.known_hunks.clone(),
            reference_fix: self.reference_fix.clone(),
            timeout_seconds: self.timeout_seconds,
        }
    }
}

/// `bug.json` as stored on disk.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub id: String,
    pub language: Language,
    pub target_file: String,
    pub function_name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub header_line: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub doc_text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failed_tests: Option<Vec<ManifestTest>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_messages: Option<Vec<String>>,
    pub test_command: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub known_hunks: Option<Vec<HunkSpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_fix: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timeout_seconds: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestTest {
    pub name: String,
    pub input: String,
    pub expected: String,
}

impl Manifest {
    pub fn parse(text: &str) -> Result<Self, BundleError> {
        let manifest: Manifest = serde_json::from_str(text).map_err(|e| {
            let message = e.to_string();
            let field = regex::Regex::new(r"field `([^`]+)`")
                .ok()
                .and_then(|re| re.captures(&message).map(|c| c[1].to_string()))
                .unwrap_or_else(|| "<document>".to_string());
            BundleError::ManifestMalformed { field, reason: message }
        })?;
        let malformed = |field: &str, reason: &str| BundleError::ManifestMalformed {
            field: field.to_string(),
            reason: reason.to_string(),
        };
        if manifest.id.trim().is_empty() {
            return Err(malformed("id", "must be nonempty"));
        }
        if manifest.function_name.trim().is_empty() {
            return Err(malformed("function_name", "must be nonempty"));
        }
        if manifest.target_file.trim().is_empty() {
            return Err(malformed("target_file", "must be nonempty"));
        }
        if Path::new(&manifest.target_file).is_absolute() {
            return Err(malformed("target_file", "must be relative to the bundle root"));
        }
        if manifest.test_command.trim().is_empty() {
            return Err(malformed("test_command", "must be nonempty"));
        }
        if let Some(t) = manifest.failed_tests.iter().flatten().find(|t| t.name.is_empty()) {
            return Err(malformed("failed_tests", &format!("test with input {:?} has an empty name", t.input)));
        }
        if manifest.timeout_seconds == Some(0) {
            return Err(malformed("timeout_seconds", "must be positive"));
        }
        Ok(manifest)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    fn into_instance(self, root: &Path) -> BugInstance {
        BugInstance {
            id: self.id,
            language: self.language,
            source_root: root.to_path_buf(),
            target_file: PathBuf::from(self.target_file),
            function_name: self.function_name,
            header_line: self.header_line,
            doc_text: self.doc_text,
            failed_tests: self
                .failed_tests
                .unwrap_or_default()
                .into_iter()
                .map(|t| TestCase { name: t.name, input_repr: t.input, expected_output_repr: t.expected })
                .collect(),
            error_messages: self.error_messages.unwrap_or_default(),
            test_command: self.test_command,
            known_hunks: self.known_hunks,
            reference_fix: self.reference_fix,
            timeout_seconds: self.timeout_seconds,
        }
    }
}

#[derive(Debug, Error)]
pub enum BundleError {
    #[error("no {MANIFEST_FILE} in bundle {0}")]
    ManifestMissing(PathBuf),
    #[error("malformed manifest field `{field}`: {reason}")]
    ManifestMalformed { field: String, reason: String },
    #[error("source file missing: {0}")]
    SourceFileMissing(PathBuf),
    #[error("cannot read corpus directory {path}: {source}")]
    CorpusUnreadable {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Loads one bundle directory.
pub fn load_bundle(path: &Path) -> Result<BugInstance, BundleError> {
    let manifest_path = path.join(MANIFEST_FILE);
    let text = fs::read_to_string(&manifest_path).map_err(|_| BundleError::ManifestMissing(path.to_path_buf()))?;
    let manifest = Manifest::parse(&text)?;
    let root = fs::canonicalize(path).unwrap_or_else(|_| path.to_path_buf());
    let bug = manifest.into_instance(&root);
    let target = bug.target_path();
    if !target.is_file() {
        return Err(BundleError::SourceFileMissing(target));
    }
    Ok(bug)
}

/// Loads every immediate subdirectory of `dir` that carries a manifest, sorted by directory name.
pub fn load_corpus(dir: &Path) -> Result<Vec<BugInstance>, BundleError> {
    let entries = fs::read_dir(dir).map_err(|source| BundleError::CorpusUnreadable { path: dir.to_path_buf(), source })?;
    let mut dirs: Vec<PathBuf> = entries
        .filter_map(Result::ok)
        .map(|e| e.path())
        .filter(|p| p.join(MANIFEST_FILE).is_file())
        .collect();
    dirs.sort();
    dirs.iter().map(|d| load_bundle(d)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Issue {
    pub severity: Severity,
    pub message: String,
}

impl Issue {
    fn error(message: impl Into<String>) -> Self {
        Issue { severity: Severity::Error, message: message.into() }
    }
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{tag}: {}", self.message)
    }
}

/// Checks every bundle invariant. An empty list means the bundle is well formed.
pub fn validate_bundle(bug: &BugInstance) -> Vec<Issue> {
    let mut issues = Vec::new();
    if bug.id.trim().is_empty() {
        issues.push(Issue::error("id is empty"));
    }
    if bug.function_name.trim().is_empty() {
        issues.push(Issue::error("function_name is empty"));
    }
    if bug.failed_tests.iter().any(|t| t.name.is_empty()) {
        issues.push(Issue::error("a failed test has an empty name"));
    }
    let source = match bug.read_source() {
        Ok(s) => s,
        Err(_) => {
            issues.push(Issue::error(format!("target file {} does not exist", bug.target_file.display())));
            return issues;
        }
    };
    let span = match bug.locate(&source) {
        Ok(span) => span,
        Err(LocateError::FunctionNotFound(_)) => {
            issues.push(Issue::error(format!("function not found: {}", bug.function_name)));
            return issues;
        }
        Err(e) => {
            issues.push(Issue::error(format!("function {} cannot be located: {e}", bug.function_name)));
            return issues;
        }
    };
    let first = span.header_line;
    let last = span.last_line(&source);
    for (index, hunk) in bug.known_hunks.iter().flatten().enumerate() {
        if hunk.start_line == 0 || hunk.start_line > hunk.end_line {
            issues.push(Issue::error(format!(
                "hunk {index} has an invalid line range {}..={}",
                hunk.start_line, hunk.end_line
            )));
        } else if hunk.start_line < first || hunk.end_line > last {
            issues.push(Issue::error(format!(
                "hunk {index} (lines {}..={}) lies outside the function span (lines {first}..={last})",
                hunk.start_line, hunk.end_line
            )));
        }
    }
    issues
}

/// Adds corpus-level checks (unique ids) to the per-bundle issues. Returns `(bug id, issue)` pairs.
pub fn validate_corpus(bugs: &[BugInstance]) -> Vec<(String, Issue)> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for bug in bugs {
        if !seen.insert(bug.id.as_str()) {
            out.push((bug.id.clone(), Issue::error(format!("duplicate bug id {}", bug.id))));
        }
        out.extend(validate_bundle(bug).into_iter().map(|i| (bug.id.clone(), i)));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LocateError {
    #[error("function `{0}` not found")]
    FunctionNotFound(String),
    #[error("unbalanced delimiters: file ends before the definition of `{0}` closes")]
    UnbalancedDelimiters(String),
}

/// Locates the first definition of `function_name`.
pub fn locate_function(source: &str, language: Language, function_name: &str) -> Result<FunctionSpan, LocateError> {
    locate_function_at(source, language, function_name, None)
}

/// Like [`locate_function`], but when `header_line` is given, picks the definition whose
/// span starts on that line or whose name appears on it.
pub fn locate_function_at(
    source: &str,
    language: Language,
    function_name: &str,
    header_line: Option<usize>,
) -> Result<FunctionSpan, LocateError> {
    if function_name.is_empty() {
        return Err(LocateError::FunctionNotFound(String::new()));
    }
    let lines = LineIndex::new(source);
    let defs: Box<dyn Iterator<Item = Result<Definition, LocateError>>> = match language {
        Language::CLike => Box::new(c_like::definitions(source, function_name, &lines)),
        Language::PythonLike => Box::new(python_like::definitions(source, function_name, &lines)),
    };
    for def in defs {
        let def = def?;
        let span = FunctionSpan {
            start_offset: def.start,
            end_offset: def.end,
            header_line: lines.line_of(def.start),
        };
        match header_line {
            None => return Ok(span),
            Some(h) if h == span.header_line || h == lines.line_of(def.name_offset) => return Ok(span),
            Some(_) => {}
        }
    }
    Err(LocateError::FunctionNotFound(function_name.to_string()))
}

struct Definition {
    start: usize,
    end: usize,
    name_offset: usize,
}

/// Byte offsets of line starts.
pub(crate) struct LineIndex {
    starts: Vec<usize>,
    len: usize,
}

impl LineIndex {
    pub(crate) fn new(source: &str) -> Self {
        let mut starts = vec![0];
        starts.extend(source.bytes().enumerate().filter(|(_, b)| *b == b'\n').map(|(i, _)| i + 1));
        LineIndex { starts, len: source.len() }
    }

    /// 1-based line number containing `offset`.
    pub(crate) fn line_of(&self, offset: usize) -> usize {
        self.starts.partition_point(|&s| s <= offset)
    }

    pub(crate) fn count(&self) -> usize {
        self.starts.len()
    }

    /// Byte range of 1-based `line`, excluding its newline.
    pub(crate) fn range(&self, line: usize) -> (usize, usize) {
        let start = self.starts[line - 1];
        let end = self.starts.get(line).map_or(self.len, |next| next - 1);
        (start, end)
    }
}

fn name_occurrences<'a>(code: &'a [u8], name: &'a str) -> impl Iterator<Item = usize> + 'a {
    let needle = name.as_bytes();
    let mut from = 0;
    std::iter::from_fn(move || {
        while from + needle.len() <= code.len() {
            let pos = code[from..].windows(needle.len()).position(|w| w == needle)? + from;
            from = pos + 1;
            let before_ok = pos == 0 || !is_ident_byte(code[pos - 1]);
            let after_ok = code.get(pos + needle.len()).is_none_or(|&b| !is_ident_byte(b));
            if before_ok && after_ok {
                return Some(pos);
            }
        }
        None
    })
}

mod c_like {
    use super::*;

    pub(super) fn definitions<'a>(
        source: &'a str,
        name: &'a str,
        lines: &'a LineIndex,
    ) -> impl Iterator<Item = Result<Definition, LocateError>> + 'a {
        let code = syntax::sanitize(source, Language::CLike);
        let candidates: Vec<usize> = name_occurrences(&code, name).collect();
        let mut done = false;
        candidates.into_iter().filter_map(move |pos| {
            if done {
                return None;
            }
            let open_brace = body_open(&code, pos, name.len(), lines)?;
            let Some(close) = matching(&code, open_brace, b'{', b'}') else {
                done = true;
                return Some(Err(LocateError::UnbalancedDelimiters(name.to_string())));
            };
            Some(Ok(Definition { start: signature_start(&code, pos, lines), end: close + 1, name_offset: pos }))
        })
    }

    /// Index of the body-opening brace if the name at `pos` starts a definition.
    fn body_open(code: &[u8], pos: usize, name_len: usize, lines: &LineIndex) -> Option<usize> {
        let (line_start, _) = lines.range(lines.line_of(pos));
        if code[line_start..pos].trim_ascii_start().first() == Some(&b'#') {
            return None;
        }
        if preceding_word(code, pos) == Some(b"new".as_slice()) {
            return None;
        }
        let mut i = skip_ws(code, pos + name_len);
        if code.get(i) != Some(&b'(') {
            return None;
        }
        i = matching(code, i, b'(', b')')? + 1;
        loop {
            i = skip_ws(code, i);
            match *code.get(i)? {
                b'{' => return Some(i),
                b'(' => i = matching(code, i, b'(', b')')? + 1,
                b if is_ident_byte(b) => i += 1,
                b':' | b',' | b'&' | b'*' | b'<' | b'>' | b'-' | b'[' | b']' | b'.' => i += 1,
                _ => return None,
            }
        }
    }

    fn preceding_word(code: &[u8], pos: usize) -> Option<&[u8]> {
        let end = code[..pos].iter().rposition(|b| !b.is_ascii_whitespace())? + 1;
        let start = code[..end].iter().rposition(|&b| !is_ident_byte(b)).map_or(0, |p| p + 1);
        Some(&code[start..end])
    }

    fn skip_ws(code: &[u8], mut i: usize) -> usize {
        while code.get(i).is_some_and(|b| b.is_ascii_whitespace()) {
            i += 1;
        }
        i
    }

    pub(super) fn matching(code: &[u8], open_at: usize, open: u8, close: u8) -> Option<usize> {
        let mut depth = 0usize;
        for (i, &b) in code.iter().enumerate().skip(open_at) {
            if b == open {
                depth += 1;
            } else if b == close {
                depth -= 1;
                if depth == 0 {
                    return Some(i);
                }
            }
        }
        None
    }

    /// Start of the signature: the name's line (or just after an earlier statement on the same
    /// line), extended upward over annotation and split return-type lines.
    fn signature_start(code: &[u8], pos: usize, lines: &LineIndex) -> usize {
        let line = lines.line_of(pos);
        let (line_start, _) = lines.range(line);
        if let Some(p) = code[line_start..pos].iter().rposition(|&b| matches!(b, b';' | b'}' | b'{')) {
            let after = line_start + p + 1;
            return after + code[after..pos].iter().take_while(|b| b.is_ascii_whitespace()).count();
        }
        let mut start_line = line;
        while start_line > 1 {
            let (s, e) = lines.range(start_line - 1);
            if !is_prefix_line(code[s..e].trim_ascii()) {
                break;
            }
            start_line -= 1;
        }
        lines.range(start_line).0
    }

    fn is_prefix_line(t: &[u8]) -> bool {
        let Some(&last) = t.last() else { return false };
        if t[0] == b'@' {
            return true;
        }
        if t[0] == b'#' || t.iter().any(|b| matches!(b, b';' | b'{' | b'}' | b'(' | b')' | b'=')) {
            return false;
        }
        is_ident_byte(last) || matches!(last, b'*' | b'&' | b'>')
    }
}

mod python_like {
    use super::*;
    use crate::syntax::Class;

    struct LineInfo {
        /// Line begins a logical line (not inside brackets or a string).
        logical_start: bool,
        /// Nothing but whitespace in the original text.
        blank: bool,
        /// Nothing but whitespace after removing comments and literals.
        code_blank: bool,
        indent: usize,
    }

    fn analyze(source: &str, code: &[u8], lines: &LineIndex) -> Vec<LineInfo> {
        let classes = syntax::classify(source, Language::PythonLike);
        let mut depth: i64 = 0;
        let mut continued = false;
        let mut out = Vec::with_capacity(lines.count());
        for line in 1..=lines.count() {
            let (s, e) = lines.range(line);
            // A line whose newline sits inside a literal continues a triple-quoted string.
            let in_string = s > 0 && classes[s - 1] == Class::Literal;
            let raw = &source.as_bytes()[s..e];
            out.push(LineInfo {
                logical_start: depth == 0 && !in_string && !continued,
                blank: raw.trim_ascii().is_empty(),
                code_blank: code[s..e].trim_ascii().is_empty(),
                indent: raw.iter().take_while(|b| **b == b' ' || **b == b'\t').count(),
            });
            for &b in &code[s..e] {
                match b {
                    b'(' | b'[' | b'{' => depth += 1,
                    b')' | b']' | b'}' => depth = (depth - 1).max(0),
                    _ => {}
                }
            }
            continued = code[s..e].trim_ascii_end().last() == Some(&b'\\');
        }
        out
    }

    pub(super) fn definitions<'a>(
        source: &'a str,
        name: &'a str,
        lines: &'a LineIndex,
    ) -> impl Iterator<Item = Result<Definition, LocateError>> + 'a {
        let code = syntax::sanitize(source, Language::PythonLike);
        let info = analyze(source, &code, lines);
        let pattern = regex::bytes::Regex::new(&format!(r"^[ \t]*(?:async[ \t]+)?def[ \t]+{}[ \t]*\(", regex::escape(name)))
            .expect("valid pattern");
        let sig_lines: Vec<usize> = (1..=lines.count())
            .filter(|&l| {
                let (s, e) = lines.range(l);
                info[l - 1].logical_start && pattern.is_match(&code[s..e])
            })
            .collect();
        let mut done = false;
        sig_lines.into_iter().filter_map(move |sig| {
            if done {
                return None;
            }
            let result = definition_at(source, &code, lines, &info, sig, name);
            if result.is_err() {
                done = true;
            }
            Some(result)
        })
    }

    fn definition_at(
        source: &str,
        code: &[u8],
        lines: &LineIndex,
        info: &[LineInfo],
        sig: usize,
        name: &str,
    ) -> Result<Definition, LocateError> {
        let sig_indent = info[sig - 1].indent;
        let (sig_start, _) = lines.range(sig);
        let name_offset = sig_start + source[sig_start..].find(name).unwrap_or(0);

        // The signature may span several physical lines; find the closing paren, then the colon.
        let open = sig_start + code[sig_start..].iter().position(|&b| b == b'(').unwrap_or(0);
        let close = super::c_like::matching(code, open, b'(', b')')
            .ok_or_else(|| LocateError::UnbalancedDelimiters(name.to_string()))?;
        let colon = close
            + code[close..]
                .iter()
                .position(|&b| b == b':')
                .ok_or_else(|| LocateError::UnbalancedDelimiters(name.to_string()))?;
        let header_end_line = lines.line_of(colon);
        let (_, header_end) = lines.range(header_end_line);
        let mut last = header_end_line;
        let inline_body = !code[colon + 1..header_end].trim_ascii().is_empty();
        if !inline_body {
            for line in header_end_line + 1..=lines.count() {
                let li = &info[line - 1];
                if li.blank {
                    continue;
                }
                if !li.logical_start {
                    last = line;
                    continue;
                }
                if li.code_blank {
                    // Comment-only lines never close a block, but only count when indented into it.
                    if li.indent > sig_indent {
                        last = line;
                    }
                    continue;
                }
                if li.indent <= sig_indent {
                    break;
                }
                last = line;
            }
        }

        let mut start_line = sig;
        while start_line > 1 {
            let prev = &info[start_line - 2];
            let (s, e) = lines.range(start_line - 1);
            if prev.logical_start && prev.indent == sig_indent && code[s..e].trim_ascii_start().first() == Some(&b'@') {
                start_line -= 1;
            } else {
                break;
            }
        }
        Ok(Definition { start: lines.range(start_line).0, end: lines.range(last).1, name_offset })
    }
}
