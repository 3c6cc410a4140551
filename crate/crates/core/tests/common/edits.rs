//! Generated files with one function span, and an independent unified-diff applier used as
//! the oracle for diff output.

use d4c_core::FunctionSpan;
use proptest::prelude::*;

/// A file split into the lines before, inside and after one function.
#[derive(Debug, Clone)]
pub struct Layout {
    pub prefix: Vec<String>,
    pub function: Vec<String>,
    pub suffix: Vec<String>,
    pub final_newline: bool,
}

impl Layout {
    pub fn source(&self) -> String {
        let mut lines: Vec<&str> = Vec::new();
        lines.extend(self.prefix.iter().map(String::as_str));
        lines.extend(self.function.iter().map(String::as_str));
        lines.extend(self.suffix.iter().map(String::as_str));
        let mut s = lines.join("\n");
        if self.final_newline {
            s.push('\n');
        }
        s
    }

    pub fn span(&self) -> FunctionSpan {
        let start: usize = self.prefix.iter().map(|l| l.len() + 1).sum();
        let mut end = start + self.function.iter().map(|l| l.len() + 1).sum::<usize>();
        if self.suffix.is_empty() && !self.final_newline {
            end -= 1;
        }
        FunctionSpan { start_offset: start, end_offset: end, header_line: self.prefix.len() + 1 }
    }
}

// A small alphabet makes repeated lines common, which is where diff alignment gets tricky.
pub fn line() -> impl Strategy<Value = String> {
    "[ab{} ]{0,5}x?"
}

pub fn layout() -> impl Strategy<Value = Layout> {
    (
        prop::collection::vec(line(), 0..6),
        prop::collection::vec("[a-z]{1,4}[ab{} ]{0,5}", 1..8),
        prop::collection::vec(line(), 0..6),
        any::<bool>(),
    )
        .prop_map(|(prefix, function, suffix, final_newline)| Layout { prefix, function, suffix, final_newline })
}

/// Applies a unified diff written by any standard tool. Panics on malformed input or on a
/// context line that does not match.
pub fn apply_unified(old: &str, diff: &str) -> String {
    let old_lines: Vec<&str> = old.split_inclusive('\n').collect();
    let mut out = String::new();
    let mut cursor = 0;
    let mut lines = diff.split_inclusive('\n').peekable();
    while let Some(l) = lines.next() {
        if l.starts_with("---") || l.starts_with("+++") {
            continue;
        }
        let header = l.strip_prefix("@@ -").expect("hunk header");
        let old_range = header.split(' ').next().unwrap();
        let mut parts = old_range.split(',');
        let start: usize = parts.next().unwrap().parse().unwrap();
        let count: usize = parts.next().map_or(1, |c| c.parse().unwrap());
        let first = if count == 0 { start } else { start - 1 };
        for kept in &old_lines[cursor..first] {
            out.push_str(kept);
        }
        cursor = first;

        let mut body: Vec<(char, String)> = Vec::new();
        while let Some(&next) = lines.peek() {
            if next.starts_with("@@") {
                break;
            }
            lines.next();
            if next.starts_with('\\') {
                body.last_mut().expect("marker follows a line").1.pop();
                continue;
            }
            let mut chars = next.chars();
            let kind = chars.next().unwrap();
            body.push((kind, chars.as_str().to_string()));
        }
        for (kind, text) in body {
            match kind {
                ' ' | '-' => {
                    assert_eq!(old_lines[cursor], text, "context mismatch at old line {}", cursor + 1);
                    cursor += 1;
                    if kind == ' ' {
                        out.push_str(&text);
                    }
                }
                '+' => out.push_str(&text),
                other => panic!("unexpected diff line kind {other:?}"),
            }
        }
    }
    for kept in &old_lines[cursor..] {
        out.push_str(kept);
    }
    out
}
