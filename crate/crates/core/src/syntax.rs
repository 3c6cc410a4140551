//! Lexical classification of source bytes for the two supported syntax families.
//!
//! Structural scans (brace matching, indentation walking, comment stripping) never
//! look at raw text directly. They work on a per-byte [`Class`] map, so braces in
//! string literals or comments cannot confuse them.

use crate::bug::Language;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Class {
    Code,
    Comment,
    Literal,
}

/// Classifies every byte of `src`. Newlines that terminate line comments are `Code`.
pub fn classify(src: &str, language: Language) -> Vec<Class> {
    match language {
        Language::CLike => classify_c_like(src.as_bytes()),
        Language::PythonLike => classify_python(src.as_bytes()),
    }
}

/// Returns `src` with comment and literal bytes replaced by spaces. Newlines are kept,
/// so byte offsets and line numbers are preserved.
pub fn sanitize(src: &str, language: Language) -> Vec<u8> {
    let classes = classify(src, language);
    src.bytes()
        .zip(classes)
        .map(|(b, c)| match c {
            Class::Code => b,
            _ if b == b'\n' => b'\n',
            _ => b' ',
        })
        .collect()
}

/// Removes comment bytes, keeping code and literals verbatim.
pub fn strip_comments(src: &str, language: Language) -> String {
    let classes = classify(src, language);
    let kept: Vec<u8> = src
        .bytes()
        .zip(classes)
        .filter(|(b, c)| *c != Class::Comment || *b == b'\n')
        .map(|(b, _)| b)
        .collect();
    // Comment boundaries always fall on ASCII bytes, so UTF-8 stays intact.
    String::from_utf8(kept).unwrap_or_default()
}

pub(crate) fn is_ident_byte(b: u8) -> bool {
    b.is_ascii_alphanumeric() || b == b'_' || b >= 0x80
}

fn fill(out: &mut [Class], from: usize, to: usize, class: Class) {
    for c in &mut out[from..to] {
        *c = class;
    }
}

/// Scans a quoted literal starting at the opening quote; returns the index one past the
/// closing quote, or the index of the terminating newline/EOF for unterminated literals.
fn scan_quoted(s: &[u8], start: usize, quote: u8) -> usize {
    let mut i = start + 1;
    while i < s.len() {
        match s[i] {
            b'\\' => i += 2,
            b'\n' => return i,
            b if b == quote => return i + 1,
            _ => i += 1,
        }
    }
    s.len()
}

fn find(s: &[u8], from: usize, needle: &[u8]) -> Option<usize> {
    if from > s.len() {
        return None;
    }
    s[from..]
        .windows(needle.len())
        .position(|w| w == needle)
        .map(|p| p + from)
}

fn classify_c_like(s: &[u8]) -> Vec<Class> {
    let mut out = vec![Class::Code; s.len()];
    let mut i = 0;
    while i < s.len() {
        let b = s[i];
        let next = s.get(i + 1).copied();
        if b == b'/' && next == Some(b'/') {
            let end = find(s, i, b"\n").unwrap_or(s.len());
            fill(&mut out, i, end, Class::Comment);
            i = end;
        } else if b == b'/' && next == Some(b'*') {
            let end = find(s, i + 2, b"*/").map_or(s.len(), |p| p + 2);
            fill(&mut out, i, end, Class::Comment);
            i = end;
        } else if b == b'"' {
            let end = if i > 0 && s[i - 1] == b'R' {
                raw_string_end(s, i)
            } else if s[i..].starts_with(b"\"\"\"") {
                find(s, i + 3, b"\"\"\"").map_or(s.len(), |p| p + 3)
            } else {
                scan_quoted(s, i, b'"')
            };
            fill(&mut out, i, end, Class::Literal);
            i = end.max(i + 1);
        } else if b == b'\'' {
            let digit_separator = i > 0
                && s[i - 1].is_ascii_hexdigit()
                && next.is_some_and(|n| n.is_ascii_hexdigit());
            if digit_separator {
                i += 1;
                continue;
            }
            let end = scan_quoted(s, i, b'\'');
            fill(&mut out, i, end, Class::Literal);
            i = end.max(i + 1);
        } else {
            i += 1;
        }
    }
    out
}

/// C++ raw string `R"delim( ... )delim"`, `start` at the opening quote.
fn raw_string_end(s: &[u8], start: usize) -> usize {
    let Some(open) = find(s, start + 1, b"(") else {
        return scan_quoted(s, start, b'"');
    };
    let delim = &s[start + 1..open];
    if delim.len() > 16 || delim.iter().any(|b| b.is_ascii_whitespace()) {
        return scan_quoted(s, start, b'"');
    }
    let mut closing = Vec::with_capacity(delim.len() + 2);
    closing.push(b')');
    closing.extend_from_slice(delim);
    closing.push(b'"');
    find(s, open + 1, &closing).map_or(s.len(), |p| p + closing.len())
}

fn classify_python(s: &[u8]) -> Vec<Class> {
    let mut out = vec![Class::Code; s.len()];
    let mut i = 0;
    while i < s.len() {
        let b = s[i];
        if b == b'#' {
            let end = find(s, i, b"\n").unwrap_or(s.len());
            fill(&mut out, i, end, Class::Comment);
            i = end;
        } else if b == b'"' || b == b'\'' {
            let triple = [b, b, b];
            let end = if s[i..].starts_with(&triple) {
                triple_quoted_end(s, i + 3, &triple)
            } else {
                scan_quoted(s, i, b)
            };
            fill(&mut out, i, end, Class::Literal);
            i = end.max(i + 1);
        } else {
            i += 1;
        }
    }
    out
}

fn triple_quoted_end(s: &[u8], mut i: usize, triple: &[u8; 3]) -> usize {
    while i < s.len() {
        if s[i] == b'\\' {
            i += 2;
        } else if s[i..].starts_with(triple) {
            return i + 3;
        } else {
            i += 1;
        }
    }
    s.len()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sanitized(src: &str, lang: Language) -> String {
        String::from_utf8(sanitize(src, lang)).unwrap()
    }

    #[test]
    fn c_like_literals_and_comments_are_blanked() {
        let src = "a = \"}\"; b = '}'; // }\n/* { */ c";
        assert_eq!(sanitized(src, Language::CLike), "a =    ; b =    ;     \n        c");
    }

    #[test]
    fn escaped_quote_inside_string() {
        let src = r#"s = "\"}\""; x"#;
        assert_eq!(sanitized(src, Language::CLike), "s =        ; x");
    }

    #[test]
    fn raw_string_and_text_block() {
        let src = "R\"x(})\")x\" y \"\"\"\n}\n\"\"\" z";
        let out = sanitized(src, Language::CLike);
        assert!(!out.contains('}'));
        assert!(out.ends_with(" y    \n \n    z"));
    }

    #[test]
    fn digit_separator_is_not_a_char_literal() {
        let src = "int n = 1'000'000; char c = '{';";
        assert_eq!(sanitized(src, Language::CLike), "int n = 1'000'000; char c =    ;");
    }

    #[test]
    fn python_triple_quotes_and_comments() {
        let src = "def f():\n    \"\"\"doc\n}\"\"\"  # c\n    return '#'\n";
        let out = sanitized(src, Language::PythonLike);
        assert_eq!(out, "def f():\n          \n         \n    return    \n");
    }

    #[test]
    fn strip_comments_keeps_literals() {
        let src = "x = 1 // one\ny = \"//\" /* two */;";
        assert_eq!(strip_comments(src, Language::CLike), "x = 1 \ny = \"//\" ;");
        assert_eq!(strip_comments("a = 1  # n\nb = '#'", Language::PythonLike), "a = 1  \nb = '#'");
    }
}
