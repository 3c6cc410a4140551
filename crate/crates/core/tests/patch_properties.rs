//! Splice and diff invariants over generated files, checked against an independent
//! unified-diff applier.

mod common;

use common::edits::{apply_unified, layout, line, Layout};
use d4c_core::patch::{ExtractedPatch, PatchBody, Replacement};
use d4c_core::{apply_function_patch, apply_hunk_patch, unified_diff};
use proptest::prelude::*;

fn trailing_newlines(s: &str) -> usize {
    s.len() - s.trim_end_matches('\n').len()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn identity_splice_is_neutral(layout in layout()) {
        let source = layout.source();
        let span = layout.span();
        let applied = apply_function_patch(&source, span, span.text(&source), "f.c").unwrap();
        prop_assert_eq!(&applied.patched_file_text, &source);
        prop_assert_eq!(applied.diff_text, "");
    }

    #[test]
    fn function_splice_only_touches_the_span(layout in layout(), new_body in prop::collection::vec(line(), 1..6)) {
        let source = layout.source();
        let span = layout.span();
        let new_function = new_body.join("\n") + "\n";
        let applied = apply_function_patch(&source, span, &new_function, "f.c").unwrap();
        let patched = &applied.patched_file_text;

        let mut expected = source[..span.start_offset].to_string();
        expected.push_str(new_function.trim_end_matches('\n'));
        expected.push_str(&"\n".repeat(trailing_newlines(span.text(&source))));
        expected.push_str(&source[span.end_offset..]);
        prop_assert_eq!(patched, &expected);
    }

    #[test]
    fn diff_replays_to_the_patched_file(layout in layout(), new_body in prop::collection::vec(line(), 1..6)) {
        let source = layout.source();
        let span = layout.span();
        let applied = apply_function_patch(&source, span, &new_body.join("\n"), "f.c").unwrap();
        prop_assert_eq!(applied.diff_text.is_empty(), applied.patched_file_text == source);
        prop_assert_eq!(apply_unified(&source, &applied.diff_text), applied.patched_file_text);
    }

    #[test]
    fn diff_roundtrip_on_arbitrary_texts(a in "[ab\n]{0,40}", b in "[ab\n]{0,40}") {
        prop_assert_eq!(apply_unified(&a, &unified_diff(&a, &b, "a/x", "b/x")), b);
    }

    #[test]
    fn hunk_patch_is_local(
        layout in layout(),
        pick in any::<prop::sample::Index>(),
        replacement in prop::collection::vec(line(), 1..4),
    ) {
        let source = layout.source();
        let span = layout.span();
        let k = pick.index(layout.function.len());
        let patch = ExtractedPatch {
            body: PatchBody::HunkSet {
                replacements: vec![Replacement {
                    anchor_lines: vec![layout.function[k].clone()],
                    replacement_lines: replacement.clone(),
                    at_line: Some(k + 1),
                }],
            },
            source_fence_language_tag: None,
        };
        let applied = apply_hunk_patch(&source, span, &patch, "f.c").unwrap();

        let mut function = layout.function.clone();
        function.splice(k..=k, replacement.iter().cloned());
        let expected = Layout { function, ..layout.clone() }.source();
        prop_assert_eq!(&applied.patched_file_text, &expected);

        let start = span.header_line + k;
        prop_assert_eq!(applied.touched_line_ranges.len(), 1);
        prop_assert_eq!(applied.touched_line_ranges[0].start, start);
        prop_assert_eq!(applied.touched_line_ranges[0].end, start + replacement.len() - 1);
        prop_assert_eq!(apply_unified(&source, &applied.diff_text), applied.patched_file_text);
    }
}

#[test]
fn applier_honours_missing_newline_marker() {
    let diff = unified_diff("a\nb", "a\nc", "a/x", "b/x");
    assert!(diff.contains("\\ No newline at end of file"));
    assert_eq!(apply_unified("a\nb", &diff), "a\nc");
}
