//! Byte-exact prompt fixtures for every mini-corpus bug, format and render mode.
//! Set `UPDATE_GOLDEN=1` to rewrite them after an intended change.

mod common;

use std::fs;

use common::{fixture, mini_corpus};
use d4c_core::repair::prompt_file_name;
use d4c_core::report::default_exemplar;
use d4c_core::{build_report, render_prompt, PromptFormat, RenderMode};

const MODES: [RenderMode; 2] = [RenderMode::Chat, RenderMode::TextCompletion];

#[test]
fn prompts_match_golden_files() {
    let dir = fixture("golden/prompts");
    let update = std::env::var_os("UPDATE_GOLDEN").is_some();
    let mut checked = 0;
    for bug in mini_corpus() {
        for format in PromptFormat::ALL {
            let report = build_report(&bug, format).unwrap();
            let exemplar = default_exemplar(bug.language, format);
            for mode in MODES {
                let rendered = render_prompt(&report, format, &exemplar, mode).unwrap().golden_text();
                let path = dir.join(prompt_file_name(&bug.id, format, mode));
                if update {
                    fs::write(&path, &rendered).unwrap();
                }
                let golden = fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
                assert!(golden == rendered, "{} differs from the rendered prompt", path.display());
                checked += 1;
            }
        }
    }
    assert_eq!(checked, 80);
    let files = fs::read_dir(&dir).unwrap().count();
    assert_eq!(files, 80, "stray files in {}", dir.display());
}

#[test]
fn chat_prompt_has_the_one_shot_structure() {
    let bug = mini_corpus().into_iter().find(|b| b.id == "mc-001").unwrap();
    let report = build_report(&bug, PromptFormat::ReportFunc).unwrap();
    let exemplar = default_exemplar(bug.language, PromptFormat::ReportFunc);
    let chat = render_prompt(&report, PromptFormat::ReportFunc, &exemplar, RenderMode::Chat).unwrap();
    let roles: Vec<String> = chat.messages.iter().map(|m| serde_json::to_string(&m.role).unwrap()).collect();
    assert_eq!(roles, ["\"system\"", "\"user\"", "\"assistant\"", "\"user\""]);
    assert!(chat.messages[0].content.starts_with("You are an AI debugger."));
    let text = render_prompt(&report, PromptFormat::ReportFunc, &exemplar, RenderMode::TextCompletion).unwrap();
    let flat = text.flat_text.unwrap();
    assert!(flat.starts_with("[INST]\n"));
    assert_eq!(flat.matches("<SEP>").count(), 3);
}

#[test]
fn rerendering_is_stable() {
    for bug in mini_corpus() {
        for format in PromptFormat::ALL {
            let exemplar = default_exemplar(bug.language, format);
            let first = render_prompt(&build_report(&bug, format).unwrap(), format, &exemplar, RenderMode::Chat).unwrap();
            for _ in 0..100 {
                let again = render_prompt(&build_report(&bug, format).unwrap(), format, &exemplar, RenderMode::Chat).unwrap();
                assert_eq!(again.golden_text(), first.golden_text(), "{} {format}", bug.id);
            }
        }
    }
}
