#![allow(dead_code)]

pub mod edits;

use std::fs;
use std::path::{Path, PathBuf};

use d4c_core::{load_corpus, BugInstance};
use serde_json::Value;

pub fn corpus_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../corpus/mini").canonicalize().expect("mini corpus present")
}

pub fn mini_corpus() -> Vec<BugInstance> {
    load_corpus(&corpus_dir()).expect("mini corpus loads")
}

pub fn corpus_json(name: &str) -> Value {
    let text = fs::read_to_string(corpus_dir().join(name)).expect("fixture present");
    serde_json::from_str(&text).expect("fixture parses")
}

pub fn mock_script() -> PathBuf {
    corpus_dir().join("mock_script.json")
}

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests").join(name)
}
