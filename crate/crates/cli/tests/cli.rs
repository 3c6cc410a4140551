//! The `d4c` binary end to end: output layout, exit codes, config layering, offline runs.

use std::borrow::BorrowMut;
use std::fs;
use std::io::{Read, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;

use serde_json::Value;
use tempfile::TempDir;
use walkdir::WalkDir;

fn repo() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").canonicalize().unwrap()
}

fn mini() -> PathBuf {
    repo().join("corpus/mini")
}

fn d4c(args: &[&str]) -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_d4c"));
    cmd.args(args).env_remove("D4C_API_KEY");
    cmd
}

fn run(mut cmd: impl BorrowMut<Command>) -> (i32, String, String) {
    let Output { status, stdout, stderr } = cmd.borrow_mut().output().unwrap();
    (status.code().unwrap_or(-1), String::from_utf8(stdout).unwrap(), String::from_utf8(stderr).unwrap())
}

fn copy_tree(from: &Path, to: &Path) {
    for entry in WalkDir::new(from) {
        let entry = entry.unwrap();
        let dest = to.join(entry.path().strip_prefix(from).unwrap());
        if entry.file_type().is_dir() {
            fs::create_dir_all(&dest).unwrap();
        } else {
            fs::copy(entry.path(), &dest).unwrap();
        }
    }
}

/// A corpus holding copies of the named mini-corpus bundles.
fn subset(dir: &Path, ids: &[&str]) -> PathBuf {
    let corpus = dir.join("corpus");
    for id in ids {
        copy_tree(&mini().join(id), &corpus.join(id));
    }
    corpus
}

fn mock_args<'a>(corpus: &'a str, out: &'a str, script: &'a str) -> Vec<&'a str> {
    vec!["--corpus-dir", corpus, "--backend", "mock", "--script", script, "--output-dir", out, "--workers", "2"]
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn script() -> PathBuf {
    mini().join("mock_script.json")
}

#[test]
fn repair_writes_the_artifact_layout_and_report_reproduces_it() {
    let tmp = TempDir::new().unwrap();
    let corpus = subset(tmp.path(), &["mc-001", "mc-007", "mc-008"]);
    let out = tmp.path().join("out");
    let script = script();
    let (code, stdout, stderr) = run(d4c(&["repair"]).args(mock_args(s(&corpus), s(&out), s(&script))));
    assert_eq!(code, 0, "{stderr}");
    for name in ["run.jsonl", "summary.json", "summary.txt"] {
        assert!(out.join(name).is_file(), "{name} missing");
    }
    assert!(!out.join("scratch").exists(), "scratch kept without --keep-scratch");
    assert!(!out.join("prompts").exists());

    let log = fs::read_to_string(out.join("run.jsonl")).unwrap();
    assert_eq!(log.lines().next().unwrap(), r#"{"schema":1}"#);
    assert_eq!(log.lines().count(), 4);
    let summary = read_json(&out.join("summary.json"));
    let cell = &summary["formats"][0];
    assert_eq!(cell["format"], "report_func");
    assert_eq!(cell["plausible_bugs"], 2);
    assert_eq!(stdout, fs::read_to_string(out.join("summary.txt")).unwrap());

    let (code, report, _) = run(d4c(&["report", s(&out.join("run.jsonl"))]));
    assert_eq!(code, 0);
    assert_eq!(report, stdout);
    let (code, json, _) = run(d4c(&["report", "--json", s(&out.join("run.jsonl"))]));
    assert_eq!(code, 0);
    assert_eq!(serde_json::from_str::<Value>(&json).unwrap(), summary);
}

#[test]
fn empty_corpus_is_a_config_error() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let script = script();
    let (code, _, stderr) = run(d4c(&["repair"]).args(mock_args(s(tmp.path()), s(&out), s(&script))));
    assert_eq!(code, 2);
    assert!(stderr.contains("no bundles found"), "{stderr}");
}

#[test]
fn remote_backend_without_key_names_the_variable() {
    let (code, _, stderr) = run(d4c(&[
        "repair",
        "--corpus-dir",
        s(&mini()),
        "--backend",
        "remote_chat",
        "--endpoint",
        "http://127.0.0.1:9/v1/chat/completions",
        "--model",
        "m",
    ]));
    assert_eq!(code, 2);
    assert!(stderr.contains("D4C_API_KEY"), "{stderr}");
}

#[test]
fn mask_format_names_bundles_without_hunks() {
    let tmp = TempDir::new().unwrap();
    let corpus = subset(tmp.path(), &["mc-001", "mc-007"]);
    let manifest = corpus.join("mc-007/bug.json");
    let mut bug = read_json(&manifest);
    bug.as_object_mut().unwrap().remove("known_hunks");
    fs::write(&manifest, serde_json::to_string_pretty(&bug).unwrap()).unwrap();
    let out = tmp.path().join("out");
    let script = script();
    let (code, _, stderr) =
        run(d4c(&["compare", "--formats", "report_func,mask_hunk"]).args(mock_args(s(&corpus), s(&out), s(&script))));
    assert_eq!(code, 2);
    assert!(stderr.contains("mc-007") && !stderr.contains("mc-001"), "{stderr}");
    let (code, _, stderr) = run(d4c(&["repair", "--format", "mask_func"]).args(mock_args(s(&corpus), s(&out), s(&script))));
    assert_eq!(code, 2, "{stderr}");
    // The same corpus is fine for report formats.
    let (code, _, stderr) = run(d4c(&["repair", "--format", "report_hunk"]).args(mock_args(s(&corpus), s(&out), s(&script))));
    assert_eq!(code, 0, "{stderr}");
}

#[test]
fn compare_prints_one_row_per_format() {
    let tmp = TempDir::new().unwrap();
    let corpus = subset(tmp.path(), &["mc-002", "mc-009"]);
    let out = tmp.path().join("out");
    let script = script();
    let (code, stdout, stderr) = run(d4c(&["compare"]).args(mock_args(s(&corpus), s(&out), s(&script))));
    assert_eq!(code, 0, "{stderr}");
    let lines: Vec<&str> = stdout.lines().collect();
    assert_eq!(lines.len(), 6);
    let order: Vec<&str> = lines[2..].iter().map(|l| l.split_whitespace().next().unwrap()).collect();
    assert_eq!(order, ["report_func", "mask_func", "report_hunk", "mask_hunk"]);
    let lab = read_json(&out.join("lab.json"));
    assert_eq!(lab["cells"].as_array().unwrap().len(), 4);
    assert_eq!(lab["corpus_id"], "corpus");
    assert_eq!(stdout, fs::read_to_string(out.join("lab.txt")).unwrap());
    assert_eq!(fs::read_to_string(out.join("run.jsonl")).unwrap().lines().count(), 9);
}

#[test]
fn single_format_compare_matches_repair_plus_perplexity() {
    let tmp = TempDir::new().unwrap();
    let corpus = subset(tmp.path(), &["mc-001", "mc-010"]);
    let script = script();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert_eq!(run(d4c(&["repair"]).args(mock_args(s(&corpus), s(&a), s(&script)))).0, 0);
    assert_eq!(run(d4c(&["compare", "--formats", "report_func"]).args(mock_args(s(&corpus), s(&b), s(&script)))).0, 0);
    let lab = read_json(&b.join("lab.json"));
    let cells = lab["cells"].as_array().unwrap();
    assert_eq!(cells.len(), 1);
    let summary = read_json(&a.join("summary.json"));
    assert_eq!(cells[0]["plausible_bugs"], summary["formats"][0]["plausible_bugs"]);
    assert!(cells[0]["mean_output_ppl"].as_f64().unwrap() > 1.0);
    assert_eq!(cells[0]["scored_pairs"], 20);
}

#[test]
fn report_rejects_a_truncated_log_with_its_line_number() {
    let tmp = TempDir::new().unwrap();
    let corpus = subset(tmp.path(), &["mc-009"]);
    let out = tmp.path().join("out");
    let script = script();
    assert_eq!(run(d4c(&["repair"]).args(mock_args(s(&corpus), s(&out), s(&script)))).0, 0);
    let log = fs::read_to_string(out.join("run.jsonl")).unwrap();
    let truncated = tmp.path().join("cut.jsonl");
    fs::write(&truncated, &log[..log.len() - 25]).unwrap();
    let (code, _, stderr) = run(d4c(&["report", s(&truncated)]));
    assert_eq!(code, 2);
    assert!(stderr.contains("line 2"), "{stderr}");
}

#[test]
fn empty_log_reports_a_zeroed_summary() {
    let tmp = TempDir::new().unwrap();
    let log = tmp.path().join("empty.jsonl");
    fs::write(&log, "").unwrap();
    let (code, stdout, _) = run(d4c(&["report", s(&log)]));
    assert_eq!(code, 0);
    assert!(stdout.ends_with("total: 0 runs, 0 samples, 0 input tokens, 0 output tokens, $0.0000, 0.0s wall time\n"), "{stdout}");
    let (code, _, stderr) = run(d4c(&["report", s(&tmp.path().join("missing.jsonl"))]));
    assert_eq!(code, 2, "{stderr}");
}

#[test]
fn unreachable_backend_exits_with_three() {
    let tmp = TempDir::new().unwrap();
    let corpus = subset(tmp.path(), &["mc-001", "mc-002"]);
    // Bind then drop to get a port nobody listens on.
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let endpoint = format!("http://127.0.0.1:{port}/v1/completions");
    let (code, _, stderr) = run(d4c(&[
        "repair",
        "--corpus-dir",
        s(&corpus),
        "--backend",
        "local_completion",
        "--endpoint",
        &endpoint,
        "--output-dir",
        s(&tmp.path().join("out")),
        "--workers",
        "1",
    ]));
    assert_eq!(code, 3, "{stderr}");
    assert!(stderr.contains("unavailable"), "{stderr}");
}

/// Answers every connection with `status` and counts the connections.
fn stub_server(status: &'static str) -> (String, Arc<AtomicUsize>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let hits = Arc::new(AtomicUsize::new(0));
    let counter = hits.clone();
    thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { continue };
            counter.fetch_add(1, Ordering::SeqCst);
            let mut buf = [0u8; 8192];
            let _ = stream.read(&mut buf);
            let body = "{\"error\":\"stub\"}";
            let _ = write!(stream, "HTTP/1.1 {status}\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}", body.len());
        }
    });
    (format!("http://{addr}"), hits)
}

#[test]
fn rejected_key_is_a_config_error() {
    let tmp = TempDir::new().unwrap();
    let corpus = subset(tmp.path(), &["mc-001"]);
    let (base, hits) = stub_server("401 Unauthorized");
    let endpoint = format!("{base}/v1/chat/completions");
    let (code, _, stderr) = run(d4c(&[
        "repair",
        "--corpus-dir",
        s(&corpus),
        "--backend",
        "remote_chat",
        "--endpoint",
        &endpoint,
        "--model",
        "m",
        "--output-dir",
        s(&tmp.path().join("out")),
    ])
    .env("D4C_API_KEY", "wrong"));
    assert_eq!(code, 2, "{stderr}");
    assert_eq!(hits.load(Ordering::SeqCst), 1, "auth failures are not retried");
}

#[test]
fn mock_runs_and_reports_stay_offline() {
    let tmp = TempDir::new().unwrap();
    let corpus = subset(tmp.path(), &["mc-003"]);
    let out = tmp.path().join("out");
    let script = script();
    let (proxy, hits) = stub_server("502 Bad Gateway");
    let offline = |cmd: &mut Command| {
        for var in ["HTTP_PROXY", "HTTPS_PROXY", "ALL_PROXY", "http_proxy", "https_proxy", "all_proxy"] {
            cmd.env(var, &proxy);
        }
        cmd.env_remove("NO_PROXY").env_remove("no_proxy");
    };
    let mut cmd = d4c(&["repair", "--endpoint", "http://192.0.2.1/never"]);
    cmd.args(mock_args(s(&corpus), s(&out), s(&script)));
    offline(&mut cmd);
    assert_eq!(run(&mut cmd).0, 0);
    let mut cmd = d4c(&["report", s(&out.join("run.jsonl"))]);
    offline(&mut cmd);
    assert_eq!(run(&mut cmd).0, 0);
    assert_eq!(hits.load(Ordering::SeqCst), 0);
}

#[test]
fn flags_override_the_config_file() {
    let tmp = TempDir::new().unwrap();
    let corpus = subset(tmp.path(), &["mc-001"]);
    let out = tmp.path().join("out");
    let config = tmp.path().join("d4c.toml");
    fs::write(
        &config,
        format!(
            "corpus_dir = {:?}\nbackend = \"mock\"\nscript = {:?}\noutput_dir = {:?}\nformat = \"mask_func\"\nnum_samples = 3\nearly_stop = true\n",
            s(&corpus),
            s(&script()),
            s(&out)
        ),
    )
    .unwrap();
    let (code, _, stderr) = run(d4c(&["repair", "--config", s(&config), "--format", "report_func", "--early-stop", "false"]));
    assert_eq!(code, 0, "{stderr}");
    let log = fs::read_to_string(out.join("run.jsonl")).unwrap();
    let record: Value = serde_json::from_str(log.lines().nth(1).unwrap()).unwrap();
    assert_eq!(record["format"], "report_func");
    assert_eq!(record["num_samples"], 3);
    assert_eq!(record["early_stop"], false);
    assert_eq!(record["candidates"].as_array().unwrap().len(), 3);

    fs::write(tmp.path().join("bad.toml"), "num_sample = 3\n").unwrap();
    let (code, _, stderr) = run(d4c(&["repair", "--config", s(&tmp.path().join("bad.toml"))]));
    assert_eq!(code, 2);
    assert!(stderr.contains("num_sample"), "{stderr}");
}

#[test]
fn dumped_prompts_match_the_golden_files() {
    let tmp = TempDir::new().unwrap();
    let corpus = subset(tmp.path(), &["mc-005"]);
    let out = tmp.path().join("out");
    let script = script();
    let (code, _, stderr) =
        run(d4c(&["repair", "--dump-prompts", "--keep-scratch", "--early-stop"]).args(mock_args(s(&corpus), s(&out), s(&script))));
    assert_eq!(code, 0, "{stderr}");
    let name = "mc-005.report_func.chat.json";
    let golden = repo().join("crates/core/tests/golden/prompts").join(name);
    assert_eq!(fs::read_to_string(out.join("prompts").join(name)).unwrap(), fs::read_to_string(golden).unwrap());
    let log = fs::read_to_string(out.join("run.jsonl")).unwrap();
    let record: Value = serde_json::from_str(log.lines().nth(1).unwrap()).unwrap();
    let candidates = record["candidates"].as_array().unwrap();
    assert_eq!(candidates.len(), 7);
    let validated = candidates.iter().filter(|c| !c["applied"].is_null()).count();
    let kept = fs::read_dir(out.join("scratch")).unwrap().count();
    assert_eq!(kept, validated, "one working copy per validated candidate");
}

#[test]
fn bundle_missing_from_the_script_aborts_with_one() {
    let tmp = TempDir::new().unwrap();
    let corpus = subset(tmp.path(), &["mc-001", "mc-002"]);
    let full = read_json(&script());
    let only: serde_json::Map<String, Value> =
        full.as_object().unwrap().iter().filter(|(k, _)| k.starts_with("mc-001/")).map(|(k, v)| (k.clone(), v.clone())).collect();
    let partial = tmp.path().join("partial.json");
    fs::write(&partial, serde_json::to_string(&only).unwrap()).unwrap();
    let out = tmp.path().join("out");
    let (code, _, stderr) = run(d4c(&["repair"]).args(mock_args(s(&corpus), s(&out), s(&partial))));
    assert_eq!(code, 1, "{stderr}");
    assert!(stderr.contains("aborted: mc-002"), "{stderr}");
    assert_eq!(fs::read_to_string(out.join("run.jsonl")).unwrap().lines().count(), 2);
}
