//! Per-candidate working copies and test-command validation.

use std::fs;
use std::io::Read;
use std::os::unix::process::CommandExt;
use std::path::Path;
use std::process::{Command, ExitStatus, Stdio};
use std::sync::mpsc;
use std::sync::LazyLock;
use std::thread;
use std::time::{Duration, Instant};

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use walkdir::WalkDir;

/// Default compile-failure marker, matched against the combined output of a failing run.
pub const DEFAULT_COMPILE_ERROR_PATTERN: &str = r"error:|SyntaxError|IndentationError|TabError";

/// Stored output per stream; the rest is drained and dropped.
const OUTPUT_CAP: usize = 1 << 20;
const DETAIL_CAP: usize = 300;
const POLL: Duration = Duration::from_millis(10);

static FAILING_TEST: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?m)^\s*(?:---\s+)?FAIL(?:ED)?:?\s+([^\s(]+)").expect("static regex"));

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeStatus {
    Plausible,
    TestFail,
    CompileError,
    Timeout,
    ExtractionError,
    ApplyError,
}

impl OutcomeStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            OutcomeStatus::Plausible => "plausible",
            OutcomeStatus::TestFail => "test_fail",
            OutcomeStatus::CompileError => "compile_error",
            OutcomeStatus::Timeout => "timeout",
            OutcomeStatus::ExtractionError => "extraction_error",
            OutcomeStatus::ApplyError => "apply_error",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationOutcome {
    pub status: OutcomeStatus,
    /// First failing test name, compiler line, or error text.
    pub detail: String,
    /// Seconds.
    pub wall_time: f64,
}

impl ValidationOutcome {
    pub fn is_plausible(&self) -> bool {
        self.status == OutcomeStatus::Plausible
    }

    pub(crate) fn without_run(status: OutcomeStatus, detail: String) -> Self {
        ValidationOutcome { status, detail, wall_time: 0.0 }
    }
}

#[derive(Debug, Error)]
pub enum SandboxError {
    #[error("cannot set up working copy: {0}")]
    SandboxSetupFailed(String),
}

fn setup(what: impl std::fmt::Display) -> SandboxError {
    SandboxError::SandboxSetupFailed(what.to_string())
}

/// Copies the tree at `source_root` to `dest`, replacing anything already at `dest`.
pub fn materialize(source_root: &Path, dest: &Path) -> Result<(), SandboxError> {
    let root = source_root.canonicalize().map_err(|e| setup(format!("{}: {e}", source_root.display())))?;
    if dest.exists() {
        fs::remove_dir_all(dest).map_err(|e| setup(format!("{}: {e}", dest.display())))?;
    }
    if let Some(parent) = dest.parent() {
        fs::create_dir_all(parent).map_err(|e| setup(format!("{}: {e}", parent.display())))?;
    }
    let dest_abs = dest.parent().and_then(|p| p.canonicalize().ok()).map(|p| p.join(dest.file_name().unwrap_or_default()));
    if dest_abs.as_deref().is_some_and(|d| d.starts_with(&root)) {
        return Err(setup(format!("scratch directory {} lies inside the bundle {}", dest.display(), root.display())));
    }
    for entry in WalkDir::new(&root).follow_links(false) {
        let entry = entry.map_err(setup)?;
        let rel = entry.path().strip_prefix(&root).expect("walkdir yields paths under the root");
        let target = dest.join(rel);
        let kind = entry.file_type();
        let result = if kind.is_dir() {
            fs::create_dir_all(&target)
        } else if kind.is_symlink() {
            fs::read_link(entry.path()).and_then(|link| std::os::unix::fs::symlink(link, &target))
        } else {
            fs::copy(entry.path(), &target).map(drop)
        };
        result.map_err(|e| setup(format!("{}: {e}", target.display())))?;
    }
    Ok(())
}

fn drain(mut pipe: impl Read + Send + 'static, tx: mpsc::Sender<(usize, Vec<u8>)>, slot: usize) {
    thread::spawn(move || {
        let mut kept = Vec::new();
        let mut buf = [0u8; 8192];
        while let Ok(n) = pipe.read(&mut buf) {
            if n == 0 {
                break;
            }
            let room = OUTPUT_CAP.saturating_sub(kept.len());
            kept.extend_from_slice(&buf[..n.min(room)]);
        }
        let _ = tx.send((slot, kept));
    });
}

fn kill_group(pid: i32) {
    // SAFETY: plain syscall; the group id is the child's pid, created by `process_group(0)`.
    unsafe {
        libc::kill(-pid, libc::SIGKILL);
    }
}

fn clip(line: &str) -> String {
    let line = line.trim();
    match line.char_indices().nth(DETAIL_CAP) {
        Some((i, _)) => format!("{}...", &line[..i]),
        None => line.to_string(),
    }
}

fn exit_detail(status: ExitStatus) -> String {
    use std::os::unix::process::ExitStatusExt;
    match (status.code(), status.signal()) {
        (Some(code), _) => format!("exit status {code}"),
        (None, Some(sig)) => format!("killed by signal {sig}"),
        _ => "abnormal exit".to_string(),
    }
}

/// Runs `test_command` through `sh -c` inside `patched_root`. Exit 0 within `timeout` is
/// plausible. On timeout the whole process group is killed.
pub fn validate(
    patched_root: &Path,
    test_command: &str,
    timeout: Duration,
    compile_error: &Regex,
) -> Result<ValidationOutcome, SandboxError> {
    if timeout.is_zero() {
        return Err(setup("timeout must be positive"));
    }
    if !patched_root.is_dir() {
        return Err(setup(format!("{} is not a directory", patched_root.display())));
    }
    let start = Instant::now();
    let mut child = Command::new("sh")
        .arg("-c")
        .arg(test_command)
        .current_dir(patched_root)
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .process_group(0)
        .spawn()
        .map_err(|e| setup(format!("cannot spawn test command: {e}")))?;
    let pid = child.id() as i32;
    let (tx, rx) = mpsc::channel();
    drain(child.stdout.take().expect("piped"), tx.clone(), 0);
    drain(child.stderr.take().expect("piped"), tx, 1);

    let deadline = start + timeout;
    let status = loop {
        match child.try_wait() {
            Ok(Some(status)) => break Some(status),
            Ok(None) => {}
            Err(e) => {
                kill_group(pid);
                let _ = child.wait();
                return Err(setup(format!("cannot wait for test command: {e}")));
            }
        }
        let now = Instant::now();
        if now >= deadline {
            kill_group(pid);
            let _ = child.wait();
            break None;
        }
        thread::sleep(POLL.min(deadline - now));
    };
    // Background children left by the command would otherwise keep the pipes open.
    kill_group(pid);
    let wall_time = start.elapsed().as_secs_f64();

    let mut streams = [Vec::new(), Vec::new()];
    for _ in 0..2 {
        match rx.recv_timeout(Duration::from_millis(500)) {
            Ok((slot, bytes)) => streams[slot] = bytes,
            Err(_) => break,
        }
    }
    let output = format!("{}{}", String::from_utf8_lossy(&streams[0]), String::from_utf8_lossy(&streams[1]));

    let Some(status) = status else {
        return Ok(ValidationOutcome {
            status: OutcomeStatus::Timeout,
            detail: format!("timed out after {}s", timeout.as_secs_f64()),
            wall_time,
        });
    };
    if status.success() {
        return Ok(ValidationOutcome { status: OutcomeStatus::Plausible, detail: String::new(), wall_time });
    }
    if let Some(line) = output.lines().find(|l| compile_error.is_match(l)) {
        return Ok(ValidationOutcome { status: OutcomeStatus::CompileError, detail: clip(line), wall_time });
    }
    let detail = FAILING_TEST
        .captures(&output)
        .map(|c| c[1].trim_end_matches([':', ',', '.']).to_string())
        .unwrap_or_else(|| exit_detail(status));
    Ok(ValidationOutcome { status: OutcomeStatus::TestFail, detail, wall_time })
}
