//! Append-only JSONL run log: a `{"schema":1}` header line, then one `RepairRun` per line.

use std::io::{self, BufRead, Write};

use serde_json::Value;
use thiserror::Error;

use super::RepairRun;

pub const RUN_LOG_SCHEMA: u64 = 1;

#[derive(Debug, Error)]
pub enum RunLogError {
    #[error("cannot read run log: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
}

pub struct RunLogWriter<W: Write> {
    out: W,
}

impl<W: Write> RunLogWriter<W> {
    /// Writes the header line.
    pub fn new(mut out: W) -> io::Result<Self> {
        writeln!(out, "{}", serde_json::json!({ "schema": RUN_LOG_SCHEMA }))?;
        out.flush()?;
        Ok(RunLogWriter { out })
    }

    /// Writes and flushes one record.
    pub fn append(&mut self, run: &RepairRun) -> io::Result<()> {
        let line = serde_json::to_string(run).map_err(io::Error::other)?;
        writeln!(self.out, "{line}")?;
        self.out.flush()
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

/// Reads a run log. An empty input is a valid empty log; blank lines are skipped. Line
/// numbers in errors are 1-based.
pub fn read_run_log(input: impl BufRead) -> Result<Vec<RepairRun>, RunLogError> {
    let mut runs = Vec::new();
    let mut header_seen = false;
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        let number = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |reason: String| RunLogError::Malformed { line: number, reason };
        if !header_seen {
            let value: Value = serde_json::from_str(&line).map_err(|e| malformed(format!("invalid header: {e}")))?;
            match value.get("schema").and_then(Value::as_u64) {
                Some(RUN_LOG_SCHEMA) => header_seen = true,
                Some(other) => return Err(malformed(format!("unsupported schema version {other}"))),
                None => return Err(malformed("first record must be the {\"schema\": 1} header".into())),
            }
            continue;
        }
        runs.push(serde_json::from_str(&line).map_err(|e| malformed(e.to_string()))?);
    }
    Ok(runs)
}
