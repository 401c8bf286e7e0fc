//! Run records: one line of JSONL per grid cell, the durable unit the
//! analyzer and reporter consume. Records carry no wall-clock data, so a
//! re-run of the same grid produces byte-identical files; durations live in
//! per-record artifact sidecars instead.

use crate::harness::CompileStatus;
use crate::prompt::Method;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordStatus {
    Success,
    Failed,
    CompileTimeout,
    /// The backend failed before any source existed to compile.
    GenerationFailed,
}

impl From<CompileStatus> for RecordStatus {
    fn from(status: CompileStatus) -> RecordStatus {
        match status {
            CompileStatus::Success => RecordStatus::Success,
            CompileStatus::Failed => RecordStatus::Failed,
            CompileStatus::CompileTimeout => RecordStatus::CompileTimeout,
        }
    }
}

/// Canonical id for one grid cell, also used for artifact paths.
pub fn record_id(pattern: &str, model: &str, method: Method, seed: u64) -> String {
    format!("{pattern}__{model}__{method}__seed{seed:02}", method = method.as_str())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunRecord {
    pub record_id: String,
    pub pattern: String,
    pub model_id: String,
    pub method: Method,
    pub seed: u64,
    pub status: RecordStatus,
    /// Distinct error codes observed in this record's log.
    pub codes: BTreeSet<String>,
    /// Raw per-code occurrence counts over the same log. Empty means "one
    /// occurrence per present code".
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub code_counts: BTreeMap<String, usize>,
    /// Accepted on read for interoperability; the runner never writes it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration_ms: Option<u64>,
}

#[derive(Debug, Error)]
pub enum RecordError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("{path}:{line}: bad record: {message}")]
    BadLine { path: String, line: usize, message: String },
    #[error("record {record_id} is marked success but carries codes {codes:?}")]
    SuccessWithCodes { record_id: String, codes: Vec<String> },
}

impl RunRecord {
    pub fn check(&self) -> Result<(), RecordError> {
        if self.status == RecordStatus::Success && !self.codes.is_empty() {
            return Err(RecordError::SuccessWithCodes {
                record_id: self.record_id.clone(),
                codes: self.codes.iter().cloned().collect(),
            });
        }
        Ok(())
    }

    /// Occurrence count for a code: explicit when recorded, else presence.
    pub fn occurrences(&self, code: &str) -> usize {
        match self.code_counts.get(code) {
            Some(n) => *n,
            None if self.codes.contains(code) => 1,
            None => 0,
        }
    }

    pub fn to_line(&self) -> serde_json::Result<String> {
        serde_json::to_string(self)
    }
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> RecordError + '_ {
    move |e| RecordError::Io { path: path.display().to_string(), message: e.to_string() }
}

pub fn write_jsonl(path: &Path, records: &[RunRecord]) -> Result<(), RecordError> {
    let mut out = String::new();
    for record in records {
        record.check()?;
        out.push_str(&record.to_line().map_err(|e| RecordError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?);
        out.push('\n');
    }
    std::fs::write(path, out).map_err(io_err(path))
}

pub fn read_jsonl(path: &Path) -> Result<Vec<RunRecord>, RecordError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let mut records = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: RunRecord = serde_json::from_str(line).map_err(|e| RecordError::BadLine {
            path: path.display().to_string(),
            line: idx + 1,
            message: e.to_string(),
        })?;
        record.check()?;
        records.push(record);
    }
    Ok(records)
}

/// What a restarted run finds on disk.
#[derive(Debug)]
pub struct ResumeState {
    pub records: Vec<RunRecord>,
    pub completed: BTreeSet<String>,
    /// True when a torn final line was cut off to make the file whole.
    pub truncated: bool,
}

/// Prepares a records file for appending after an interrupted run. A torn
/// final line (no trailing newline, or a final line that does not parse) is
/// truncated away; damage anywhere earlier is an error, not something to
/// silently repair.
pub fn resume_scan(path: &Path) -> Result<ResumeState, RecordError> {
    if !path.exists() {
        return Ok(ResumeState { records: Vec::new(), completed: BTreeSet::new(), truncated: false });
    }
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;

    let mut keep_end = text.len();
    let mut truncated = false;
    if !text.is_empty() && !text.ends_with('\n') {
        keep_end = text.rfind('\n').map(|i| i + 1).unwrap_or(0);
        truncated = true;
    }

    let whole = &text[..keep_end];
    let mut records: Vec<RunRecord> = Vec::new();
    let lines: Vec<&str> = whole.lines().filter(|l| !l.trim().is_empty()).collect();
    for (idx, line) in lines.iter().enumerate() {
        match serde_json::from_str::<RunRecord>(line) {
            Ok(record) => {
                record.check()?;
                records.push(record);
            }
            Err(e) if idx + 1 == lines.len() => {
                // Torn despite its newline: drop it too.
                let offset = whole.rfind(line.trim_end()).unwrap_or(keep_end);
                keep_end = offset;
                truncated = true;
                let _ = e;
            }
            Err(e) => {
                return Err(RecordError::BadLine {
                    path: path.display().to_string(),
                    line: idx + 1,
                    message: e.to_string(),
                })
            }
        }
    }

    if truncated {
        std::fs::write(path, &text[..keep_end]).map_err(io_err(path))?;
    }
    let completed = records.iter().map(|r| r.record_id.clone()).collect();
    Ok(ResumeState { records, completed, truncated })
}

pub fn append_jsonl(path: &Path, record: &RunRecord) -> Result<(), RecordError> {
    record.check()?;
    let line = record.to_line().map_err(|e| RecordError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let mut file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(io_err(path))?;
    writeln!(file, "{line}").map_err(io_err(path))
}
