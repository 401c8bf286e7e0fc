//! Grid execution: drive generation, sanitize, compile, and classify for
//! every (pattern, model, method, seed) cell, appending one JSONL record per
//! cell in deterministic grid order regardless of worker count. Re-running
//! against an existing output file resumes: completed ids are skipped and
//! only the remainder is executed.

use crate::backend::{grid_cells, run_cell, Backend, CellStatus, RetryPolicy};
use crate::harness::{compile, sanitize, CompileJob, CompilerProfile, HarnessError};
use crate::prompt::{Method, TemplateSet};
use crate::records::{append_jsonl, record_id, resume_scan, RecordError, RecordStatus, RunRecord};
use crate::taxonomy::scan_log;
use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::mpsc;
use std::time::Duration;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RunnerError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error(transparent)]
    Record(#[from] RecordError),
    #[error("pattern '{0}' appears in the grid but has no prompt text")]
    MissingPattern(String),
    #[error("worker thread panicked")]
    WorkerPanic,
}

fn io_err(path: &std::path::Path, e: std::io::Error) -> RunnerError {
    RunnerError::Io { path: path.display().to_string(), message: e.to_string() }
}

/// One concept available to the grid: its id and the prompt-ready text
/// describing it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatternInput {
    pub id: String,
    pub md: String,
}

/// What to run: the full cross product patterns x models x methods x seeds.
#[derive(Debug, Clone)]
pub struct GridSpec {
    pub patterns: Vec<PatternInput>,
    pub models: Vec<String>,
    pub methods: Vec<Method>,
    pub seeds: Vec<u64>,
    /// Forward the per-cell seed to the backend as the sampling seed.
    pub forward_seed: bool,
}

#[derive(Debug, Clone)]
pub struct RunnerConfig {
    /// Canonical JSONL output; also the resume ledger.
    pub out_path: PathBuf,
    /// Per-record working directories land under here, one per record id,
    /// holding the sanitized source, compiler log, prompts, and an outcome
    /// snapshot that (unlike the JSONL) carries wall-clock durations.
    pub artifacts_dir: PathBuf,
    pub timeout_budget: Duration,
    /// Requested pool size; the effective pool is capped by the compiler
    /// profile's declared parallelism.
    pub workers: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunSummary {
    pub total_cells: usize,
    pub executed: usize,
    pub skipped: usize,
    pub status_counts: BTreeMap<String, usize>,
}

struct Job {
    record_id: String,
    pattern_id: String,
    pattern_md: String,
    model_id: String,
    method: Method,
    seed: u64,
}

fn status_key(status: RecordStatus) -> String {
    serde_json::to_value(status)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_else(|| "unknown".to_string())
}

fn execute_job(
    job: &Job,
    backend: &dyn Backend,
    policy: &RetryPolicy,
    templates: &TemplateSet,
    profile: &CompilerProfile,
    config: &RunnerConfig,
    forward_seed: bool,
) -> Result<RunRecord, RunnerError> {
    let cell = run_cell(
        backend,
        policy,
        templates,
        &job.pattern_id,
        &job.pattern_md,
        &job.model_id,
        job.method,
        job.seed,
        forward_seed,
    );
    let workdir = config.artifacts_dir.join(&job.record_id);
    std::fs::create_dir_all(&workdir).map_err(|e| io_err(&workdir, e))?;
    let stages_path = workdir.join("stages.json");
    let stages_json = serde_json::to_string_pretty(&cell).expect("cell serializes");
    std::fs::write(&stages_path, stages_json).map_err(|e| io_err(&stages_path, e))?;

    let mut record = RunRecord {
        record_id: job.record_id.clone(),
        pattern: job.pattern_id.clone(),
        model_id: job.model_id.clone(),
        method: job.method,
        seed: job.seed,
        status: RecordStatus::GenerationFailed,
        codes: Default::default(),
        code_counts: Default::default(),
        duration_ms: None,
    };

    let mut duration_ms = None;
    if matches!(cell.outcome, CellStatus::Generated) {
        let source = sanitize(cell.csharp_output().unwrap_or(""));
        let compile_job = CompileJob::new(&job.record_id, &source, &workdir)
            .with_timeout(config.timeout_budget);
        let outcome = compile(&compile_job, profile)?;
        let log_text = std::fs::read_to_string(&outcome.log_path)
            .map_err(|e| io_err(&outcome.log_path, e))?;
        let scan = scan_log(&log_text);
        record.status = outcome.status.into();
        record.codes = scan.codes;
        record.code_counts = scan.code_counts;
        duration_ms = Some(outcome.duration.as_millis() as u64);
    }
    record.check()?;

    let outcome_path = workdir.join("outcome.json");
    let mut snapshot = record.clone();
    snapshot.duration_ms = duration_ms;
    let outcome_json = serde_json::to_string_pretty(&snapshot).expect("record serializes");
    std::fs::write(&outcome_path, outcome_json).map_err(|e| io_err(&outcome_path, e))?;
    Ok(record)
}

/// Runs every cell of the grid that the output file does not already hold,
/// writing records in grid order. Output order is independent of the worker
/// count: a reorder buffer holds finished records until all earlier ones
/// have been appended.
pub fn run_grid(
    spec: &GridSpec,
    backend: &dyn Backend,
    policy: &RetryPolicy,
    templates: &TemplateSet,
    profile: &CompilerProfile,
    config: &RunnerConfig,
) -> Result<RunSummary, RunnerError> {
    if let Some(parent) = config.out_path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
        }
    }
    std::fs::create_dir_all(&config.artifacts_dir)
        .map_err(|e| io_err(&config.artifacts_dir, e))?;

    let resume = resume_scan(&config.out_path)?;
    let md_by_id: HashMap<&str, &str> =
        spec.patterns.iter().map(|p| (p.id.as_str(), p.md.as_str())).collect();
    let pattern_ids: Vec<String> = spec.patterns.iter().map(|p| p.id.clone()).collect();
    let cells = grid_cells(&pattern_ids, &spec.models, &spec.methods, &spec.seeds);
    let total_cells = cells.len();

    let mut jobs = Vec::new();
    let mut skipped = 0usize;
    for (pattern, model, method, seed) in cells {
        let rid = record_id(&pattern, &model, method, seed);
        if resume.completed.contains(&rid) {
            skipped += 1;
            continue;
        }
        let md = md_by_id
            .get(pattern.as_str())
            .ok_or_else(|| RunnerError::MissingPattern(pattern.clone()))?;
        jobs.push(Job {
            record_id: rid,
            pattern_id: pattern,
            pattern_md: md.to_string(),
            model_id: model,
            method,
            seed,
        });
    }

    let mut status_counts: BTreeMap<String, usize> = BTreeMap::new();
    for record in &resume.records {
        *status_counts.entry(status_key(record.status)).or_insert(0) += 1;
    }

    let workers = config.workers.clamp(1, profile.parallelism.max(1));
    let mut executed = 0usize;
    let mut failure: Option<RunnerError> = None;

    let (tx, rx) = mpsc::channel::<(usize, Result<RunRecord, RunnerError>)>();
    let cursor = AtomicUsize::new(0);
    let poisoned = AtomicBool::new(false);
    std::thread::scope(|scope| {
        let jobs = &jobs;
        let cursor = &cursor;
        let poisoned = &poisoned;
        for _ in 0..workers {
            let tx = tx.clone();
            scope.spawn(move || loop {
                if poisoned.load(Ordering::SeqCst) {
                    break;
                }
                let i = cursor.fetch_add(1, Ordering::SeqCst);
                let Some(job) = jobs.get(i) else { break };
                let outcome = execute_job(
                    job,
                    backend,
                    policy,
                    templates,
                    profile,
                    config,
                    spec.forward_seed,
                );
                if outcome.is_err() {
                    poisoned.store(true, Ordering::SeqCst);
                }
                if tx.send((i, outcome)).is_err() {
                    break;
                }
            });
        }
        drop(tx);

        let mut buffer: BTreeMap<usize, Result<RunRecord, RunnerError>> = BTreeMap::new();
        let mut next = 0usize;
        for (index, outcome) in rx {
            buffer.insert(index, outcome);
            while let Some(entry) = buffer.remove(&next) {
                next += 1;
                if failure.is_some() {
                    continue;
                }
                match entry {
                    Ok(record) => {
                        if let Err(e) = append_jsonl(&config.out_path, &record) {
                            failure = Some(e.into());
                            poisoned.store(true, Ordering::SeqCst);
                            continue;
                        }
                        *status_counts.entry(status_key(record.status)).or_insert(0) += 1;
                        executed += 1;
                    }
                    Err(e) => {
                        failure = Some(e);
                        poisoned.store(true, Ordering::SeqCst);
                    }
                }
            }
        }
    });

    match failure {
        Some(e) => Err(e),
        None => Ok(RunSummary { total_cells, executed, skipped, status_counts }),
    }
}
