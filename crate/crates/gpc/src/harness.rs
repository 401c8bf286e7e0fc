//! Compile harness: turns raw model output into a candidate source file,
//! runs the configured external compiler command under a wall-clock
//! watchdog, and reduces the captured log to an outcome.

use once_cell::sync::Lazy;
use regex::Regex;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};
use thiserror::Error;

/// Whole-file replacement emitted when no plausible C# start line exists.
pub const SANITIZE_SENTINEL: &str = "#error BatchRunner_sanitize_no_csharp_start";

/// Default wall-clock budget for one compile-and-reload cycle.
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(120);

const CSHARP_STARTS: [&str; 6] = ["using ", "namespace ", "public ", "internal ", "[", "//"];

fn is_fence(line: &str) -> bool {
    line.trim_start().starts_with("```")
}

/// Reduces raw model output to a compilable candidate:
/// keep the first fenced block's interior (an unclosed fence keeps the rest
/// of the text), then drop leading prose up to the first line that starts
/// like C#. No such line anywhere leaves only the `#error` sentinel, so the
/// compiler itself reports the rejection.
///
/// The function is idempotent: a first-fence interior contains no further
/// fence lines, and the sentinel is its own fixed point.
pub fn sanitize(raw: &str) -> String {
    let lines: Vec<&str> = raw.lines().collect();
    let interior: &[&str] = match lines.iter().position(|l| is_fence(l)) {
        Some(open) => {
            let rest = &lines[open + 1..];
            match rest.iter().position(|l| is_fence(l)) {
                Some(close) => &rest[..close],
                None => rest,
            }
        }
        None => &lines,
    };
    let start = interior
        .iter()
        .position(|line| CSHARP_STARTS.iter().any(|prefix| line.starts_with(prefix)));
    match start {
        Some(k) => interior[k..].join("\n"),
        None => SANITIZE_SENTINEL.to_string(),
    }
}

/// Where the candidate source lands inside the job workdir.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceLayout {
    /// `<workdir>/<record_id>.cs` — one throwaway directory per job.
    Flat,
    /// `<workdir>/Assets/Generated/<record_id>.cs` — a real engine project.
    UnityProject,
}

/// External compiler invocation: argv with `{project}` / `{log}`
/// placeholders and `${VAR}` environment references, plus the layout and
/// how many jobs may run at once (unity serializes on the global domain
/// reload; the mock is embarrassingly parallel).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompilerProfile {
    pub name: String,
    pub argv: Vec<String>,
    pub layout: SourceLayout,
    pub parallelism: usize,
}

impl CompilerProfile {
    pub fn mock(mockc_path: &Path) -> CompilerProfile {
        let threads = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(4);
        CompilerProfile {
            name: "mock".into(),
            argv: vec![
                mockc_path.display().to_string(),
                "{project}".into(),
                "{log}".into(),
            ],
            layout: SourceLayout::Flat,
            parallelism: threads,
        }
    }

    pub fn unity() -> CompilerProfile {
        CompilerProfile {
            name: "unity".into(),
            argv: vec![
                "${GPC_UNITY_PATH}".into(),
                "-batchmode".into(),
                "-quit".into(),
                "-projectPath".into(),
                "{project}".into(),
                "-logFile".into(),
                "{log}".into(),
            ],
            layout: SourceLayout::UnityProject,
            parallelism: 1,
        }
    }

    pub fn load(path: &Path) -> Result<CompilerProfile, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let profile: CompilerProfile =
            serde_json::from_str(&text).map_err(|e| HarnessError::Io {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
        if profile.argv.is_empty() {
            return Err(HarnessError::EmptyArgv { name: profile.name });
        }
        Ok(profile)
    }
}

#[derive(Debug, Clone)]
pub struct CompileJob {
    pub record_id: String,
    pub source_text: String,
    pub workdir: PathBuf,
    pub timeout_budget: Duration,
}

impl CompileJob {
    pub fn new(record_id: &str, source_text: &str, workdir: &Path) -> CompileJob {
        CompileJob {
            record_id: record_id.to_string(),
            source_text: source_text.to_string(),
            workdir: workdir.to_path_buf(),
            timeout_budget: DEFAULT_TIMEOUT,
        }
    }

    pub fn with_timeout(mut self, budget: Duration) -> CompileJob {
        self.timeout_budget = budget;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompileStatus {
    Success,
    Failed,
    CompileTimeout,
}

#[derive(Debug, Clone)]
pub struct CompileOutcome {
    pub status: CompileStatus,
    pub log_path: PathBuf,
    pub duration: Duration,
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("cannot launch `{command}`: {message}")]
    Spawn { command: String, message: String },
    #[error("argv references ${{{var}}} but it is not set")]
    MissingEnv { var: String },
    #[error("compiler profile '{name}' has an empty argv")]
    EmptyArgv { name: String },
    #[error("timeout budget must be positive")]
    ZeroBudget,
}

static ENV_REF: Lazy<Regex> = Lazy::new(|| Regex::new(r"\$\{([A-Za-z_][A-Za-z0-9_]*)\}").unwrap());

fn expand_argv(
    argv: &[String],
    project: &Path,
    log: &Path,
) -> Result<Vec<String>, HarnessError> {
    let mut out = Vec::with_capacity(argv.len());
    for arg in argv {
        let mut s = arg
            .replace("{project}", &project.display().to_string())
            .replace("{log}", &log.display().to_string());
        while let Some(m) = ENV_REF.captures(&s) {
            let var = m.get(1).unwrap().as_str().to_string();
            let value =
                std::env::var(&var).map_err(|_| HarnessError::MissingEnv { var: var.clone() })?;
            s = s.replacen(&format!("${{{var}}}"), &value, 1);
        }
        out.push(s);
    }
    Ok(out)
}

/// Path the candidate source is written to for this job under this profile.
pub fn source_path(job: &CompileJob, profile: &CompilerProfile) -> PathBuf {
    let file = format!("{}.cs", job.record_id);
    match profile.layout {
        SourceLayout::Flat => job.workdir.join(file),
        SourceLayout::UnityProject => job.workdir.join("Assets").join("Generated").join(file),
    }
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> HarnessError + '_ {
    move |e| HarnessError::Io { path: path.display().to_string(), message: e.to_string() }
}

/// Writes the source, runs the compiler command, and watches the clock.
/// The process is killed once the budget elapses and the job is marked
/// `compile_timeout`. Otherwise the retained log decides: zero
/// compiler-error matches means success. Unlaunchable commands are
/// infrastructure errors, not compile outcomes.
pub fn compile(
    job: &CompileJob,
    profile: &CompilerProfile,
) -> Result<CompileOutcome, HarnessError> {
    if job.timeout_budget.is_zero() {
        return Err(HarnessError::ZeroBudget);
    }
    let source = source_path(job, profile);
    let parent = source.parent().expect("source path always has a parent");
    std::fs::create_dir_all(parent).map_err(io_err(parent))?;
    std::fs::write(&source, &job.source_text).map_err(io_err(&source))?;

    let log_path = job.workdir.join(format!("{}.log", job.record_id));
    let argv = expand_argv(&profile.argv, &job.workdir, &log_path)?;

    let started = Instant::now();
    let mut child = Command::new(&argv[0])
        .args(&argv[1..])
        .stdin(Stdio::null())
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .spawn()
        .map_err(|e| HarnessError::Spawn { command: argv[0].clone(), message: e.to_string() })?;

    let timed_out = loop {
        match child.try_wait().map_err(|e| HarnessError::Spawn {
            command: argv[0].clone(),
            message: e.to_string(),
        })? {
            Some(_) => break false,
            None => {
                if started.elapsed() >= job.timeout_budget {
                    let _ = child.kill();
                    let _ = child.wait();
                    break true;
                }
                std::thread::sleep(Duration::from_millis(10));
            }
        }
    };
    let duration = started.elapsed();

    if !log_path.exists() {
        std::fs::write(&log_path, "").map_err(io_err(&log_path))?;
    }

    let status = if timed_out {
        CompileStatus::CompileTimeout
    } else {
        let log = std::fs::read_to_string(&log_path).map_err(io_err(&log_path))?;
        if crate::taxonomy::extract_codes(&log).is_empty() {
            CompileStatus::Success
        } else {
            CompileStatus::Failed
        }
    };
    Ok(CompileOutcome { status, log_path, duration })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sh(script: &str) -> CompilerProfile {
        CompilerProfile {
            name: "sh".into(),
            argv: vec!["/bin/sh".into(), "-c".into(), script.into(), "_".into(),
                "{project}".into(), "{log}".into()],
            layout: SourceLayout::Flat,
            parallelism: 4,
        }
    }

    #[test]
    fn sanitize_keeps_first_fence_interior() {
        let raw = "Here is code:\n```csharp\nusing UnityEngine;\nclass A{}\n```";
        assert_eq!(sanitize(raw), "using UnityEngine;\nclass A{}");
    }

    #[test]
    fn sanitize_empty_input_yields_sentinel() {
        assert_eq!(sanitize(""), SANITIZE_SENTINEL);
    }

    #[test]
    fn sanitize_clean_source_is_unchanged() {
        let clean = "using UnityEditor;\n\npublic class Gen {\n}";
        assert_eq!(sanitize(clean), clean);
    }

    #[test]
    fn sanitize_strips_leading_prose_without_fences() {
        let raw = "Sure! This script does the thing.\n\nusing UnityEngine;\nclass B{}";
        assert_eq!(sanitize(raw), "using UnityEngine;\nclass B{}");
    }

    #[test]
    fn sanitize_unclosed_fence_keeps_rest() {
        let raw = "prose\n```\n// generated\nclass C{}";
        assert_eq!(sanitize(raw), "// generated\nclass C{}");
    }

    #[test]
    fn sanitize_fence_without_csharp_start_yields_sentinel() {
        let raw = "```\n{ \"scene\": \"oops json\" }\n```";
        assert_eq!(sanitize(raw), SANITIZE_SENTINEL);
    }

    #[test]
    fn sanitize_accepts_each_start_prefix() {
        for start in ["using UnityEngine;", "namespace N {", "public class X {",
            "internal class Y {", "[CustomEditor(typeof(Z))]", "// header"] {
            let raw = format!("chatter\n{start}\nrest");
            assert_eq!(sanitize(&raw), format!("{start}\nrest"), "prefix case: {start}");
        }
    }

    #[test]
    fn sanitize_is_idempotent_on_samples() {
        let samples = [
            "",
            "no code at all",
            "```csharp\nusing UnityEngine;\nclass A{}\n```trailing",
            "text\n```\nmore text, no code\n```\nusing UnityEngine; // outside fence",
            "using A;\nusing B;\n",
            "x\n```cs\n[Attr]\nint x;\n```\n```\nusing C;\n```",
        ];
        for raw in samples {
            let once = sanitize(raw);
            assert_eq!(sanitize(&once), once, "not idempotent for {raw:?}");
        }
    }

    #[test]
    fn compile_success_on_clean_log() {
        let dir = tempfile::tempdir().unwrap();
        let job = CompileJob::new("rec1", "class A{}", dir.path());
        let out = compile(&job, &sh("echo compiled fine > \"$2\"")).unwrap();
        assert_eq!(out.status, CompileStatus::Success);
        assert!(out.log_path.exists());
        assert!(dir.path().join("rec1.cs").exists());
    }

    #[test]
    fn compile_failed_when_log_has_error_lines() {
        let dir = tempfile::tempdir().unwrap();
        let job = CompileJob::new("rec2", "class A{}", dir.path());
        let script = "echo 'x.cs(1,1): error CS0246: The type or namespace GuardGoal could not be found' > \"$2\"";
        let out = compile(&job, &sh(script)).unwrap();
        assert_eq!(out.status, CompileStatus::Failed);
        let log = std::fs::read_to_string(&out.log_path).unwrap();
        assert!(log.contains("CS0246"));
    }

    #[test]
    fn compile_timeout_kills_the_command() {
        let dir = tempfile::tempdir().unwrap();
        let budget = Duration::from_millis(200);
        let job = CompileJob::new("rec3", "class A{}", dir.path()).with_timeout(budget);
        let started = Instant::now();
        let out = compile(&job, &sh("sleep 30")).unwrap();
        assert_eq!(out.status, CompileStatus::CompileTimeout);
        assert!(out.duration >= budget);
        assert!(started.elapsed() < Duration::from_secs(5), "watchdog failed to kill promptly");
    }

    #[test]
    fn fast_command_is_not_a_timeout() {
        let dir = tempfile::tempdir().unwrap();
        let budget = Duration::from_secs(30);
        let job = CompileJob::new("rec4", "class A{}", dir.path()).with_timeout(budget);
        let out = compile(&job, &sh(": > \"$2\"")).unwrap();
        assert_eq!(out.status, CompileStatus::Success);
        assert!(out.duration < budget);
    }

    #[test]
    fn unlaunchable_command_is_an_infrastructure_error() {
        let dir = tempfile::tempdir().unwrap();
        let job = CompileJob::new("rec5", "class A{}", dir.path());
        let profile = CompilerProfile {
            name: "ghost".into(),
            argv: vec!["/nonexistent/compiler-binary".into()],
            layout: SourceLayout::Flat,
            parallelism: 1,
        };
        assert!(matches!(compile(&job, &profile), Err(HarnessError::Spawn { .. })));
    }

    #[test]
    fn unity_layout_places_source_under_assets() {
        let dir = tempfile::tempdir().unwrap();
        let job = CompileJob::new("rec6", "class A{}", dir.path());
        let mut profile = sh(": > \"$2\"");
        profile.layout = SourceLayout::UnityProject;
        let out = compile(&job, &profile).unwrap();
        assert_eq!(out.status, CompileStatus::Success);
        assert!(dir.path().join("Assets/Generated/rec6.cs").exists());
    }

    #[test]
    fn zero_budget_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let job =
            CompileJob::new("rec7", "class A{}", dir.path()).with_timeout(Duration::ZERO);
        assert!(matches!(compile(&job, &sh("true")), Err(HarnessError::ZeroBudget)));
    }

    #[test]
    fn env_references_expand_or_error() {
        let dir = tempfile::tempdir().unwrap();
        let job = CompileJob::new("rec8", "class A{}", dir.path());
        let profile = CompilerProfile {
            name: "env".into(),
            argv: vec!["${GPC_HARNESS_TEST_BIN}".into(), "-c".into(), ": > \"$1\"".into(),
                "{log}".into()],
            layout: SourceLayout::Flat,
            parallelism: 1,
        };
        std::env::remove_var("GPC_HARNESS_TEST_BIN");
        assert!(matches!(
            compile(&job, &profile),
            Err(HarnessError::MissingEnv { ref var }) if var == "GPC_HARNESS_TEST_BIN"
        ));
        std::env::set_var("GPC_HARNESS_TEST_BIN", "/bin/sh");
        let out = compile(&job, &profile).unwrap();
        assert_eq!(out.status, CompileStatus::Success);
        std::env::remove_var("GPC_HARNESS_TEST_BIN");
    }

    #[test]
    fn profiles_round_trip_through_json() {
        let dir = tempfile::tempdir().unwrap();
        let profile = CompilerProfile::unity();
        let path = dir.path().join("unity.json");
        std::fs::write(&path, serde_json::to_string(&profile).unwrap()).unwrap();
        let loaded = CompilerProfile::load(&path).unwrap();
        assert_eq!(loaded.name, "unity");
        assert_eq!(loaded.parallelism, 1);
        assert_eq!(loaded.layout, SourceLayout::UnityProject);

        std::fs::write(&path, r#"{"name":"x","argv":[],"layout":"flat","parallelism":2}"#)
            .unwrap();
        assert!(matches!(CompilerProfile::load(&path), Err(HarnessError::EmptyArgv { .. })));
    }

    #[test]
    fn success_iff_analyzer_finds_no_codes() {
        // The harness and the log analyzer must agree on what an error is.
        let dir = tempfile::tempdir().unwrap();
        for (script, want_codes) in [
            ("printf 'warning CS0649: field never assigned\\n' > \"$2\"", false),
            ("printf 'x.cs(1,1): error CS1029: #error: boom\\n' > \"$2\"", true),
        ] {
            let job = CompileJob::new("rec9", "class A{}", dir.path());
            let out = compile(&job, &sh(script)).unwrap();
            let log = std::fs::read_to_string(&out.log_path).unwrap();
            let codes = crate::taxonomy::extract_codes(&log);
            assert_eq!(codes.is_empty(), !want_codes);
            assert_eq!(out.status == CompileStatus::Success, codes.is_empty());
        }
    }
}
