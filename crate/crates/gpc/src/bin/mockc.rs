//! Mock compiler for desk-scale runs and tests. It walks a project
//! directory for C# sources and emits a compiler-shaped log, driven by
//! directives instead of actual compilation:
//!
//! In-source comments:
//!   `// mockc: errors=CS0246,CS0101` emit one error line per code
//!   `// mockc: sleep=2.5`            stall (seconds) to exercise watchdogs
//!
//! A `mockc.script` file in the project root with the same powers:
//!   `emit errors: CS0246,CS0101`
//!   `sleep: 5`
//!
//! A literal `#error TOKEN` source line emits the CS1029 line a real
//! compiler would produce. Exit code is 1 when any error was emitted.

use clap::Parser;
use gpc::taxonomy::ErrorTaxonomy;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

#[derive(Parser)]
#[command(name = "mockc", about = "directive-driven mock C# compiler")]
struct Args {
    /// Project directory to scan for .cs files
    project: PathBuf,
    /// Log file to write; stdout when omitted
    log: Option<PathBuf>,
}

fn collect_sources(dir: &Path, out: &mut Vec<PathBuf>) {
    let Ok(entries) = std::fs::read_dir(dir) else { return };
    let mut paths: Vec<PathBuf> = entries.flatten().map(|e| e.path()).collect();
    paths.sort();
    for path in paths {
        if path.is_dir() {
            collect_sources(&path, out);
        } else if path.extension().is_some_and(|e| e == "cs") {
            out.push(path);
        }
    }
}

fn sleep_secs(spec: &str) {
    if let Ok(secs) = spec.trim().parse::<f64>() {
        if secs > 0.0 {
            std::thread::sleep(Duration::from_secs_f64(secs));
        }
    }
}

struct LogWriter {
    lines: Vec<String>,
    errors: usize,
}

impl LogWriter {
    fn note(&mut self, line: String) {
        self.lines.push(line);
    }

    fn error(&mut self, file: &str, line_no: usize, code: &str) {
        let message = ErrorTaxonomy::builtin()
            .message(code)
            .map(str::to_string)
            .unwrap_or_else(|| "An error occurred".to_string());
        let col = 9 + (line_no % 20);
        self.lines.push(format!("{file}({line_no},{col}): error {code}: {message}"));
        self.errors += 1;
    }

    fn sentinel(&mut self, file: &str, line_no: usize, token: &str) {
        self.lines
            .push(format!("{file}({line_no},1): error CS1029: #error: '{token}'"));
        self.errors += 1;
    }
}

fn emit_codes(log: &mut LogWriter, file: &str, line_no: usize, list: &str) {
    for code in list.split(',').map(str::trim).filter(|c| !c.is_empty()) {
        log.error(file, line_no, code);
    }
}

fn process_source(path: &Path, display: &str, log: &mut LogWriter) {
    let Ok(text) = std::fs::read_to_string(path) else {
        log.error(display, 1, "CS2001");
        return;
    };
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let trimmed = line.trim_start();
        if let Some(directive) = trimmed.strip_prefix("// mockc:") {
            let directive = directive.trim();
            if let Some(codes) = directive.strip_prefix("errors=") {
                emit_codes(log, display, line_no, codes);
            } else if let Some(secs) = directive.strip_prefix("sleep=") {
                sleep_secs(secs);
            }
        } else if let Some(token) = trimmed.strip_prefix("#error") {
            log.sentinel(display, line_no, token.trim());
        }
    }
}

fn process_script(project: &Path, log: &mut LogWriter) {
    let Ok(text) = std::fs::read_to_string(project.join("mockc.script")) else { return };
    for line in text.lines() {
        let line = line.trim();
        if let Some(codes) = line.strip_prefix("emit errors:") {
            emit_codes(log, "mockc.script", 1, codes);
        } else if let Some(secs) = line.strip_prefix("sleep:") {
            sleep_secs(secs);
        }
    }
}

fn main() {
    let args = Args::parse();
    let mut log = LogWriter { lines: Vec::new(), errors: 0 };
    log.note("Mock compile started".to_string());

    let mut sources = Vec::new();
    collect_sources(&args.project, &mut sources);
    log.note(format!("Scanning {} source file(s)", sources.len()));

    process_script(&args.project, &mut log);
    for path in &sources {
        let display = path
            .strip_prefix(&args.project)
            .unwrap_or(path)
            .display()
            .to_string();
        process_source(path, &display, &mut log);
    }

    if log.errors == 0 {
        log.note("Compilation succeeded".to_string());
    } else {
        log.note(format!("Compilation failed: {} error(s)", log.errors));
    }

    let body = log.lines.join("\n") + "\n";
    match &args.log {
        Some(path) => {
            if let Err(e) = std::fs::write(path, &body) {
                eprintln!("mockc: cannot write {}: {e}", path.display());
                std::process::exit(2);
            }
        }
        None => {
            let _ = std::io::stdout().write_all(body.as_bytes());
        }
    }
    std::process::exit(if log.errors == 0 { 0 } else { 1 });
}
