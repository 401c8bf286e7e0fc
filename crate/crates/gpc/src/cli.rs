//! Command-line surface: one subcommand per pipeline stage plus a grid
//! runner driven by a JSON manifest. Every subcommand writes only inside its
//! declared output location, and `run` is resumable: rerunning the same
//! manifest skips records already on disk.

use crate::backend::{Backend, HttpBackend, RetryPolicy, StubBackend};
use crate::extract::{assemble_ir, ClassIdMap, GuidKind, GuidMap, PatternConfig};
use crate::harness::{CompilerProfile, DEFAULT_TIMEOUT};
use crate::ir::{parse_ir, serialize_ir, structural_stats, validate, ValidatorConfig};
use crate::metrics::{
    aggregate, frequency_tiers, render_report, render_tiers, ReportFormat,
};
use crate::prompt::{Method, PromptRequest, Stage, TemplateSet};
use crate::records::read_jsonl;
use crate::runner::{run_grid, GridSpec, PatternInput, RunnerConfig};
use crate::scene::parse_scene;
use crate::taxonomy::{scan_log, Classification, ErrorTaxonomy, GroundingLayer};
use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde::Deserialize;
use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::time::Duration;

#[derive(Parser, Debug)]
#[command(name = "gpc", version, about = "Scene-to-IR extraction, prompt rendering, grid generation runs, and compile-log analytics")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Extract one IR JSON per scene file in a directory.
    Extract(ExtractArgs),
    /// Check IR files against the hard constraints.
    Validate(ValidateArgs),
    /// Render a prompt for one (pattern, method, stage) and print it.
    Prompt(PromptArgs),
    /// Execute a manifest's generation/compile grid, appending JSONL records.
    Run(RunArgs),
    /// Classify the error codes in a single compiler log.
    Analyze(AnalyzeArgs),
    /// Aggregate a records file and/or an IR corpus into report tables.
    Report(ReportArgs),
}

#[derive(clap::Args, Debug)]
pub struct ExtractArgs {
    /// Directory of `.unity` scene files; the file stem is the pattern id.
    #[arg(long)]
    pub scenes: PathBuf,
    /// Directory holding prefab_guids.json and script_guids.json.
    #[arg(long = "guid-maps")]
    pub guid_maps: PathBuf,
    /// Directory of per-pattern config JSON (semantic links, rules, hints).
    #[arg(long = "config-dir")]
    pub config_dir: PathBuf,
    /// Output directory for the IR JSON files.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(clap::Args, Debug)]
pub struct ValidateArgs {
    /// IR JSON files to check.
    #[arg(required = true)]
    pub files: Vec<PathBuf>,
    /// Output format: text or json.
    #[arg(long, default_value = "text")]
    pub format: String,
}

#[derive(clap::Args, Debug)]
pub struct PromptArgs {
    #[arg(long = "pattern-id")]
    pub pattern_id: String,
    /// no_schema, with_schema_free, with_schema_min, or with_schema_full.
    #[arg(long)]
    pub method: String,
    /// ir_generation or csharp_generation.
    #[arg(long, default_value = "csharp_generation")]
    pub stage: String,
    /// File holding the pattern description text.
    #[arg(long = "pattern-md")]
    pub pattern_md: Option<PathBuf>,
    /// File holding the IR JSON to condition on.
    #[arg(long = "ir-json")]
    pub ir_json: Option<PathBuf>,
    /// Directory of template files overriding the built-in set.
    #[arg(long)]
    pub templates: Option<PathBuf>,
}

#[derive(clap::Args, Debug)]
pub struct RunArgs {
    /// Manifest JSON describing the grid, backend, and compiler.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Override the manifest backend: stub, stub:<fixtures-dir>, http:<url>.
    #[arg(long)]
    pub backend: Option<String>,
    /// Override the manifest compiler: mock, unity, or a profile JSON path.
    #[arg(long)]
    pub compiler: Option<String>,
    /// Override the per-record compile budget in seconds.
    #[arg(long = "timeout-secs")]
    pub timeout_secs: Option<u64>,
    /// Override the records output path.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Override the worker pool size.
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(clap::Args, Debug)]
pub struct AnalyzeArgs {
    /// The compiler log to scan.
    pub log: PathBuf,
    /// Taxonomy JSON overriding the built-in code tables.
    #[arg(long)]
    pub taxonomy: Option<PathBuf>,
    /// Output format: text or json.
    #[arg(long, default_value = "text")]
    pub format: String,
}

#[derive(clap::Args, Debug)]
pub struct ReportArgs {
    /// Records JSONL to aggregate into metrics tables.
    #[arg(long)]
    pub records: Option<PathBuf>,
    /// Directory of IR JSON files for the frequency-tier table.
    #[arg(long = "ir-dir")]
    pub ir_dir: Option<PathBuf>,
    /// Output directory for the rendered tables.
    #[arg(long)]
    pub out: PathBuf,
    /// markdown, csv, or json.
    #[arg(long, default_value = "markdown")]
    pub format: String,
    /// Comma-separated k values for the pass@k columns.
    #[arg(long, default_value = "1,10,20")]
    pub k: String,
    /// Taxonomy JSON overriding the built-in code tables.
    #[arg(long)]
    pub taxonomy: Option<PathBuf>,
}

fn default_timeout_secs() -> u64 {
    DEFAULT_TIMEOUT.as_secs()
}

fn default_workers() -> usize {
    1
}

fn default_forward_seed() -> bool {
    true
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestPattern {
    pub id: String,
    /// Inline pattern text; exactly one of `md` and `md_path` must be set.
    #[serde(default)]
    pub md: Option<String>,
    /// Pattern text file, relative to the manifest's directory.
    #[serde(default)]
    pub md_path: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BackendSpec {
    Stub {
        #[serde(default)]
        fixtures_dir: Option<PathBuf>,
    },
    Http {
        url: String,
    },
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CompilerSpec {
    Mock,
    Unity,
    Profile { path: PathBuf },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub run_id: String,
    pub patterns: Vec<ManifestPattern>,
    pub models: Vec<String>,
    pub methods: Vec<String>,
    pub seeds: Vec<u64>,
    pub backend: BackendSpec,
    pub compiler: CompilerSpec,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    #[serde(default)]
    pub created_at: String,
    /// Parent directory for run state; defaults to `runs` beside the
    /// manifest. Records land at `<runs_dir>/<run_id>/records.jsonl`.
    #[serde(default)]
    pub runs_dir: Option<PathBuf>,
    #[serde(default)]
    pub templates_dir: Option<PathBuf>,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default = "default_forward_seed")]
    pub forward_seed: bool,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<RunManifest> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading manifest {}", path.display()))?;
        let manifest: RunManifest = serde_json::from_str(&text)
            .with_context(|| format!("parsing manifest {}", path.display()))?;
        manifest.check()?;
        Ok(manifest)
    }

    pub fn check(&self) -> Result<()> {
        if self.run_id.is_empty()
            || !self.run_id.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
        {
            bail!("run_id must be a non-empty [A-Za-z0-9_-]+ name, got '{}'", self.run_id);
        }
        if self.patterns.is_empty()
            || self.models.is_empty()
            || self.methods.is_empty()
            || self.seeds.is_empty()
        {
            bail!("the grid is empty: patterns, models, methods, and seeds must all be non-empty");
        }
        let unique: BTreeSet<&u64> = self.seeds.iter().collect();
        if unique.len() != self.seeds.len() {
            bail!("seeds contain duplicates; record ids would collide");
        }
        for pattern in &self.patterns {
            match (&pattern.md, &pattern.md_path) {
                (Some(_), None) | (None, Some(_)) => {}
                _ => bail!("pattern '{}' must set exactly one of md and md_path", pattern.id),
            }
        }
        for method in &self.methods {
            if Method::parse(method).is_none() {
                bail!("unknown method '{method}' in manifest");
            }
        }
        Ok(())
    }
}

/// `stub`, `stub:<fixtures-dir>`, or `http:<url>` (flag form of BackendSpec).
pub fn parse_backend_flag(value: &str) -> Result<BackendSpec> {
    if value == "stub" {
        return Ok(BackendSpec::Stub { fixtures_dir: None });
    }
    if let Some(dir) = value.strip_prefix("stub:") {
        return Ok(BackendSpec::Stub { fixtures_dir: Some(PathBuf::from(dir)) });
    }
    if let Some(url) = value.strip_prefix("http:") {
        return Ok(BackendSpec::Http { url: url.to_string() });
    }
    bail!("unknown backend '{value}' (expected stub, stub:<dir>, or http:<url>)");
}

/// `mock`, `unity`, or a path to a compiler profile JSON.
pub fn parse_compiler_flag(value: &str) -> Result<CompilerSpec> {
    match value {
        "mock" => Ok(CompilerSpec::Mock),
        "unity" => Ok(CompilerSpec::Unity),
        path => Ok(CompilerSpec::Profile { path: PathBuf::from(path) }),
    }
}

fn resolve_relative(base: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        base.join(path)
    }
}

fn build_backend(spec: &BackendSpec, base: &Path) -> Result<Box<dyn Backend>> {
    match spec {
        BackendSpec::Stub { fixtures_dir: None } => Ok(Box::new(StubBackend::new())),
        BackendSpec::Stub { fixtures_dir: Some(dir) } => {
            let dir = resolve_relative(base, dir);
            let stub = StubBackend::load_dir(&dir)
                .with_context(|| format!("loading stub fixtures from {}", dir.display()))?;
            Ok(Box::new(stub))
        }
        BackendSpec::Http { url } => Ok(Box::new(HttpBackend::new(url))),
    }
}

/// The mock compiler ships as a sibling binary of this executable.
pub fn mockc_path() -> Result<PathBuf> {
    let exe = std::env::current_exe().context("locating current executable")?;
    let dir = exe.parent().context("current executable has no parent directory")?;
    let candidate = dir.join(format!("mockc{}", std::env::consts::EXE_SUFFIX));
    if !candidate.exists() {
        bail!("mock compiler not found at {}", candidate.display());
    }
    Ok(candidate)
}

fn build_compiler(spec: &CompilerSpec, base: &Path) -> Result<CompilerProfile> {
    match spec {
        CompilerSpec::Mock => Ok(CompilerProfile::mock(&mockc_path()?)),
        CompilerSpec::Unity => Ok(CompilerProfile::unity()),
        CompilerSpec::Profile { path } => {
            let path = resolve_relative(base, path);
            Ok(CompilerProfile::load(&path)?)
        }
    }
}

fn cmd_extract(args: &ExtractArgs) -> Result<i32> {
    let prefabs = GuidMap::load(&args.guid_maps.join("prefab_guids.json"), GuidKind::PrefabAsset)?;
    let scripts = GuidMap::load(&args.guid_maps.join("script_guids.json"), GuidKind::ScriptClass)?;
    let classes = ClassIdMap::default();
    let validator = ValidatorConfig::default();
    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;

    let mut scene_files: Vec<PathBuf> = std::fs::read_dir(&args.scenes)
        .with_context(|| format!("reading {}", args.scenes.display()))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "unity"))
        .collect();
    scene_files.sort();
    if scene_files.is_empty() {
        bail!("no .unity files in {}", args.scenes.display());
    }

    let mut failures = 0usize;
    for path in &scene_files {
        let pattern_id = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
        let outcome = (|| -> Result<String> {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            let doc = parse_scene(&text, pattern_id)?;
            let config = PatternConfig::load(&args.config_dir.join(format!("{pattern_id}.json")))?;
            let ir = assemble_ir(&doc, &prefabs, &scripts, &config, &classes, &validator)?;
            let json = serialize_ir(&ir)?;
            let out_path = args.out.join(format!("{pattern_id}.json"));
            std::fs::write(&out_path, &json)
                .with_context(|| format!("writing {}", out_path.display()))?;
            let stats = structural_stats(&ir);
            let report = validate(&ir, &validator);
            Ok(format!(
                "objects {}, scripts {}, links {}, rules {}, warnings {}",
                stats.objects,
                stats.scripts,
                stats.links,
                stats.rules,
                report.warnings.len()
            ))
        })();
        match outcome {
            Ok(line) => println!("{pattern_id}: ok ({line})"),
            Err(e) => {
                failures += 1;
                eprintln!("{pattern_id}: error: {e:#}");
            }
        }
    }
    println!("extracted {} of {} scenes", scene_files.len() - failures, scene_files.len());
    Ok(if failures == 0 { 0 } else { 1 })
}

fn cmd_validate(args: &ValidateArgs) -> Result<i32> {
    let validator = ValidatorConfig::default();
    let mut all_valid = true;
    let mut json_out = Vec::new();
    for file in &args.files {
        let outcome = std::fs::read_to_string(file)
            .map_err(anyhow::Error::from)
            .and_then(|text| parse_ir(&text).map_err(anyhow::Error::from));
        match outcome {
            Ok(ir) => {
                let report = validate(&ir, &validator);
                if args.format == "json" {
                    json_out.push(serde_json::json!({
                        "file": file.display().to_string(),
                        "report": report,
                    }));
                } else if report.valid {
                    println!("{}: valid ({} warnings)", file.display(), report.warnings.len());
                    for warning in &report.warnings {
                        println!("  warning {} at {}: {}", warning.code, warning.path, warning.message);
                    }
                } else {
                    println!("{}: INVALID", file.display());
                    for violation in &report.violations {
                        println!(
                            "  {} at {}: {}",
                            violation.constraint, violation.path, violation.message
                        );
                    }
                }
                all_valid &= report.valid;
            }
            Err(e) => {
                all_valid = false;
                if args.format == "json" {
                    json_out.push(serde_json::json!({
                        "file": file.display().to_string(),
                        "error": format!("{e:#}"),
                    }));
                } else {
                    println!("{}: unreadable: {e:#}", file.display());
                }
            }
        }
    }
    if args.format == "json" {
        println!("{}", serde_json::to_string_pretty(&json_out)?);
    }
    Ok(if all_valid { 0 } else { 1 })
}

fn cmd_prompt(args: &PromptArgs) -> Result<i32> {
    let Some(method) = Method::parse(&args.method) else {
        bail!("unknown method '{}'", args.method);
    };
    let stage = match args.stage.as_str() {
        "ir_generation" => Stage::IrGeneration,
        "csharp_generation" => Stage::CsharpGeneration,
        other => bail!("unknown stage '{other}' (expected ir_generation or csharp_generation)"),
    };
    let templates = match &args.templates {
        Some(dir) => TemplateSet::load_dir(dir)?,
        None => TemplateSet::builtin(),
    };
    let read_opt = |path: &Option<PathBuf>| -> Result<Option<String>> {
        Ok(match path {
            Some(p) => Some(
                std::fs::read_to_string(p)
                    .with_context(|| format!("reading {}", p.display()))?,
            ),
            None => None,
        })
    };
    let request = PromptRequest {
        pattern_id: args.pattern_id.clone(),
        method,
        stage,
        pattern_md: read_opt(&args.pattern_md)?,
        ir_json: read_opt(&args.ir_json)?,
    };
    print!("{}", templates.render(&request)?);
    Ok(0)
}

fn cmd_run(args: &RunArgs) -> Result<i32> {
    let manifest = RunManifest::load(&args.manifest)?;
    let base = args.manifest.parent().unwrap_or(Path::new(".")).to_path_buf();

    let mut patterns = Vec::new();
    for pattern in &manifest.patterns {
        let md = match (&pattern.md, &pattern.md_path) {
            (Some(text), None) => text.clone(),
            (None, Some(path)) => {
                let path = resolve_relative(&base, path);
                std::fs::read_to_string(&path)
                    .with_context(|| format!("reading pattern text {}", path.display()))?
            }
            _ => unreachable!("manifest check enforces exactly one source"),
        };
        patterns.push(PatternInput { id: pattern.id.clone(), md });
    }
    let methods: Vec<Method> = manifest
        .methods
        .iter()
        .map(|m| Method::parse(m).expect("manifest check accepted the method names"))
        .collect();
    let spec = GridSpec {
        patterns,
        models: manifest.models.clone(),
        methods,
        seeds: manifest.seeds.clone(),
        forward_seed: manifest.forward_seed,
    };

    let backend_spec = match &args.backend {
        Some(flag) => parse_backend_flag(flag)?,
        None => manifest.backend,
    };
    let backend = build_backend(&backend_spec, &base)?;
    let compiler_spec = match &args.compiler {
        Some(flag) => parse_compiler_flag(flag)?,
        None => manifest.compiler,
    };
    let profile = build_compiler(&compiler_spec, &base)?;
    let templates = match &manifest.templates_dir {
        Some(dir) => TemplateSet::load_dir(&resolve_relative(&base, dir))?,
        None => TemplateSet::builtin(),
    };

    let runs_dir = manifest
        .runs_dir
        .as_ref()
        .map(|d| resolve_relative(&base, d))
        .unwrap_or_else(|| base.join("runs"));
    let run_root = runs_dir.join(&manifest.run_id);
    let out_path = args.out.clone().unwrap_or_else(|| run_root.join("records.jsonl"));
    let config = RunnerConfig {
        out_path: out_path.clone(),
        artifacts_dir: run_root.join("artifacts"),
        timeout_budget: Duration::from_secs(args.timeout_secs.unwrap_or(manifest.timeout_secs)),
        workers: args.workers.unwrap_or(manifest.workers),
    };

    let summary = run_grid(
        &spec,
        backend.as_ref(),
        &RetryPolicy::default(),
        &templates,
        &profile,
        &config,
    )?;
    println!(
        "run {}: total {}, executed {}, skipped {}",
        manifest.run_id, summary.total_cells, summary.executed, summary.skipped
    );
    for (status, count) in &summary.status_counts {
        println!("  {status}: {count}");
    }
    println!("records: {}", out_path.display());
    Ok(0)
}

fn load_taxonomy(path: &Option<PathBuf>) -> Result<ErrorTaxonomy> {
    Ok(match path {
        Some(p) => ErrorTaxonomy::load(p)?,
        None => ErrorTaxonomy::builtin().clone(),
    })
}

fn layer_label(layer: GroundingLayer) -> &'static str {
    match layer {
        GroundingLayer::ProjectLevel => "project_level",
        GroundingLayer::EngineApi => "engine_api",
        GroundingLayer::Architectural => "architectural",
        GroundingLayer::NotGrounding => "-",
    }
}

fn cmd_analyze(args: &AnalyzeArgs) -> Result<i32> {
    let taxonomy = load_taxonomy(&args.taxonomy)?;
    let text = std::fs::read_to_string(&args.log)
        .with_context(|| format!("reading {}", args.log.display()))?;
    let scan = scan_log(&text);
    if args.format == "json" {
        let mut codes = serde_json::Map::new();
        for code in &scan.codes {
            let class = taxonomy.classify(code).unwrap_or(Classification::Unknown);
            let layer = layer_label(taxonomy.grounding_layer(code));
            codes.insert(
                code.clone(),
                serde_json::json!({
                    "class": format!("{class:?}").to_lowercase(),
                    "layer": layer,
                    "occurrences": scan.code_counts.get(code).copied().unwrap_or(1),
                }),
            );
        }
        println!("{}", serde_json::to_string_pretty(&serde_json::Value::Object(codes))?);
        return Ok(0);
    }
    let mut grounding = 0usize;
    let mut hygiene = 0usize;
    let mut unknown = 0usize;
    for code in &scan.codes {
        let class = taxonomy.classify(code).unwrap_or(Classification::Unknown);
        match class {
            Classification::Grounding => grounding += 1,
            Classification::Hygiene => hygiene += 1,
            Classification::Unknown => unknown += 1,
        }
        let layer = layer_label(taxonomy.grounding_layer(code));
        println!(
            "{code} {} {layer} x{}",
            format!("{class:?}").to_lowercase(),
            scan.code_counts.get(code).copied().unwrap_or(1)
        );
    }
    let occurrences: usize = scan.code_counts.values().sum();
    println!(
        "total: {} codes, {} occurrences (grounding {}, hygiene {}, unknown {})",
        scan.codes.len(),
        occurrences,
        grounding,
        hygiene,
        unknown
    );
    Ok(0)
}

fn format_extension(format: ReportFormat) -> &'static str {
    match format {
        ReportFormat::Markdown => "md",
        ReportFormat::Csv => "csv",
        ReportFormat::Json => "json",
    }
}

fn cmd_report(args: &ReportArgs) -> Result<i32> {
    if args.records.is_none() && args.ir_dir.is_none() {
        bail!("nothing to report: pass --records and/or --ir-dir");
    }
    let format = ReportFormat::parse(&args.format)?;
    let taxonomy = load_taxonomy(&args.taxonomy)?;
    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    let ks: Vec<u64> = args
        .k
        .split(',')
        .filter(|s| !s.is_empty())
        .map(|s| s.trim().parse::<u64>().with_context(|| format!("bad k value '{s}'")))
        .collect::<Result<_>>()?;

    if let Some(records_path) = &args.records {
        let records = read_jsonl(records_path)?;
        let report = aggregate(&records, &taxonomy);
        let rendered = render_report(&report, &taxonomy, format, &ks)?;
        let out_path = args.out.join(format!("metrics.{}", format_extension(format)));
        std::fs::write(&out_path, rendered)
            .with_context(|| format!("writing {}", out_path.display()))?;
        println!("metrics over {} records -> {}", records.len(), out_path.display());
    }

    if let Some(ir_dir) = &args.ir_dir {
        let mut files: Vec<PathBuf> = std::fs::read_dir(ir_dir)
            .with_context(|| format!("reading {}", ir_dir.display()))?
            .filter_map(|entry| entry.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "json"))
            .collect();
        files.sort();
        let mut irs = Vec::new();
        for file in &files {
            let text = std::fs::read_to_string(file)
                .with_context(|| format!("reading {}", file.display()))?;
            irs.push(parse_ir(&text).with_context(|| format!("parsing {}", file.display()))?);
        }
        let tiers = frequency_tiers(&irs)?;
        let rendered = render_tiers(&tiers, format);
        let out_path = args.out.join(format!("tiers.{}", format_extension(format)));
        std::fs::write(&out_path, rendered)
            .with_context(|| format!("writing {}", out_path.display()))?;
        println!("frequency tiers over {} documents -> {}", irs.len(), out_path.display());
    }
    Ok(0)
}

/// Dispatches a parsed command line; returns the process exit status.
pub fn execute(cli: Cli) -> Result<i32> {
    match &cli.command {
        Command::Extract(args) => cmd_extract(args),
        Command::Validate(args) => cmd_validate(args),
        Command::Prompt(args) => cmd_prompt(args),
        Command::Run(args) => cmd_run(args),
        Command::Analyze(args) => cmd_analyze(args),
        Command::Report(args) => cmd_report(args),
    }
}
