//! Generation backends: a trait for single-completion services, bounded
//! retry with exponential backoff, a deterministic stub for desk-scale
//! runs, and an HTTP client for vLLM-style completion endpoints.

use crate::prompt::{Method, PromptRequest, Stage, TemplateSet};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::HashMap;
use std::path::Path;
use std::time::{Duration, Instant};
use thiserror::Error;

pub const ENV_BACKEND_TOKEN: &str = "GPC_BACKEND_TOKEN";

/// Output-side budgets per stage.
pub const MAX_TOKENS_IR: u32 = 4096;
pub const MAX_TOKENS_CSHARP: u32 = 2048;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecodingParams {
    pub temperature: f64,
    pub top_p: f64,
    pub max_model_len: u32,
    pub max_tokens: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Default for DecodingParams {
    fn default() -> Self {
        DecodingParams {
            temperature: 0.2,
            top_p: 0.95,
            max_model_len: 3072,
            max_tokens: MAX_TOKENS_CSHARP,
            seed: None,
        }
    }
}

impl DecodingParams {
    /// Stage defaults: the IR stage gets the larger output budget.
    pub fn for_stage(stage: Stage) -> DecodingParams {
        let max_tokens = match stage {
            Stage::IrGeneration => MAX_TOKENS_IR,
            Stage::CsharpGeneration => MAX_TOKENS_CSHARP,
        };
        DecodingParams { max_tokens, ..DecodingParams::default() }
    }

    pub fn check(&self) -> Result<(), BackendError> {
        if self.temperature < 0.0 {
            return Err(BackendError::InvalidRequest {
                message: format!("temperature {} is negative", self.temperature),
            });
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(BackendError::InvalidRequest {
                message: format!("top_p {} outside (0, 1]", self.top_p),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub model_id: String,
    pub prompt: String,
    pub params: DecodingParams,
}

#[derive(Debug, Clone)]
pub struct GenerationResult {
    pub text: String,
    pub latency: Duration,
    pub backend: String,
}

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("invalid generation request: {message}")]
    InvalidRequest { message: String },
    #[error("authentication rejected (HTTP {status}): {message}")]
    Auth { status: u16, message: String },
    #[error("transient backend failure: {message}")]
    Transport { message: String },
    #[error("gave up after {attempts} attempts; last failure: {last}")]
    Exhausted { attempts: usize, last: String },
}

pub trait Backend: Send + Sync {
    fn name(&self) -> &str;
    /// One completion attempt; retry lives in [`generate`].
    fn complete(&self, req: &GenerationRequest) -> Result<String, BackendError>;
}

/// Bounded exponential backoff: attempt i sleeps `base * 2^(i-1)` after a
/// transient failure. Defaults to 3 attempts at 1 s / 2 s / 4 s.
#[derive(Debug, Clone, Copy)]
pub struct RetryPolicy {
    pub max_attempts: usize,
    pub base_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { max_attempts: 3, base_backoff: Duration::from_secs(1) }
    }
}

impl RetryPolicy {
    pub fn backoff_before(&self, attempt: usize) -> Duration {
        debug_assert!(attempt >= 2);
        self.base_backoff * (1u32 << (attempt - 2).min(16))
    }
}

/// Runs one completion with retries. Transient transport failures back off
/// and retry; authentication failures and malformed requests fail fast.
pub fn generate(
    backend: &dyn Backend,
    req: &GenerationRequest,
    policy: &RetryPolicy,
) -> Result<GenerationResult, BackendError> {
    if req.prompt.is_empty() {
        return Err(BackendError::InvalidRequest { message: "empty prompt".into() });
    }
    req.params.check()?;

    let started = Instant::now();
    let mut last = String::new();
    for attempt in 1..=policy.max_attempts.max(1) {
        if attempt > 1 {
            std::thread::sleep(policy.backoff_before(attempt));
        }
        match backend.complete(req) {
            Ok(text) => {
                return Ok(GenerationResult {
                    text,
                    latency: started.elapsed(),
                    backend: backend.name().to_string(),
                })
            }
            Err(BackendError::Transport { message }) => last = message,
            Err(fatal) => return Err(fatal),
        }
    }
    Err(BackendError::Exhausted { attempts: policy.max_attempts.max(1), last })
}

fn prompt_key(prompt: &str, seed: Option<u64>) -> String {
    let mut hasher = Sha256::new();
    hasher.update(prompt.as_bytes());
    let digest = hex::encode(hasher.finalize());
    format!("{}_{}", &digest[..16], seed.unwrap_or(0))
}

/// Deterministic offline backend. Completions come from a fixture table
/// keyed by (prompt hash, seed); anything off the table falls back to a
/// synthesized completion that depends only on the request, so whole-grid
/// runs are reproducible byte-for-byte without any fixtures at all.
#[derive(Debug, Default)]
pub struct StubBackend {
    fixtures: HashMap<String, String>,
}

impl StubBackend {
    pub fn new() -> StubBackend {
        StubBackend::default()
    }

    pub fn with_fixture(mut self, prompt: &str, seed: Option<u64>, text: &str) -> StubBackend {
        self.fixtures.insert(prompt_key(prompt, seed), text.to_string());
        self
    }

    /// Loads `<16-hex-prompt-hash>_<seed>.txt` files.
    pub fn load_dir(dir: &Path) -> std::io::Result<StubBackend> {
        let mut fixtures = HashMap::new();
        for entry in std::fs::read_dir(dir)? {
            let path = entry?.path();
            if path.extension().is_some_and(|e| e == "txt") {
                if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                    fixtures.insert(stem.to_string(), std::fs::read_to_string(&path)?);
                }
            }
        }
        Ok(StubBackend { fixtures })
    }

    fn fallback(req: &GenerationRequest) -> String {
        let pattern = req
            .prompt
            .lines()
            .next()
            .and_then(|l| l.strip_prefix("[pattern: "))
            .and_then(|l| l.strip_suffix(']'))
            .unwrap_or("Unknown");
        let mut hasher = Sha256::new();
        hasher.update(req.model_id.as_bytes());
        hasher.update(b"\0");
        hasher.update(req.prompt.as_bytes());
        hasher.update(req.params.seed.unwrap_or(0).to_le_bytes());
        let tag = hex::encode(&hasher.finalize()[..4]);

        if req.prompt.contains("Output ONLY valid JSON") {
            return format!(
                "{{\n  \"scene\": \"{pattern}\",\n  \"objects\": [\n    {{ \"id\": \"{tag}\", \"name\": \"Root\", \"type\": \"GameObject\" }}\n  ],\n  \"scripts\": [],\n  \"params\": {{}},\n  \"runtime_params\": {{}},\n  \"links\": [],\n  \"rules\": []\n}}"
            );
        }
        let class = pattern.replace(|c: char| !c.is_ascii_alphanumeric(), "_");
        format!(
            "Here is the generated script.\n```csharp\nusing UnityEngine;\nusing UnityEditor;\n\n// build tag {tag}\npublic class Gen_{class} : MonoBehaviour\n{{\n    void Start()\n    {{\n        Debug.Log(\"{pattern} ready\");\n    }}\n}}\n```\n"
        )
    }
}

impl Backend for StubBackend {
    fn name(&self) -> &str {
        "stub"
    }

    fn complete(&self, req: &GenerationRequest) -> Result<String, BackendError> {
        let key = prompt_key(&req.prompt, req.params.seed);
        Ok(self.fixtures.get(&key).cloned().unwrap_or_else(|| Self::fallback(req)))
    }
}

/// vLLM-style HTTP completion backend. Sends
/// `{model, prompt, temperature, top_p, max_tokens, seed?}` and accepts
/// either `{"text": ...}` or `{"choices": [{"text": ...}]}` responses.
/// A bearer token is read from `GPC_BACKEND_TOKEN` when present.
pub struct HttpBackend {
    url: String,
    client: reqwest::blocking::Client,
    token: Option<String>,
}

impl HttpBackend {
    pub fn new(url: &str) -> HttpBackend {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(600))
            .build()
            .expect("static client config");
        HttpBackend {
            url: url.to_string(),
            client,
            token: std::env::var(ENV_BACKEND_TOKEN).ok(),
        }
    }

    pub fn payload(req: &GenerationRequest) -> serde_json::Value {
        let mut body = serde_json::json!({
            "model": req.model_id,
            "prompt": req.prompt,
            "temperature": req.params.temperature,
            "top_p": req.params.top_p,
            "max_tokens": req.params.max_tokens,
        });
        if let Some(seed) = req.params.seed {
            body["seed"] = serde_json::json!(seed);
        }
        body
    }

    fn classify_status(status: u16, body: String) -> BackendError {
        match status {
            401 | 403 => BackendError::Auth { status, message: body },
            408 | 429 => BackendError::Transport { message: format!("HTTP {status}: {body}") },
            500..=599 => BackendError::Transport { message: format!("HTTP {status}: {body}") },
            _ => BackendError::InvalidRequest { message: format!("HTTP {status}: {body}") },
        }
    }

    fn extract_text(value: &serde_json::Value) -> Option<String> {
        if let Some(text) = value.get("text").and_then(|t| t.as_str()) {
            return Some(text.to_string());
        }
        value
            .get("choices")
            .and_then(|c| c.get(0))
            .and_then(|c| c.get("text"))
            .and_then(|t| t.as_str())
            .map(str::to_string)
    }
}

impl Backend for HttpBackend {
    fn name(&self) -> &str {
        "http"
    }

    fn complete(&self, req: &GenerationRequest) -> Result<String, BackendError> {
        let mut call = self.client.post(&self.url).json(&Self::payload(req));
        if let Some(token) = &self.token {
            call = call.bearer_auth(token);
        }
        let response = call
            .send()
            .map_err(|e| BackendError::Transport { message: e.to_string() })?;
        let status = response.status().as_u16();
        let body = response
            .text()
            .map_err(|e| BackendError::Transport { message: e.to_string() })?;
        if !(200..300).contains(&status) {
            return Err(Self::classify_status(status, body));
        }
        let value: serde_json::Value =
            serde_json::from_str(&body).map_err(|e| BackendError::Transport {
                message: format!("unparseable completion body: {e}"),
            })?;
        Self::extract_text(&value).ok_or_else(|| BackendError::Transport {
            message: "completion body has no text field".into(),
        })
    }
}

/// One prompt/output pair within a cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: Stage,
    pub prompt: String,
    pub output: String,
    pub max_tokens: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum CellStatus {
    Generated,
    GenerationFailed { error: String },
}

/// The pre-compile half of one grid record: every prompt sent and every raw
/// output received for (pattern, model, method, seed).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationCell {
    pub pattern_id: String,
    pub model_id: String,
    pub method: Method,
    pub seed: u64,
    pub stages: Vec<StageRecord>,
    pub outcome: CellStatus,
}

impl GenerationCell {
    /// Raw text of the final C# stage, when generation got that far.
    pub fn csharp_output(&self) -> Option<&str> {
        self.stages
            .iter()
            .rev()
            .find(|s| s.stage == Stage::CsharpGeneration)
            .map(|s| s.output.as_str())
    }

    pub fn ir_output(&self) -> Option<&str> {
        self.stages
            .iter()
            .find(|s| s.stage == Stage::IrGeneration)
            .map(|s| s.output.as_str())
    }
}

/// Drives generation for one cell. `no_schema` is a single call from the
/// pattern text; the IR-conditioned methods first produce an IR JSON (larger
/// budget), then translate it to C#. The intermediate IR is fed through
/// as-is — validating it is a separate diagnostic, not a gate. Backend
/// errors yield a `generation_failed` cell, never a dropped one.
#[allow(clippy::too_many_arguments)]
pub fn run_cell(
    backend: &dyn Backend,
    policy: &RetryPolicy,
    templates: &TemplateSet,
    pattern_id: &str,
    pattern_md: &str,
    model_id: &str,
    method: Method,
    seed: u64,
    forward_seed: bool,
) -> GenerationCell {
    let mut cell = GenerationCell {
        pattern_id: pattern_id.to_string(),
        model_id: model_id.to_string(),
        method,
        seed,
        stages: Vec::new(),
        outcome: CellStatus::Generated,
    };
    let sampling_seed = forward_seed.then_some(seed);

    let run_stage = |cell: &mut GenerationCell, stage: Stage, req: PromptRequest| -> Option<String> {
        let prompt = match templates.render(&req) {
            Ok(p) => p,
            Err(e) => {
                cell.outcome = CellStatus::GenerationFailed { error: e.to_string() };
                return None;
            }
        };
        let mut params = DecodingParams::for_stage(stage);
        params.seed = sampling_seed;
        let request =
            GenerationRequest { model_id: model_id.to_string(), prompt: prompt.clone(), params };
        match generate(backend, &request, policy) {
            Ok(result) => {
                cell.stages.push(StageRecord {
                    stage,
                    prompt,
                    output: result.text.clone(),
                    max_tokens: params.max_tokens,
                });
                Some(result.text)
            }
            Err(e) => {
                cell.outcome = CellStatus::GenerationFailed { error: e.to_string() };
                cell.stages.push(StageRecord {
                    stage,
                    prompt,
                    output: String::new(),
                    max_tokens: params.max_tokens,
                });
                None
            }
        }
    };

    if method == Method::NoSchema {
        run_stage(
            &mut cell,
            Stage::CsharpGeneration,
            PromptRequest {
                pattern_id: pattern_id.to_string(),
                method,
                stage: Stage::CsharpGeneration,
                pattern_md: Some(pattern_md.to_string()),
                ir_json: None,
            },
        );
        return cell;
    }

    let ir_json = run_stage(
        &mut cell,
        Stage::IrGeneration,
        PromptRequest {
            pattern_id: pattern_id.to_string(),
            method,
            stage: Stage::IrGeneration,
            pattern_md: Some(pattern_md.to_string()),
            ir_json: None,
        },
    );
    let Some(ir_json) = ir_json else { return cell };
    run_stage(
        &mut cell,
        Stage::CsharpGeneration,
        PromptRequest {
            pattern_id: pattern_id.to_string(),
            method,
            stage: Stage::CsharpGeneration,
            pattern_md: None,
            ir_json: Some(ir_json),
        },
    );
    cell
}

/// All four methods for all patterns/models/seeds, in deterministic grid
/// order (pattern-major, then model, then method, then seed).
pub fn grid_cells(
    patterns: &[String],
    models: &[String],
    methods: &[Method],
    seeds: &[u64],
) -> Vec<(String, String, Method, u64)> {
    let mut cells = Vec::new();
    for pattern in patterns {
        for model in models {
            for method in methods {
                for &seed in seeds {
                    cells.push((pattern.clone(), model.clone(), *method, seed));
                }
            }
        }
    }
    cells
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    struct FlakyBackend {
        calls: AtomicUsize,
        fail_first: usize,
        fatal: bool,
    }

    impl Backend for FlakyBackend {
        fn name(&self) -> &str {
            "flaky"
        }
        fn complete(&self, _req: &GenerationRequest) -> Result<String, BackendError> {
            let n = self.calls.fetch_add(1, Ordering::SeqCst);
            if n < self.fail_first {
                if self.fatal {
                    Err(BackendError::Auth { status: 401, message: "bad token".into() })
                } else {
                    Err(BackendError::Transport { message: format!("attempt {n} failed") })
                }
            } else {
                Ok("recovered".into())
            }
        }
    }

    fn req(prompt: &str) -> GenerationRequest {
        GenerationRequest {
            model_id: "test-model".into(),
            prompt: prompt.into(),
            params: DecodingParams::default(),
        }
    }

    fn fast_retry() -> RetryPolicy {
        RetryPolicy { max_attempts: 3, base_backoff: Duration::ZERO }
    }

    #[test]
    fn stage_budgets_match_configuration() {
        assert_eq!(DecodingParams::for_stage(Stage::IrGeneration).max_tokens, 4096);
        assert_eq!(DecodingParams::for_stage(Stage::CsharpGeneration).max_tokens, 2048);
        let d = DecodingParams::default();
        assert_eq!(d.temperature, 0.2);
        assert_eq!(d.top_p, 0.95);
        assert_eq!(d.max_model_len, 3072);
    }

    #[test]
    fn invalid_requests_fail_fast() {
        let stub = StubBackend::new();
        let policy = fast_retry();
        assert!(matches!(
            generate(&stub, &req(""), &policy),
            Err(BackendError::InvalidRequest { .. })
        ));
        let mut bad = req("x");
        bad.params.top_p = 1.5;
        assert!(generate(&stub, &bad, &policy).is_err());
        bad.params.top_p = 0.9;
        bad.params.temperature = -0.1;
        assert!(generate(&stub, &bad, &policy).is_err());
    }

    #[test]
    fn transient_failures_retry_then_succeed() {
        let backend = FlakyBackend { calls: AtomicUsize::new(0), fail_first: 2, fatal: false };
        let out = generate(&backend, &req("hello"), &fast_retry()).unwrap();
        assert_eq!(out.text, "recovered");
        assert_eq!(backend.calls.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn exhausted_retries_report_last_failure() {
        let backend = FlakyBackend { calls: AtomicUsize::new(0), fail_first: 99, fatal: false };
        match generate(&backend, &req("hello"), &fast_retry()) {
            Err(BackendError::Exhausted { attempts: 3, last }) => {
                assert!(last.contains("attempt 2"))
            }
            other => panic!("expected Exhausted, got {other:?}"),
        }
        assert_eq!(backend.calls.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn auth_failures_do_not_retry() {
        let backend = FlakyBackend { calls: AtomicUsize::new(0), fail_first: 99, fatal: true };
        assert!(matches!(
            generate(&backend, &req("hello"), &fast_retry()),
            Err(BackendError::Auth { status: 401, .. })
        ));
        assert_eq!(backend.calls.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn backoff_schedule_doubles() {
        let policy = RetryPolicy::default();
        assert_eq!(policy.backoff_before(2), Duration::from_secs(1));
        assert_eq!(policy.backoff_before(3), Duration::from_secs(2));
        assert_eq!(policy.backoff_before(4), Duration::from_secs(4));
    }

    #[test]
    fn stub_returns_fixture_text_on_hit() {
        let mut r = req("the prompt");
        r.params.seed = Some(7);
        let stub = StubBackend::new().with_fixture("the prompt", Some(7), "FIXED OUTPUT");
        let out = generate(&stub, &r, &fast_retry()).unwrap();
        assert_eq!(out.text, "FIXED OUTPUT");
        assert_eq!(out.backend, "stub");
    }

    #[test]
    fn stub_fallback_is_deterministic_and_stage_aware() {
        let stub = StubBackend::new();
        let csharp = req("[pattern: 3_Eliminate]\n[method: no_schema]\n\nOutput only raw C# code.\n\nX");
        let a = generate(&stub, &csharp, &fast_retry()).unwrap().text;
        let b = generate(&stub, &csharp, &fast_retry()).unwrap().text;
        assert_eq!(a, b);
        assert!(a.contains("```csharp"));
        assert!(a.contains("Gen_3_Eliminate"));

        let ir = req("[pattern: 3_Eliminate]\n[method: with_schema_min]\n\nOutput ONLY valid JSON. No extra text.\n\nX");
        let text = generate(&stub, &ir, &fast_retry()).unwrap().text;
        let parsed = crate::ir::parse_ir(&text).expect("stub IR fallback parses");
        assert_eq!(parsed.scene, "3_Eliminate");
        let report = crate::ir::validate(&parsed, &crate::ir::ValidatorConfig::default());
        assert!(report.valid);
    }

    #[test]
    fn stub_fixture_dir_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let key = prompt_key("p", Some(3));
        std::fs::write(dir.path().join(format!("{key}.txt")), "from disk").unwrap();
        let stub = StubBackend::load_dir(dir.path()).unwrap();
        let mut r = req("p");
        r.params.seed = Some(3);
        assert_eq!(stub.complete(&r).unwrap(), "from disk");
    }

    #[test]
    fn empty_completion_is_recorded_not_erased() {
        let stub = StubBackend::new().with_fixture("p", None, "");
        let out = generate(&stub, &req("p"), &fast_retry()).unwrap();
        assert_eq!(out.text, "");
    }

    #[test]
    fn http_payload_carries_decoding_config() {
        let mut r = req("complete me");
        r.params.seed = Some(11);
        r.params.max_tokens = MAX_TOKENS_IR;
        let payload = HttpBackend::payload(&r);
        assert_eq!(payload["model"], "test-model");
        assert_eq!(payload["temperature"], 0.2);
        assert_eq!(payload["top_p"], 0.95);
        assert_eq!(payload["max_tokens"], 4096);
        assert_eq!(payload["seed"], 11);
        r.params.seed = None;
        assert!(HttpBackend::payload(&r).get("seed").is_none());
    }

    #[test]
    fn http_status_classification() {
        assert!(matches!(
            HttpBackend::classify_status(401, String::new()),
            BackendError::Auth { .. }
        ));
        assert!(matches!(
            HttpBackend::classify_status(403, String::new()),
            BackendError::Auth { .. }
        ));
        for s in [408, 429, 500, 503] {
            assert!(matches!(
                HttpBackend::classify_status(s, String::new()),
                BackendError::Transport { .. }
            ));
        }
        assert!(matches!(
            HttpBackend::classify_status(422, String::new()),
            BackendError::InvalidRequest { .. }
        ));
    }

    #[test]
    fn http_response_text_extraction() {
        let direct = serde_json::json!({"text": "abc"});
        assert_eq!(HttpBackend::extract_text(&direct).unwrap(), "abc");
        let openai = serde_json::json!({"choices": [{"text": "xyz"}]});
        assert_eq!(HttpBackend::extract_text(&openai).unwrap(), "xyz");
        let neither = serde_json::json!({"ok": true});
        assert!(HttpBackend::extract_text(&neither).is_none());
    }

    #[test]
    fn run_cell_no_schema_is_single_stage() {
        let stub = StubBackend::new();
        let cell = run_cell(
            &stub,
            &fast_retry(),
            &TemplateSet::builtin(),
            "1_Ownership",
            "pattern text",
            "test-model",
            Method::NoSchema,
            0,
            true,
        );
        assert_eq!(cell.outcome, CellStatus::Generated);
        assert_eq!(cell.stages.len(), 1);
        assert_eq!(cell.stages[0].stage, Stage::CsharpGeneration);
        assert_eq!(cell.stages[0].max_tokens, 2048);
        assert!(cell.csharp_output().is_some());
        assert!(cell.ir_output().is_none());
    }

    #[test]
    fn run_cell_ir_method_is_two_stages_in_order() {
        let stub = StubBackend::new();
        let cell = run_cell(
            &stub,
            &fast_retry(),
            &TemplateSet::builtin(),
            "1_Ownership",
            "pattern text",
            "test-model",
            Method::WithSchemaFull,
            0,
            true,
        );
        assert_eq!(cell.outcome, CellStatus::Generated);
        assert_eq!(cell.stages.len(), 2);
        assert_eq!(cell.stages[0].stage, Stage::IrGeneration);
        assert_eq!(cell.stages[0].max_tokens, 4096);
        assert_eq!(cell.stages[1].stage, Stage::CsharpGeneration);
        assert_eq!(cell.stages[1].max_tokens, 2048);
        // The C# prompt embeds the raw IR output of stage one.
        assert!(cell.stages[1].prompt.contains(&cell.stages[0].output));
    }

    #[test]
    fn run_cell_is_deterministic_with_stub() {
        let stub = StubBackend::new();
        let make = || {
            let cell = run_cell(
                &stub,
                &fast_retry(),
                &TemplateSet::builtin(),
                "9_Conceal",
                "pattern text",
                "test-model",
                Method::WithSchemaMin,
                13,
                true,
            );
            serde_json::to_string(&cell).unwrap()
        };
        assert_eq!(make(), make());
    }

    #[test]
    fn run_cell_marks_generation_failed() {
        let backend = FlakyBackend { calls: AtomicUsize::new(0), fail_first: 99, fatal: false };
        let cell = run_cell(
            &backend,
            &fast_retry(),
            &TemplateSet::builtin(),
            "1_Ownership",
            "pattern text",
            "test-model",
            Method::NoSchema,
            0,
            true,
        );
        assert!(matches!(cell.outcome, CellStatus::GenerationFailed { .. }));
        assert_eq!(cell.stages.len(), 1);
        assert_eq!(cell.stages[0].output, "");
    }

    #[test]
    fn seed_forwarding_is_optional() {
        struct CaptureSeed(std::sync::Mutex<Vec<Option<u64>>>);
        impl Backend for CaptureSeed {
            fn name(&self) -> &str {
                "capture"
            }
            fn complete(&self, req: &GenerationRequest) -> Result<String, BackendError> {
                self.0.lock().unwrap().push(req.params.seed);
                Ok("ok".into())
            }
        }
        let capture = CaptureSeed(std::sync::Mutex::new(Vec::new()));
        let templates = TemplateSet::builtin();
        run_cell(&capture, &fast_retry(), &templates, "p", "md", "m", Method::NoSchema, 5, true);
        run_cell(&capture, &fast_retry(), &templates, "p", "md", "m", Method::NoSchema, 5, false);
        let seen = capture.0.lock().unwrap();
        assert_eq!(*seen, vec![Some(5), None]);
    }

    #[test]
    fn grid_enumeration_counts_and_order() {
        let patterns: Vec<String> = (1..=26).map(|i| format!("p{i}")).collect();
        let models = vec!["m1".to_string(), "m2".to_string()];
        let methods = crate::prompt::list_methods().to_vec();
        let seeds: Vec<u64> = (0..20).collect();
        let cells = grid_cells(&patterns, &models, &methods, &seeds);
        assert_eq!(cells.len(), 4160);
        assert_eq!(cells[0], ("p1".into(), "m1".into(), Method::NoSchema, 0));
        assert_eq!(cells[19], ("p1".into(), "m1".into(), Method::NoSchema, 19));
        assert_eq!(cells[20], ("p1".into(), "m1".into(), Method::WithSchemaFree, 0));
        assert_eq!(cells[80], ("p1".into(), "m2".into(), Method::NoSchema, 0));
        assert_eq!(cells[160], ("p2".into(), "m1".into(), Method::NoSchema, 0));
    }
}
