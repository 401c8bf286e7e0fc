//! Prompt rendering for the four generation configurations. Templates live
//! in `templates/` as plain text; rendering is pure placeholder substitution
//! so every byte of the output is auditable against those files.

use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    NoSchema,
    WithSchemaFree,
    WithSchemaMin,
    WithSchemaFull,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::NoSchema => "no_schema",
            Method::WithSchemaFree => "with_schema_free",
            Method::WithSchemaMin => "with_schema_min",
            Method::WithSchemaFull => "with_schema_full",
        }
    }

    pub fn parse(s: &str) -> Option<Method> {
        list_methods().into_iter().find(|m| m.as_str() == s)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// The four configurations in their canonical reporting order.
pub fn list_methods() -> [Method; 4] {
    [Method::NoSchema, Method::WithSchemaFree, Method::WithSchemaMin, Method::WithSchemaFull]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    IrGeneration,
    CsharpGeneration,
}

impl Stage {
    pub fn as_str(&self) -> &'static str {
        match self {
            Stage::IrGeneration => "ir_generation",
            Stage::CsharpGeneration => "csharp_generation",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptRequest {
    pub pattern_id: String,
    pub method: Method,
    pub stage: Stage,
    pub pattern_md: Option<String>,
    pub ir_json: Option<String>,
}

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("{stage}/{method} requires `{field}` but the request does not carry it")]
    MissingPayload { stage: Stage, method: Method, field: &'static str },
    #[error("no template exists for {stage} with method {method}")]
    NoTemplate { stage: Stage, method: Method },
    #[error("template file {path}: {message}")]
    Io { path: String, message: String },
}

/// File stem (without `.txt`) for one stage/method combination.
/// `ir_generation` has no `no_schema` template: that configuration skips the
/// intermediate stage entirely.
pub fn template_name(stage: Stage, method: Method) -> Option<String> {
    if stage == Stage::IrGeneration && method == Method::NoSchema {
        return None;
    }
    Some(format!("{}_{}", stage.as_str(), method.as_str()))
}

macro_rules! builtin {
    ($name:literal) => {
        ($name, include_str!(concat!("../templates/", $name, ".txt")))
    };
}

const BUILTIN: [(&str, &str); 7] = [
    builtin!("csharp_generation_no_schema"),
    builtin!("csharp_generation_with_schema_free"),
    builtin!("csharp_generation_with_schema_min"),
    builtin!("csharp_generation_with_schema_full"),
    builtin!("ir_generation_with_schema_free"),
    builtin!("ir_generation_with_schema_min"),
    builtin!("ir_generation_with_schema_full"),
];

/// A resolved template collection, either the compiled-in set or one loaded
/// from a directory override.
#[derive(Debug, Clone)]
pub struct TemplateSet {
    texts: HashMap<String, String>,
}

impl TemplateSet {
    pub fn builtin() -> TemplateSet {
        let texts =
            BUILTIN.iter().map(|(name, text)| (name.to_string(), normalize(text))).collect();
        TemplateSet { texts }
    }

    /// Loads `<stage>_<method>.txt` for all seven combinations from `dir`.
    pub fn load_dir(dir: &Path) -> Result<TemplateSet, PromptError> {
        let mut texts = HashMap::new();
        for (name, _) in BUILTIN {
            let path = dir.join(format!("{name}.txt"));
            let text = std::fs::read_to_string(&path).map_err(|e| PromptError::Io {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
            texts.insert(name.to_string(), normalize(&text));
        }
        Ok(TemplateSet { texts })
    }

    pub fn get(&self, stage: Stage, method: Method) -> Option<&str> {
        template_name(stage, method).and_then(|n| self.texts.get(&n)).map(|s| s.as_str())
    }

    pub fn render(&self, req: &PromptRequest) -> Result<String, PromptError> {
        let template = self
            .get(req.stage, req.method)
            .ok_or(PromptError::NoTemplate { stage: req.stage, method: req.method })?;

        let missing = |field| PromptError::MissingPayload {
            stage: req.stage,
            method: req.method,
            field,
        };

        let mut out = template.replace("<PATTERN_ID>", &req.pattern_id);
        match (req.stage, req.method) {
            (Stage::CsharpGeneration, Method::NoSchema) | (Stage::IrGeneration, _) => {
                let md = req.pattern_md.as_deref().ok_or_else(|| missing("pattern_md"))?;
                out = out.replace("<PATTERN_MD>", md);
            }
            (Stage::CsharpGeneration, _) => {
                let ir = req.ir_json.as_deref().ok_or_else(|| missing("ir_json"))?;
                out = out.replace("<METHOD>", req.method.as_str());
                out = out.replace("<IR_JSON>", ir);
            }
        }
        Ok(out)
    }
}

fn normalize(text: &str) -> String {
    text.replace("\r\n", "\n")
}

/// Renders against the compiled-in templates.
pub fn render(req: &PromptRequest) -> Result<String, PromptError> {
    TemplateSet::builtin().render(req)
}
