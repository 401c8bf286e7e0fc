//! The runtime-evidence IR: a frozen JSON schema describing one Unity scene as
//! objects, script bindings, flattened runtime parameters, links, and rules.
//!
//! Parsing is strict (unknown or missing top-level fields are rejected), while
//! semantic problems are left to [`validate`], which reports them against the
//! four hard constraints C1..C4 so that callers can distinguish "not even the
//! right shape" from "well-formed but inconsistent".

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const IR_VERSION: &str = "v0.2-runtime-evidence";

/// Token used as a link source for scene-level structural links.
pub const SCENE_TOKEN: &str = "scene";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatternIR {
    pub scene: String,
    pub objects: Vec<IRObject>,
    pub scripts: Vec<ScriptBinding>,
    pub params: IndexMap<String, ParamValue>,
    pub runtime_params: IndexMap<String, IndexMap<String, ParamValue>>,
    pub links: Vec<Link>,
    pub rules: Vec<Rule>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IRObject {
    pub id: String,
    pub name: String,
    #[serde(rename = "type")]
    pub object_type: ObjectType,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ObjectType {
    GameObject,
    PrefabInstance,
    PrefabAsset,
}

impl ObjectType {
    pub fn as_str(&self) -> &'static str {
        match self {
            ObjectType::GameObject => "GameObject",
            ObjectType::PrefabInstance => "PrefabInstance",
            ObjectType::PrefabAsset => "PrefabAsset",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptBinding {
    pub id: String,
    pub object_id: String,
    pub class_name: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Link {
    pub source: String,
    pub target: String,
    pub relation: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub evidence_type: Option<EvidenceType>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rule {
    pub id: String,
    #[serde(rename = "type")]
    pub rule_type: String,
    pub description: String,
    pub pattern: String,
    /// Required by constraint C4, but optional at parse time so a document
    /// missing it can still be loaded and reported by [`validate`].
    #[serde(skip_serializing_if = "Option::is_none")]
    pub evidence_type: Option<EvidenceType>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub confidence: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvidenceType {
    DirectCode,
    SceneOverride,
    Inferred,
}

impl EvidenceType {
    pub fn as_str(&self) -> &'static str {
        match self {
            EvidenceType::DirectCode => "direct_code",
            EvidenceType::SceneOverride => "scene_override",
            EvidenceType::Inferred => "inferred",
        }
    }
}

/// Scalar value of a serialized script field. Nested structures are not
/// representable; extraction flattens or rejects them before this point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Bool(bool),
    Int(i64),
    Real(f64),
    Str(String),
}

impl ParamValue {
    pub fn as_json_string(&self) -> String {
        serde_json::to_string(self).expect("scalar serialization cannot fail")
    }
}

#[derive(Debug, Error)]
pub enum IrError {
    #[error("malformed JSON: {0}")]
    Json(String),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("enum error: {0}")]
    Enum(String),
    #[error("params must be empty, found {0} entries")]
    NonEmptyParams(usize),
}

/// Parses one IR document. Shape problems (missing/unknown fields, bad enum
/// values, non-scalar params) are errors; C1..C4 problems are not detected
/// here so that [`validate`] can report them.
pub fn parse_ir(text: &str) -> Result<PatternIR, IrError> {
    match serde_json::from_str::<PatternIR>(text) {
        Ok(ir) => Ok(ir),
        Err(e) => {
            if e.is_syntax() || e.is_eof() {
                Err(IrError::Json(e.to_string()))
            } else if e.to_string().contains("unknown variant") {
                Err(IrError::Enum(e.to_string()))
            } else {
                Err(IrError::Schema(e.to_string()))
            }
        }
    }
}

/// Serializes canonically: fixed field order, two-space indentation, trailing
/// newline. Refuses a document whose `params` is non-empty, which keeps the
/// frozen on-disk schema honest even for programmatically built values.
pub fn serialize_ir(ir: &PatternIR) -> Result<String, IrError> {
    if !ir.params.is_empty() {
        return Err(IrError::NonEmptyParams(ir.params.len()));
    }
    let mut out =
        serde_json::to_string_pretty(ir).map_err(|e| IrError::Schema(e.to_string()))?;
    out.push('\n');
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StructuralStats {
    pub objects: usize,
    pub scripts: usize,
    pub links: usize,
    pub rules: usize,
}

impl StructuralStats {
    pub fn as_tuple(&self) -> (usize, usize, usize, usize) {
        (self.objects, self.scripts, self.links, self.rules)
    }
}

impl std::ops::Add for StructuralStats {
    type Output = StructuralStats;
    fn add(self, rhs: StructuralStats) -> StructuralStats {
        StructuralStats {
            objects: self.objects + rhs.objects,
            scripts: self.scripts + rhs.scripts,
            links: self.links + rhs.links,
            rules: self.rules + rhs.rules,
        }
    }
}

pub fn structural_stats(ir: &PatternIR) -> StructuralStats {
    StructuralStats {
        objects: ir.objects.len(),
        scripts: ir.scripts.len(),
        links: ir.links.len(),
        rules: ir.rules.len(),
    }
}

#[derive(Debug, Clone)]
pub struct ValidatorConfig {
    /// Object ids ending in one of these suffixes are rejected as aggregate
    /// placeholders (C3).
    pub placeholder_suffixes: Vec<String>,
}

impl Default for ValidatorConfig {
    fn default() -> Self {
        ValidatorConfig { placeholder_suffixes: vec!["_all".to_string()] }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub constraint: String,
    pub message: String,
    pub path: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ValidationWarning {
    pub code: String,
    pub message: String,
    pub path: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub valid: bool,
    pub violations: Vec<Violation>,
    pub warnings: Vec<ValidationWarning>,
}

impl ValidationReport {
    pub fn constraint_ids(&self) -> Vec<&str> {
        self.violations.iter().map(|v| v.constraint.as_str()).collect()
    }
}

/// Checks the four hard constraints, in order:
///
/// * C1 — every `scripts[].object_id` references an `objects[].id`;
/// * C2 — script binding ids are unique (one binding, one object);
/// * C3 — no object id matches the placeholder lexicon;
/// * C4 — every rule carries an evidence type.
///
/// Structural problems only reachable on programmatically built values
/// (duplicate object ids, non-empty params, runtime_params for unknown
/// scripts, confidence out of range) are reported under `structural`.
/// Unresolved link endpoints and `can_` relations without `_if_` are style
/// warnings and never make the document invalid.
pub fn validate(ir: &PatternIR, config: &ValidatorConfig) -> ValidationReport {
    let mut violations = Vec::new();
    let mut warnings = Vec::new();

    let object_ids: std::collections::HashSet<&str> =
        ir.objects.iter().map(|o| o.id.as_str()).collect();
    let script_ids: std::collections::HashSet<&str> =
        ir.scripts.iter().map(|s| s.id.as_str()).collect();

    // C1
    for (i, s) in ir.scripts.iter().enumerate() {
        if !object_ids.contains(s.object_id.as_str()) {
            violations.push(Violation {
                constraint: "C1".into(),
                message: format!(
                    "script '{}' references missing object '{}'",
                    s.id, s.object_id
                ),
                path: format!("scripts[{i}].object_id"),
            });
        }
    }

    // C2
    let mut seen: std::collections::HashMap<&str, usize> = std::collections::HashMap::new();
    for (i, s) in ir.scripts.iter().enumerate() {
        if let Some(first) = seen.insert(s.id.as_str(), i) {
            violations.push(Violation {
                constraint: "C2".into(),
                message: format!(
                    "script id '{}' bound more than once (first at scripts[{first}])",
                    s.id
                ),
                path: format!("scripts[{i}].id"),
            });
        }
    }

    // C3
    for (i, o) in ir.objects.iter().enumerate() {
        if config.placeholder_suffixes.iter().any(|suf| o.id.ends_with(suf.as_str())) {
            violations.push(Violation {
                constraint: "C3".into(),
                message: format!("object id '{}' is an aggregate placeholder", o.id),
                path: format!("objects[{i}].id"),
            });
        }
    }

    // C4
    for (i, r) in ir.rules.iter().enumerate() {
        if r.evidence_type.is_none() {
            violations.push(Violation {
                constraint: "C4".into(),
                message: format!("rule '{}' has no evidence_type", r.id),
                path: format!("rules[{i}].evidence_type"),
            });
        }
    }

    // Structural checks for values built in code rather than parsed.
    let mut obj_seen: std::collections::HashSet<&str> = std::collections::HashSet::new();
    for (i, o) in ir.objects.iter().enumerate() {
        if !obj_seen.insert(o.id.as_str()) {
            violations.push(Violation {
                constraint: "structural".into(),
                message: format!("duplicate object id '{}'", o.id),
                path: format!("objects[{i}].id"),
            });
        }
    }
    if !ir.params.is_empty() {
        violations.push(Violation {
            constraint: "structural".into(),
            message: format!("params must be empty, found {} entries", ir.params.len()),
            path: "params".into(),
        });
    }
    for key in ir.runtime_params.keys() {
        if !script_ids.contains(key.as_str()) {
            violations.push(Violation {
                constraint: "structural".into(),
                message: format!("runtime_params entry '{key}' matches no script binding"),
                path: format!("runtime_params.{key}"),
            });
        }
    }
    for (i, r) in ir.rules.iter().enumerate() {
        if let Some(c) = r.confidence {
            if !(0.0..=1.0).contains(&c) {
                violations.push(Violation {
                    constraint: "structural".into(),
                    message: format!("rule '{}' confidence {c} outside [0, 1]", r.id),
                    path: format!("rules[{i}].confidence"),
                });
            }
        }
    }

    // Warnings.
    for (i, l) in ir.links.iter().enumerate() {
        for (end, value) in [("source", &l.source), ("target", &l.target)] {
            let resolved = value == SCENE_TOKEN
                || object_ids.contains(value.as_str())
                || script_ids.contains(value.as_str());
            if !resolved {
                warnings.push(ValidationWarning {
                    code: "unresolved_link_endpoint".into(),
                    message: format!("link {end} '{value}' matches no object, script, or scene"),
                    path: format!("links[{i}].{end}"),
                });
            }
        }
        if l.relation.starts_with("can_") && !l.relation.contains("_if_") {
            warnings.push(ValidationWarning {
                code: "conditional_relation".into(),
                message: format!(
                    "relation '{}' starts with 'can_' but names no '_if_' condition",
                    l.relation
                ),
                path: format!("links[{i}].relation"),
            });
        }
    }

    ValidationReport { valid: violations.is_empty(), violations, warnings }
}
