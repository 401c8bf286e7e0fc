//! Scene-to-IR extraction: resolves parsed scene blocks against GUID maps,
//! flattens serialized script fields into runtime parameters, and assembles
//! the final document together with the per-pattern semantic config.

use crate::ir::{
    self, IRObject, Link, ObjectType, ParamValue, PatternIR, Rule, ScriptBinding,
    ValidatorConfig,
};
use crate::scene::{SceneBlock, SceneDocument, SceneError, YamlNode};
use indexmap::IndexMap;
use once_cell::sync::Lazy;
use regex::Regex;
use serde::Deserialize;
use std::collections::HashMap;
use std::path::Path;
use thiserror::Error;

/// Unity class ids the extractor cares about. Hard-coded defaults match the
/// stock serialization (1 = GameObject, 114 = MonoBehaviour, 1001 =
/// PrefabInstance); the table is a value so exotic projects can override it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClassIdMap {
    pub game_object: u32,
    pub mono_behaviour: u32,
    pub prefab_instance: u32,
}

impl Default for ClassIdMap {
    fn default() -> Self {
        ClassIdMap { game_object: 1, mono_behaviour: 114, prefab_instance: 1001 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GuidKind {
    PrefabAsset,
    ScriptClass,
}

impl GuidKind {
    fn noun(&self) -> &'static str {
        match self {
            GuidKind::PrefabAsset => "prefab",
            GuidKind::ScriptClass => "script",
        }
    }
}

/// GUID -> canonical name table loaded from a flat JSON object.
#[derive(Debug, Clone)]
pub struct GuidMap {
    pub kind: GuidKind,
    entries: HashMap<String, String>,
}

static GUID: Lazy<Regex> = Lazy::new(|| Regex::new(r"^[0-9a-f]{32}$").unwrap());

impl GuidMap {
    pub fn from_entries(
        kind: GuidKind,
        entries: impl IntoIterator<Item = (String, String)>,
    ) -> Result<Self, ExtractError> {
        let mut map = HashMap::new();
        for (guid, name) in entries {
            if !GUID.is_match(&guid) {
                return Err(ExtractError::BadGuidKey { kind, guid });
            }
            map.insert(guid, name);
        }
        Ok(GuidMap { kind, entries: map })
    }

    pub fn load(path: &Path, kind: GuidKind) -> Result<Self, ExtractError> {
        let text = std::fs::read_to_string(path).map_err(|e| ExtractError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let raw: IndexMap<String, String> =
            serde_json::from_str(&text).map_err(|e| ExtractError::Io {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
        Self::from_entries(kind, raw)
    }

    pub fn lookup(&self, guid: &str) -> Option<&str> {
        self.entries.get(guid).map(|s| s.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamHint {
    Boolean,
    Integer,
    Real,
    String,
}

/// Declarative per-pattern semantics: link and rule templates appended after
/// the structural links, plus type hints for serialized scalars.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatternConfig {
    pub pattern_id: String,
    #[serde(default)]
    pub semantic_links: Vec<Link>,
    #[serde(default)]
    pub semantic_rules: Vec<Rule>,
    #[serde(default)]
    pub param_type_hints: IndexMap<String, ParamHint>,
}

impl PatternConfig {
    pub fn load(path: &Path) -> Result<Self, ExtractError> {
        let text = std::fs::read_to_string(path).map_err(|e| ExtractError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        serde_json::from_str(&text).map_err(|e| ExtractError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }

    pub fn empty(pattern_id: &str) -> Self {
        PatternConfig {
            pattern_id: pattern_id.to_string(),
            semantic_links: Vec::new(),
            semantic_rules: Vec::new(),
            param_type_hints: IndexMap::new(),
        }
    }
}

#[derive(Debug, Error)]
pub enum ExtractError {
    #[error("{0}")]
    Scene(#[from] SceneError),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("{kind:?} map key '{guid}' is not a 32-digit lowercase hex GUID", kind = .kind)]
    BadGuidKey { kind: GuidKind, guid: String },
    #[error("line {line}: block &{file_id} is missing `{field}`")]
    MissingField { line: usize, file_id: String, field: String },
    #[error("line {line}: no {noun} map entry for GUID {guid}", noun = .kind.noun())]
    UnmappedGuid { line: usize, guid: String, kind: GuidKind },
    #[error("line {line}: serialized field `{field}` is not a scalar and cannot be flattened")]
    NonScalarParam { line: usize, field: String },
    #[error("line {line}: serialized field `{field}` value `{value}` does not fit hint {hint:?}")]
    BadParamValue { line: usize, field: String, value: String, hint: ParamHint },
    #[error("config link template for '{pattern}' references unknown id '{id}'")]
    UnresolvedTemplate { pattern: String, id: String },
    #[error("assembled IR for '{scene}' failed validation: {details}")]
    InvalidAssembled { scene: String, details: String },
}

fn scalar<'a>(
    body: &'a YamlNode,
    block: &SceneBlock,
    field: &str,
) -> Result<&'a str, ExtractError> {
    body.get(field)
        .and_then(|n| n.as_scalar())
        .ok_or_else(|| ExtractError::MissingField {
            line: block.line,
            file_id: block.file_id.clone(),
            field: field.to_string(),
        })
}

fn class_body<'a>(block: &'a SceneBlock) -> &'a YamlNode {
    block.root().map(|(_, body)| body).unwrap_or(&block.body)
}

/// Plain GameObject blocks, in document order. Stripped blocks are prefab
/// internals and contribute nothing here.
pub fn resolve_game_objects(
    doc: &SceneDocument,
    classes: &ClassIdMap,
) -> Result<Vec<IRObject>, ExtractError> {
    let mut objects = Vec::new();
    for block in &doc.blocks {
        if block.class_id != classes.game_object || block.stripped {
            continue;
        }
        let body = class_body(block);
        let name = scalar(body, block, "m_Name")?;
        objects.push(IRObject {
            id: block.file_id.clone(),
            name: name.to_string(),
            object_type: ObjectType::GameObject,
        });
    }
    Ok(objects)
}

/// PrefabInstance blocks become objects named after their source prefab, and
/// every prefab asset that demonstrably carries a script (a MonoBehaviour
/// block whose owner reference names its GUID) becomes a PrefabAsset object
/// with id `prefab_<guid>`.
pub fn resolve_prefab_instances(
    doc: &SceneDocument,
    prefabs: &GuidMap,
    classes: &ClassIdMap,
) -> Result<(Vec<IRObject>, Vec<IRObject>), ExtractError> {
    let mut instances = Vec::new();
    for block in &doc.blocks {
        if block.class_id != classes.prefab_instance || block.stripped {
            continue;
        }
        let body = class_body(block);
        let source = body.get("m_SourcePrefab").ok_or_else(|| ExtractError::MissingField {
            line: block.line,
            file_id: block.file_id.clone(),
            field: "m_SourcePrefab".into(),
        })?;
        let guid =
            source.get("guid").and_then(|n| n.as_scalar()).ok_or_else(|| {
                ExtractError::MissingField {
                    line: block.line,
                    file_id: block.file_id.clone(),
                    field: "m_SourcePrefab.guid".into(),
                }
            })?;
        let name = prefabs.lookup(guid).ok_or_else(|| ExtractError::UnmappedGuid {
            line: block.line,
            guid: guid.to_string(),
            kind: GuidKind::PrefabAsset,
        })?;
        instances.push(IRObject {
            id: block.file_id.clone(),
            name: name.to_string(),
            object_type: ObjectType::PrefabInstance,
        });
    }

    let mut assets: Vec<IRObject> = Vec::new();
    for block in &doc.blocks {
        if block.class_id != classes.mono_behaviour || block.stripped {
            continue;
        }
        let body = class_body(block);
        let Some(owner) = body.get("m_GameObject") else { continue };
        let Some(guid) = owner.get("guid").and_then(|n| n.as_scalar()) else { continue };
        let id = format!("prefab_{guid}");
        if assets.iter().any(|a| a.id == id) {
            continue;
        }
        let name = prefabs.lookup(guid).ok_or_else(|| ExtractError::UnmappedGuid {
            line: block.line,
            guid: guid.to_string(),
            kind: GuidKind::PrefabAsset,
        })?;
        assets.push(IRObject { id, name: name.to_string(), object_type: ObjectType::PrefabAsset });
    }
    Ok((instances, assets))
}

/// MonoBehaviour blocks become script bindings. Binding ids are
/// `script_<guid>`, with `#<ordinal>` appended to every binding of a GUID
/// that occurs more than once in the scene (ordinals follow document order).
pub fn resolve_scripts(
    doc: &SceneDocument,
    scripts: &GuidMap,
    classes: &ClassIdMap,
) -> Result<Vec<ScriptBinding>, ExtractError> {
    struct Raw<'a> {
        guid: &'a str,
        object_id: String,
        class_name: String,
    }

    let mut raw: Vec<Raw> = Vec::new();
    for block in &doc.blocks {
        if block.class_id != classes.mono_behaviour || block.stripped {
            continue;
        }
        let body = class_body(block);
        let script_ref = body.get("m_Script").ok_or_else(|| ExtractError::MissingField {
            line: block.line,
            file_id: block.file_id.clone(),
            field: "m_Script".into(),
        })?;
        let guid = script_ref.get("guid").and_then(|n| n.as_scalar()).ok_or_else(|| {
            ExtractError::MissingField {
                line: block.line,
                file_id: block.file_id.clone(),
                field: "m_Script.guid".into(),
            }
        })?;
        let class_name = scripts.lookup(guid).ok_or_else(|| ExtractError::UnmappedGuid {
            line: block.line,
            guid: guid.to_string(),
            kind: GuidKind::ScriptClass,
        })?;
        let owner = body.get("m_GameObject").ok_or_else(|| ExtractError::MissingField {
            line: block.line,
            file_id: block.file_id.clone(),
            field: "m_GameObject".into(),
        })?;
        let object_id = match owner.get("guid").and_then(|n| n.as_scalar()) {
            Some(asset_guid) => format!("prefab_{asset_guid}"),
            None => {
                let file_id = owner.get("fileID").and_then(|n| n.as_scalar()).ok_or_else(|| {
                    ExtractError::MissingField {
                        line: block.line,
                        file_id: block.file_id.clone(),
                        field: "m_GameObject.fileID".into(),
                    }
                })?;
                if file_id == "0" {
                    return Err(ExtractError::MissingField {
                        line: block.line,
                        file_id: block.file_id.clone(),
                        field: "m_GameObject.fileID".into(),
                    });
                }
                file_id.to_string()
            }
        };
        raw.push(Raw { guid, object_id, class_name: class_name.to_string() });
    }

    let mut counts: HashMap<&str, usize> = HashMap::new();
    for r in &raw {
        *counts.entry(r.guid).or_insert(0) += 1;
    }
    let mut ordinals: HashMap<&str, usize> = HashMap::new();
    let mut bindings = Vec::new();
    for r in &raw {
        let id = if counts[r.guid] > 1 {
            let ord = ordinals.entry(r.guid).or_insert(0);
            *ord += 1;
            format!("script_{}#{}", r.guid, ord)
        } else {
            format!("script_{}", r.guid)
        };
        bindings.push(ScriptBinding {
            id,
            object_id: r.object_id.clone(),
            class_name: r.class_name.clone(),
        });
    }
    Ok(bindings)
}

static INT_SCALAR: Lazy<Regex> = Lazy::new(|| Regex::new(r"^-?\d{1,18}$").unwrap());
static REAL_SCALAR: Lazy<Regex> =
    Lazy::new(|| Regex::new(r"^-?\d+\.\d+([eE][+-]?\d+)?$").unwrap());

fn coerce(
    value: &str,
    field: &str,
    hint: Option<ParamHint>,
    line: usize,
) -> Result<ParamValue, ExtractError> {
    let bad = |hint: ParamHint| ExtractError::BadParamValue {
        line,
        field: field.to_string(),
        value: value.to_string(),
        hint,
    };
    match hint {
        Some(ParamHint::Boolean) => match value {
            "0" | "false" => Ok(ParamValue::Bool(false)),
            "1" | "true" => Ok(ParamValue::Bool(true)),
            _ => Err(bad(ParamHint::Boolean)),
        },
        Some(ParamHint::Integer) => {
            value.parse::<i64>().map(ParamValue::Int).map_err(|_| bad(ParamHint::Integer))
        }
        Some(ParamHint::Real) => {
            value.parse::<f64>().map(ParamValue::Real).map_err(|_| bad(ParamHint::Real))
        }
        Some(ParamHint::String) => Ok(ParamValue::Str(value.to_string())),
        None => {
            if INT_SCALAR.is_match(value) {
                Ok(ParamValue::Int(value.parse().expect("regex-gated integer")))
            } else if REAL_SCALAR.is_match(value) {
                Ok(ParamValue::Real(value.parse().expect("regex-gated real")))
            } else {
                Ok(ParamValue::Str(value.to_string()))
            }
        }
    }
}

/// Flattens the serialized user fields of one MonoBehaviour block:
/// `m_`-prefixed engine fields are dropped, everything else must be scalar.
/// Unhinted scalars keep natural typing; hints coerce (Unity stores booleans
/// as 0/1).
pub fn extract_runtime_params(
    block: &SceneBlock,
    hints: &IndexMap<String, ParamHint>,
) -> Result<IndexMap<String, ParamValue>, ExtractError> {
    let body = class_body(block);
    let mut out = IndexMap::new();
    for (key, value) in body.entries() {
        if key.starts_with("m_") {
            continue;
        }
        let scalar = match value {
            YamlNode::Scalar(s) => s.as_str(),
            _ => {
                return Err(ExtractError::NonScalarParam {
                    line: block.line,
                    field: key.clone(),
                })
            }
        };
        out.insert(key.clone(), coerce(scalar, key, hints.get(key).copied(), block.line)?);
    }
    Ok(out)
}

/// Full pipeline for one scene: objects (GameObjects, then PrefabInstances,
/// then PrefabAssets), scripts, flattened runtime params, auto-generated
/// structural links (`scene -> instance has_prefab_instance`, `owner ->
/// script has_component`), then the config's semantic links and rules. The
/// assembled document must validate; anything else is reported as an error
/// rather than returned.
pub fn assemble_ir(
    doc: &SceneDocument,
    prefabs: &GuidMap,
    scripts_map: &GuidMap,
    config: &PatternConfig,
    classes: &ClassIdMap,
    validator: &ValidatorConfig,
) -> Result<PatternIR, ExtractError> {
    let game_objects = resolve_game_objects(doc, classes)?;
    let (instances, assets) = resolve_prefab_instances(doc, prefabs, classes)?;
    let scripts = resolve_scripts(doc, scripts_map, classes)?;

    let mut objects = game_objects;
    objects.extend(instances.iter().cloned());
    objects.extend(assets);

    let mut runtime_params: IndexMap<String, IndexMap<String, ParamValue>> = IndexMap::new();
    let mono_blocks: Vec<&SceneBlock> = doc
        .blocks
        .iter()
        .filter(|b| b.class_id == classes.mono_behaviour && !b.stripped)
        .collect();
    debug_assert_eq!(mono_blocks.len(), scripts.len());
    for (block, binding) in mono_blocks.iter().zip(&scripts) {
        let params = extract_runtime_params(block, &config.param_type_hints)?;
        if !params.is_empty() {
            runtime_params.insert(binding.id.clone(), params);
        }
    }

    let mut links = Vec::new();
    for instance in &instances {
        links.push(Link {
            source: ir::SCENE_TOKEN.to_string(),
            target: instance.id.clone(),
            relation: "has_prefab_instance".to_string(),
            evidence_type: None,
        });
    }
    for binding in &scripts {
        links.push(Link {
            source: binding.object_id.clone(),
            target: binding.id.clone(),
            relation: "has_component".to_string(),
            evidence_type: None,
        });
    }

    let known: std::collections::HashSet<&str> = objects
        .iter()
        .map(|o| o.id.as_str())
        .chain(scripts.iter().map(|s| s.id.as_str()))
        .chain(std::iter::once(ir::SCENE_TOKEN))
        .collect();
    for template in &config.semantic_links {
        for endpoint in [&template.source, &template.target] {
            if !known.contains(endpoint.as_str()) {
                return Err(ExtractError::UnresolvedTemplate {
                    pattern: config.pattern_id.clone(),
                    id: endpoint.clone(),
                });
            }
        }
        links.push(template.clone());
    }

    let ir = PatternIR {
        scene: doc.name.clone(),
        objects,
        scripts,
        params: IndexMap::new(),
        runtime_params,
        links,
        rules: config.semantic_rules.clone(),
    };

    let report = ir::validate(&ir, validator);
    if !report.valid {
        let details = report
            .violations
            .iter()
            .map(|v| format!("{} at {}: {}", v.constraint, v.path, v.message))
            .collect::<Vec<_>>()
            .join("; ");
        return Err(ExtractError::InvalidAssembled { scene: doc.name.clone(), details });
    }
    Ok(ir)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::parse_scene;

    const GUID_SM: &str = "da1b44f03cf8e4d0f8318d8ad0c5c0d6";
    const GUID_GM: &str = "aa11223344556677889900aabbccddee";
    const GUID_CC: &str = "bf0c3a4d5e6f708192a3b4c5d6e7f809";
    const GUID_PREFAB_MGR: &str = "0123456789abcdef0123456789abcdef";
    const GUID_PREFAB_ITEM: &str = "057536c2a19bd9e4b8cdb1cb044a64f1";

    fn scene_text() -> String {
        format!(
            "\
%YAML 1.1
--- !u!29 &1
OcclusionCullingSettings:
  m_ObjectHideFlags: 0
--- !u!1 &100
GameObject:
  m_Name: Main Camera
--- !u!1001 &200
PrefabInstance:
  m_Modification:
    m_Modifications:
    - target: {{fileID: 100000, guid: {mgr}, type: 3}}
      propertyPath: m_Name
      value: Manager
      objectReference: {{fileID: 0}}
  m_SourcePrefab: {{fileID: 100100000, guid: {mgr}, type: 3}}
--- !u!114 &201
MonoBehaviour:
  m_ObjectHideFlags: 0
  m_GameObject: {{fileID: 200}}
  m_Script: {{fileID: 11500000, guid: {sm}, type: 3}}
  spawnStart: 1
  spawnCount: 8
  spawnRepeat: 0
  spawnPrefabGuid: {item}
--- !u!114 &202
MonoBehaviour:
  m_GameObject: {{fileID: 100}}
  m_Script: {{fileID: 11500000, guid: {gm}, type: 3}}
--- !u!114 &203
MonoBehaviour:
  m_GameObject: {{fileID: 100, guid: {item}, type: 3}}
  m_Script: {{fileID: 11500000, guid: {cc}, type: 3}}
",
            mgr = GUID_PREFAB_MGR,
            sm = GUID_SM,
            gm = GUID_GM,
            cc = GUID_CC,
            item = GUID_PREFAB_ITEM,
        )
    }

    fn prefab_map() -> GuidMap {
        GuidMap::from_entries(
            GuidKind::PrefabAsset,
            [
                (GUID_PREFAB_MGR.to_string(), "Spawn Manager".to_string()),
                (GUID_PREFAB_ITEM.to_string(), "OwnershipObject".to_string()),
            ],
        )
        .unwrap()
    }

    fn script_map() -> GuidMap {
        GuidMap::from_entries(
            GuidKind::ScriptClass,
            [
                (GUID_SM.to_string(), "SpawnManager".to_string()),
                (GUID_GM.to_string(), "GameManager".to_string()),
                (GUID_CC.to_string(), "ChangeColor".to_string()),
            ],
        )
        .unwrap()
    }

    fn hints() -> IndexMap<String, ParamHint> {
        IndexMap::from_iter([
            ("spawnStart".to_string(), ParamHint::Boolean),
            ("spawnRepeat".to_string(), ParamHint::Boolean),
        ])
    }

    #[test]
    fn resolves_objects_scripts_and_assets() {
        let doc = parse_scene(&scene_text(), "mini").unwrap();
        let classes = ClassIdMap::default();

        let gos = resolve_game_objects(&doc, &classes).unwrap();
        assert_eq!(gos.len(), 1);
        assert_eq!(gos[0].name, "Main Camera");

        let (instances, assets) = resolve_prefab_instances(&doc, &prefab_map(), &classes).unwrap();
        assert_eq!(instances.len(), 1);
        assert_eq!(instances[0].name, "Spawn Manager");
        assert_eq!(assets.len(), 1);
        assert_eq!(assets[0].id, format!("prefab_{GUID_PREFAB_ITEM}"));
        assert_eq!(assets[0].name, "OwnershipObject");

        let scripts = resolve_scripts(&doc, &script_map(), &classes).unwrap();
        assert_eq!(scripts.len(), 3);
        assert_eq!(scripts[0].id, format!("script_{GUID_SM}"));
        assert_eq!(scripts[0].object_id, "200");
        assert_eq!(scripts[2].object_id, format!("prefab_{GUID_PREFAB_ITEM}"));
        assert_eq!(scripts[2].class_name, "ChangeColor");
    }

    #[test]
    fn guid_collision_gets_ordinals() {
        let text = format!(
            "--- !u!1 &1\nGameObject:\n  m_Name: A\n--- !u!1 &2\nGameObject:\n  m_Name: B\n\
             --- !u!114 &3\nMonoBehaviour:\n  m_GameObject: {{fileID: 1}}\n  m_Script: {{fileID: 1, guid: {g}, type: 3}}\n\
             --- !u!114 &4\nMonoBehaviour:\n  m_GameObject: {{fileID: 2}}\n  m_Script: {{fileID: 1, guid: {g}, type: 3}}\n",
            g = GUID_SM
        );
        let doc = parse_scene(&text, "twice").unwrap();
        let scripts = resolve_scripts(&doc, &script_map(), &ClassIdMap::default()).unwrap();
        assert_eq!(scripts[0].id, format!("script_{GUID_SM}#1"));
        assert_eq!(scripts[1].id, format!("script_{GUID_SM}#2"));
        assert_eq!(scripts[0].class_name, scripts[1].class_name);
    }

    #[test]
    fn unmapped_guids_are_errors_with_lines() {
        let doc = parse_scene(&scene_text(), "mini").unwrap();
        let classes = ClassIdMap::default();
        let empty = GuidMap::from_entries(GuidKind::PrefabAsset, []).unwrap();
        match resolve_prefab_instances(&doc, &empty, &classes) {
            Err(ExtractError::UnmappedGuid { guid, kind: GuidKind::PrefabAsset, line }) => {
                assert_eq!(guid, GUID_PREFAB_MGR);
                assert!(line > 1);
            }
            other => panic!("expected UnmappedGuid, got {other:?}"),
        }
        let empty = GuidMap::from_entries(GuidKind::ScriptClass, []).unwrap();
        assert!(matches!(
            resolve_scripts(&doc, &empty, &classes),
            Err(ExtractError::UnmappedGuid { kind: GuidKind::ScriptClass, .. })
        ));
    }

    #[test]
    fn guid_keys_are_validated() {
        let err = GuidMap::from_entries(
            GuidKind::PrefabAsset,
            [("NOT-A-GUID".to_string(), "X".to_string())],
        )
        .unwrap_err();
        assert!(matches!(err, ExtractError::BadGuidKey { .. }));
    }

    #[test]
    fn runtime_params_flatten_with_hints() {
        let doc = parse_scene(&scene_text(), "mini").unwrap();
        let block = doc.blocks.iter().find(|b| b.file_id == "201").unwrap();
        let params = extract_runtime_params(block, &hints()).unwrap();
        assert_eq!(params["spawnStart"], ParamValue::Bool(true));
        assert_eq!(params["spawnCount"], ParamValue::Int(8));
        assert_eq!(params["spawnRepeat"], ParamValue::Bool(false));
        assert_eq!(params["spawnPrefabGuid"], ParamValue::Str(GUID_PREFAB_ITEM.to_string()));
    }

    #[test]
    fn engine_only_block_flattens_to_empty() {
        let doc = parse_scene(&scene_text(), "mini").unwrap();
        let block = doc.blocks.iter().find(|b| b.file_id == "202").unwrap();
        let params = extract_runtime_params(block, &hints()).unwrap();
        assert!(params.is_empty());
    }

    #[test]
    fn non_scalar_param_is_an_error() {
        let text = format!(
            "--- !u!114 &3\nMonoBehaviour:\n  m_GameObject: {{fileID: 1}}\n  m_Script: {{fileID: 1, guid: {GUID_SM}, type: 3}}\n  spawnTarget: {{fileID: 77}}\n"
        );
        let doc = parse_scene(&text, "bad").unwrap();
        match extract_runtime_params(&doc.blocks[0], &IndexMap::new()) {
            Err(ExtractError::NonScalarParam { field, .. }) => assert_eq!(field, "spawnTarget"),
            other => panic!("expected NonScalarParam, got {other:?}"),
        }
    }

    #[test]
    fn natural_typing_keeps_long_digit_strings_as_strings() {
        let text = "--- !u!114 &3\nMonoBehaviour:\n  m_GameObject: {fileID: 1}\n  m_Script: {fileID: 1, guid: da1b44f03cf8e4d0f8318d8ad0c5c0d6, type: 3}\n  bigId: 12345678901234567890123456789012\n  speed: 2.5\n  label: fast\n";
        let doc = parse_scene(text, "typing").unwrap();
        let params = extract_runtime_params(&doc.blocks[0], &IndexMap::new()).unwrap();
        assert_eq!(params["bigId"], ParamValue::Str("12345678901234567890123456789012".into()));
        assert_eq!(params["speed"], ParamValue::Real(2.5));
        assert_eq!(params["label"], ParamValue::Str("fast".into()));
    }

    #[test]
    fn bad_hint_value_is_an_error() {
        let text = format!(
            "--- !u!114 &3\nMonoBehaviour:\n  m_GameObject: {{fileID: 1}}\n  m_Script: {{fileID: 1, guid: {GUID_SM}, type: 3}}\n  spawnStart: maybe\n"
        );
        let doc = parse_scene(&text, "bad").unwrap();
        match extract_runtime_params(&doc.blocks[0], &hints()) {
            Err(ExtractError::BadParamValue { field, hint: ParamHint::Boolean, .. }) => {
                assert_eq!(field, "spawnStart")
            }
            other => panic!("expected BadParamValue, got {other:?}"),
        }
    }

    fn config() -> PatternConfig {
        let json = format!(
            r#"{{
              "pattern_id": "mini",
              "semantic_links": [
                {{ "source": "script_{GUID_SM}", "target": "prefab_{GUID_PREFAB_ITEM}",
                   "relation": "spawns_prefab", "evidence_type": "direct_code" }}
              ],
              "semantic_rules": [
                {{ "id": "rule_win", "type": "win_condition",
                   "description": "Win when everything is collected.",
                   "pattern": "mini", "evidence_type": "direct_code", "confidence": 1.0 }}
              ],
              "param_type_hints": {{ "spawnStart": "boolean", "spawnRepeat": "boolean" }}
            }}"#
        );
        serde_json::from_str(&json).unwrap()
    }

    #[test]
    fn assemble_produces_valid_ordered_ir() {
        let doc = parse_scene(&scene_text(), "mini").unwrap();
        let ir = assemble_ir(
            &doc,
            &prefab_map(),
            &script_map(),
            &config(),
            &ClassIdMap::default(),
            &ValidatorConfig::default(),
        )
        .unwrap();

        assert_eq!(ir.scene, "mini");
        let types: Vec<ObjectType> = ir.objects.iter().map(|o| o.object_type).collect();
        assert_eq!(
            types,
            vec![ObjectType::GameObject, ObjectType::PrefabInstance, ObjectType::PrefabAsset]
        );
        assert_eq!(ir.scripts.len(), 3);
        // 1 has_prefab_instance + 3 has_component + 1 semantic
        assert_eq!(ir.links.len(), 5);
        assert_eq!(ir.links[0].relation, "has_prefab_instance");
        assert_eq!(ir.links[0].source, "scene");
        assert_eq!(ir.links[4].relation, "spawns_prefab");
        assert_eq!(ir.links[4].evidence_type, Some(crate::ir::EvidenceType::DirectCode));
        assert_eq!(ir.rules.len(), 1);
        assert!(ir.params.is_empty());
        // Engine-only block is omitted from runtime_params.
        assert_eq!(ir.runtime_params.len(), 1);

        let report = ir::validate(&ir, &ValidatorConfig::default());
        assert!(report.valid);
        assert!(report.warnings.is_empty());
    }

    #[test]
    fn assembly_is_deterministic() {
        let doc = parse_scene(&scene_text(), "mini").unwrap();
        let make = || {
            let ir = assemble_ir(
                &doc,
                &prefab_map(),
                &script_map(),
                &config(),
                &ClassIdMap::default(),
                &ValidatorConfig::default(),
            )
            .unwrap();
            ir::serialize_ir(&ir).unwrap()
        };
        assert_eq!(make(), make());
    }

    #[test]
    fn unresolved_template_is_an_error() {
        let doc = parse_scene(&scene_text(), "mini").unwrap();
        let mut cfg = config();
        cfg.semantic_links[0].target = "prefab_gone".to_string();
        match assemble_ir(
            &doc,
            &prefab_map(),
            &script_map(),
            &cfg,
            &ClassIdMap::default(),
            &ValidatorConfig::default(),
        ) {
            Err(ExtractError::UnresolvedTemplate { id, .. }) => assert_eq!(id, "prefab_gone"),
            other => panic!("expected UnresolvedTemplate, got {other:?}"),
        }
    }
}
