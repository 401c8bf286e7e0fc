//! Parser for the Unity scene text format: a multi-document YAML dialect
//! where every document starts with `--- !u!<class_id> &<file_id>` and the
//! body is a block mapping using a restricted feature set (nested block
//! maps, block sequences at parent indent, one-line flow maps/sequences,
//! plain or quoted scalars).
//!
//! Scalars are kept verbatim as strings; interpretation (booleans stored as
//! 0/1, numeric typing) belongs to the extraction layer, not the parser.

use once_cell::sync::Lazy;
use regex::Regex;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq)]
pub struct SceneDocument {
    pub name: String,
    pub blocks: Vec<SceneBlock>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneBlock {
    pub class_id: u32,
    pub file_id: String,
    pub stripped: bool,
    /// 1-based line number of the document header.
    pub line: usize,
    pub body: YamlNode,
}

impl SceneBlock {
    /// The single `ClassName: {...}` entry that roots a Unity document body.
    pub fn root(&self) -> Option<(&str, &YamlNode)> {
        match &self.body {
            YamlNode::Map(entries) if entries.len() == 1 => {
                Some((entries[0].0.as_str(), &entries[0].1))
            }
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum YamlNode {
    Scalar(String),
    Map(Vec<(String, YamlNode)>),
    Seq(Vec<YamlNode>),
}

impl YamlNode {
    pub fn get(&self, key: &str) -> Option<&YamlNode> {
        match self {
            YamlNode::Map(entries) => {
                entries.iter().find(|(k, _)| k == key).map(|(_, v)| v)
            }
            _ => None,
        }
    }

    pub fn as_scalar(&self) -> Option<&str> {
        match self {
            YamlNode::Scalar(s) => Some(s.as_str()),
            _ => None,
        }
    }

    pub fn entries(&self) -> &[(String, YamlNode)] {
        match self {
            YamlNode::Map(entries) => entries,
            _ => &[],
        }
    }

    pub fn items(&self) -> &[YamlNode] {
        match self {
            YamlNode::Seq(items) => items,
            _ => &[],
        }
    }
}

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("scene text contains no documents")]
    Empty,
    #[error("line {line}: malformed document header: {text}")]
    MalformedHeader { line: usize, text: String },
    #[error("line {line}: duplicate file id &{file_id}")]
    DuplicateFileId { line: usize, file_id: String },
    #[error("line {line}: {message}")]
    Body { line: usize, message: String },
}

static HEADER: Lazy<Regex> =
    Lazy::new(|| Regex::new(r"^--- !u!(\d+) &(\S+?)( stripped)?\s*$").unwrap());

struct Line<'a> {
    number: usize,
    indent: usize,
    content: &'a str,
}

/// Parses one scene file. `name` is carried through to the IR `scene` field
/// (callers usually pass the file stem).
pub fn parse_scene(text: &str, name: &str) -> Result<SceneDocument, SceneError> {
    let mut blocks: Vec<SceneBlock> = Vec::new();
    let mut seen_ids: std::collections::HashSet<String> = std::collections::HashSet::new();

    let mut header: Option<(u32, String, bool, usize)> = None;
    let mut body_lines: Vec<Line> = Vec::new();

    let flush = |header: &mut Option<(u32, String, bool, usize)>,
                     body_lines: &mut Vec<Line>,
                     blocks: &mut Vec<SceneBlock>|
     -> Result<(), SceneError> {
        if let Some((class_id, file_id, stripped, line)) = header.take() {
            let body = parse_body(body_lines)?;
            blocks.push(SceneBlock { class_id, file_id, stripped, line, body });
        }
        body_lines.clear();
        Ok(())
    };

    for (idx, raw) in text.lines().enumerate() {
        let number = idx + 1;
        if raw.starts_with("---") {
            let m = HEADER.captures(raw).ok_or_else(|| SceneError::MalformedHeader {
                line: number,
                text: raw.to_string(),
            })?;
            flush(&mut header, &mut body_lines, &mut blocks)?;
            let class_id: u32 = m[1].parse().map_err(|_| SceneError::MalformedHeader {
                line: number,
                text: raw.to_string(),
            })?;
            let file_id = m[2].to_string();
            if !seen_ids.insert(file_id.clone()) {
                return Err(SceneError::DuplicateFileId { line: number, file_id });
            }
            header = Some((class_id, file_id, m.get(3).is_some(), number));
            continue;
        }
        if header.is_none() {
            // Preamble: YAML directives and blank lines only.
            if raw.trim().is_empty() || raw.starts_with('%') {
                continue;
            }
            return Err(SceneError::MalformedHeader { line: number, text: raw.to_string() });
        }
        if raw.trim().is_empty() {
            continue;
        }
        let indent = raw.len() - raw.trim_start_matches(' ').len();
        let content = raw[indent..].trim_end();
        if content.starts_with('\t') || raw[..indent.min(raw.len())].contains('\t') {
            return Err(SceneError::Body { line: number, message: "tab indentation".into() });
        }
        body_lines.push(Line { number, indent, content });
    }
    flush(&mut header, &mut body_lines, &mut blocks)?;

    if blocks.is_empty() {
        return Err(SceneError::Empty);
    }
    Ok(SceneDocument { name: name.to_string(), blocks })
}

fn parse_body(lines: &[Line]) -> Result<YamlNode, SceneError> {
    if lines.is_empty() {
        return Ok(YamlNode::Map(Vec::new()));
    }
    let mut pos = 0;
    let node = parse_node(lines, &mut pos, lines[0].indent)?;
    if pos != lines.len() {
        return Err(SceneError::Body {
            line: lines[pos].number,
            message: format!("unexpected indentation (col {})", lines[pos].indent + 1),
        });
    }
    Ok(node)
}

fn parse_node(lines: &[Line], pos: &mut usize, indent: usize) -> Result<YamlNode, SceneError> {
    if *pos < lines.len() && lines[*pos].indent == indent && is_seq_item(lines[*pos].content) {
        parse_seq(lines, pos, indent)
    } else {
        parse_map(lines, pos, indent)
    }
}

fn is_seq_item(content: &str) -> bool {
    content == "-" || content.starts_with("- ")
}

fn parse_seq(lines: &[Line], pos: &mut usize, indent: usize) -> Result<YamlNode, SceneError> {
    let mut items = Vec::new();
    while *pos < lines.len() && lines[*pos].indent == indent && is_seq_item(lines[*pos].content) {
        let line = &lines[*pos];
        let rest = line.content[1..].trim_start();
        *pos += 1;
        if rest.is_empty() {
            items.push(parse_node(lines, pos, indent + 2)?);
        } else if split_key(rest).is_some() {
            // Inline first entry of a map item; continuation keys sit two
            // columns deeper than the dash.
            let first = parse_map_entry(rest, line.number, lines, pos, indent + 2)?;
            let mut entries = vec![first];
            while *pos < lines.len()
                && lines[*pos].indent == indent + 2
                && !is_seq_item(lines[*pos].content)
            {
                let entry_line = &lines[*pos];
                let content = entry_line.content;
                *pos += 1;
                entries.push(parse_map_entry(content, entry_line.number, lines, pos, indent + 2)?);
            }
            items.push(YamlNode::Map(entries));
        } else {
            items.push(parse_value(rest, line.number)?);
        }
    }
    Ok(YamlNode::Seq(items))
}

fn parse_map(lines: &[Line], pos: &mut usize, indent: usize) -> Result<YamlNode, SceneError> {
    let mut entries = Vec::new();
    while *pos < lines.len() && lines[*pos].indent == indent && !is_seq_item(lines[*pos].content) {
        let line = &lines[*pos];
        let content = line.content;
        *pos += 1;
        entries.push(parse_map_entry(content, line.number, lines, pos, indent)?);
    }
    if entries.is_empty() && *pos < lines.len() {
        return Err(SceneError::Body {
            line: lines[*pos].number,
            message: format!("expected mapping at col {}", indent + 1),
        });
    }
    Ok(YamlNode::Map(entries))
}

fn parse_map_entry(
    content: &str,
    number: usize,
    lines: &[Line],
    pos: &mut usize,
    indent: usize,
) -> Result<(String, YamlNode), SceneError> {
    let (key, value_text) = split_key(content).ok_or_else(|| SceneError::Body {
        line: number,
        message: format!("expected `key: value`, found `{content}`"),
    })?;
    if value_text.is_empty() {
        // Nested block: deeper map, or a sequence allowed at the same indent.
        if *pos < lines.len() && lines[*pos].indent > indent {
            let child = parse_node(lines, pos, lines[*pos].indent)?;
            return Ok((key.to_string(), child));
        }
        if *pos < lines.len() && lines[*pos].indent == indent && is_seq_item(lines[*pos].content) {
            let child = parse_seq(lines, pos, indent)?;
            return Ok((key.to_string(), child));
        }
        return Ok((key.to_string(), YamlNode::Scalar(String::new())));
    }
    Ok((key.to_string(), parse_value(value_text, number)?))
}

/// Splits `key: value` / `key:`; returns None when the text is not a map
/// entry. Unity keys never contain colons, so the first `: ` (or trailing
/// `:`) wins.
fn split_key(content: &str) -> Option<(&str, &str)> {
    let bytes = content.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b':' {
            if i + 1 == bytes.len() {
                return Some((&content[..i], ""));
            }
            if bytes[i + 1] == b' ' {
                return Some((&content[..i], content[i + 2..].trim()));
            }
        }
        i += 1;
    }
    None
}

fn parse_value(text: &str, number: usize) -> Result<YamlNode, SceneError> {
    if text.starts_with('{') {
        return parse_flow_map(text, number);
    }
    if text.starts_with('[') {
        return parse_flow_seq(text, number);
    }
    if text.starts_with('|') || text.starts_with('>') {
        return Err(SceneError::Body {
            line: number,
            message: "block scalars are not part of the scene dialect".into(),
        });
    }
    Ok(YamlNode::Scalar(unquote(text)))
}

fn unquote(text: &str) -> String {
    let t = text.trim();
    if t.len() >= 2 {
        if (t.starts_with('\'') && t.ends_with('\'')) || (t.starts_with('"') && t.ends_with('"')) {
            return t[1..t.len() - 1].to_string();
        }
    }
    t.to_string()
}

fn parse_flow_map(text: &str, number: usize) -> Result<YamlNode, SceneError> {
    let inner = text
        .strip_prefix('{')
        .and_then(|t| t.strip_suffix('}'))
        .ok_or_else(|| SceneError::Body {
            line: number,
            message: format!("unterminated flow mapping `{text}`"),
        })?;
    let mut entries = Vec::new();
    for part in split_flow(inner) {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let (key, value) = split_key(part).ok_or_else(|| SceneError::Body {
            line: number,
            message: format!("expected `key: value` in flow mapping, found `{part}`"),
        })?;
        entries.push((key.trim().to_string(), YamlNode::Scalar(unquote(value))));
    }
    Ok(YamlNode::Map(entries))
}

fn parse_flow_seq(text: &str, number: usize) -> Result<YamlNode, SceneError> {
    let inner = text
        .strip_prefix('[')
        .and_then(|t| t.strip_suffix(']'))
        .ok_or_else(|| SceneError::Body {
            line: number,
            message: format!("unterminated flow sequence `{text}`"),
        })?;
    let items = split_flow(inner)
        .into_iter()
        .map(|part| YamlNode::Scalar(unquote(part.trim())))
        .filter(|node| !matches!(node, YamlNode::Scalar(s) if s.is_empty()))
        .collect();
    Ok(YamlNode::Seq(items))
}

fn split_flow(inner: &str) -> Vec<&str> {
    let mut parts = Vec::new();
    let mut depth = 0usize;
    let mut start = 0usize;
    for (i, c) in inner.char_indices() {
        match c {
            '{' | '[' => depth += 1,
            '}' | ']' => depth = depth.saturating_sub(1),
            ',' if depth == 0 => {
                parts.push(&inner[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    parts.push(&inner[start..]);
    parts
}
