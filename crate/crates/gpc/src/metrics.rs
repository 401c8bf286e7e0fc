//! Aggregation and reporting: pass@k, timeout rates, per-code and
//! per-pattern tables split by failure class, structural stats, and schema
//! frequency tiers. Aggregation is an associative fold, so partial reports
//! merged in any grouping equal one sequential pass.

use crate::ir::PatternIR;
use crate::prompt::{list_methods, Method};
use crate::records::{RecordStatus, RunRecord};
use crate::taxonomy::{Classification, ErrorTaxonomy};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("pass@k needs 1 <= k <= n, got k={k}, n={n}")]
    BadK { k: u64, n: u64 },
    #[error("pass@k needs c <= n, got c={c}, n={n}")]
    BadC { c: u64, n: u64 },
    #[error("frequency tiers need at least one document")]
    NoDocuments,
    #[error("unknown report format '{0}' (expected markdown, csv, or json)")]
    BadFormat(String),
}

/// Unbiased estimator 1 - C(n-c, k)/C(n, k) in overflow-safe product form.
/// c = 0 gives exactly 0.0; n - c < k gives exactly 1.0.
pub fn pass_at_k(n: u64, c: u64, k: u64) -> Result<f64, MetricsError> {
    if c > n {
        return Err(MetricsError::BadC { c, n });
    }
    if k < 1 || k > n {
        return Err(MetricsError::BadK { k, n });
    }
    let mut miss_all = 1.0_f64;
    for i in 0..k {
        let numerator = (n - c).saturating_sub(i);
        if numerator == 0 {
            return Ok(1.0);
        }
        miss_all *= numerator as f64 / (n - i) as f64;
    }
    Ok(1.0 - miss_all)
}

/// Per-pattern occurrence tallies within one (model, method) cell.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PatternMetrics {
    pub total: usize,
    pub grounding: usize,
    pub hygiene: usize,
    pub unknown: usize,
    pub code_occurrences: BTreeMap<String, usize>,
}

impl PatternMetrics {
    fn merge(&mut self, other: &PatternMetrics) {
        self.total += other.total;
        self.grounding += other.grounding;
        self.hygiene += other.hygiene;
        self.unknown += other.unknown;
        for (code, n) in &other.code_occurrences {
            *self.code_occurrences.entry(code.clone()).or_insert(0) += n;
        }
    }

    /// Highest-occurrence grounding codes, ties broken by code.
    pub fn top_grounding(&self, taxonomy: &ErrorTaxonomy, limit: usize) -> Vec<(String, usize)> {
        let mut rows: Vec<(String, usize)> = self
            .code_occurrences
            .iter()
            .filter(|(code, _)| {
                taxonomy.classify(code).ok() == Some(Classification::Grounding)
            })
            .map(|(code, n)| (code.clone(), *n))
            .collect();
        rows.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        rows.truncate(limit);
        rows
    }
}

/// One (model, method) cell of the aggregate.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CellMetrics {
    pub records: usize,
    pub successes: usize,
    pub failed: usize,
    pub timeouts: usize,
    pub generation_failed: usize,
    /// Records (log files) containing each code at least once.
    pub code_presence: BTreeMap<String, usize>,
    pub grounding_logs: usize,
    pub hygiene_logs: usize,
    pub unknown_logs: usize,
    pub patterns: BTreeMap<String, PatternMetrics>,
}

impl CellMetrics {
    fn add(&mut self, record: &RunRecord, taxonomy: &ErrorTaxonomy) {
        self.records += 1;
        match record.status {
            RecordStatus::Success => self.successes += 1,
            RecordStatus::Failed => self.failed += 1,
            RecordStatus::CompileTimeout => self.timeouts += 1,
            RecordStatus::GenerationFailed => self.generation_failed += 1,
        }
        let pattern = self.patterns.entry(record.pattern.clone()).or_default();
        for code in &record.codes {
            *self.code_presence.entry(code.clone()).or_insert(0) += 1;
            let class = taxonomy.classify(code).unwrap_or(Classification::Unknown);
            match class {
                Classification::Grounding => self.grounding_logs += 1,
                Classification::Hygiene => self.hygiene_logs += 1,
                Classification::Unknown => self.unknown_logs += 1,
            }
            let occurrences = record.occurrences(code);
            *pattern.code_occurrences.entry(code.clone()).or_insert(0) += occurrences;
            match class {
                Classification::Grounding => {
                    pattern.grounding += occurrences;
                    pattern.total += occurrences;
                }
                Classification::Hygiene => {
                    pattern.hygiene += occurrences;
                    pattern.total += occurrences;
                }
                Classification::Unknown => pattern.unknown += occurrences,
            }
        }
    }

    fn merge(&mut self, other: &CellMetrics) {
        self.records += other.records;
        self.successes += other.successes;
        self.failed += other.failed;
        self.timeouts += other.timeouts;
        self.generation_failed += other.generation_failed;
        for (code, n) in &other.code_presence {
            *self.code_presence.entry(code.clone()).or_insert(0) += n;
        }
        self.grounding_logs += other.grounding_logs;
        self.hygiene_logs += other.hygiene_logs;
        self.unknown_logs += other.unknown_logs;
        for (pattern, metrics) in &other.patterns {
            self.patterns.entry(pattern.clone()).or_default().merge(metrics);
        }
    }

    pub fn timeout_rate(&self) -> f64 {
        if self.records == 0 {
            0.0
        } else {
            self.timeouts as f64 / self.records as f64
        }
    }

    /// (n, c) for pass@k: generation failures never produced a candidate, so
    /// they are excluded from n and reported separately.
    pub fn pass_inputs(&self) -> (u64, u64) {
        ((self.records - self.generation_failed) as u64, self.successes as u64)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// model -> method name -> cell.
    pub models: BTreeMap<String, BTreeMap<String, CellMetrics>>,
}

pub fn aggregate(records: &[RunRecord], taxonomy: &ErrorTaxonomy) -> MetricsReport {
    let mut report = MetricsReport::default();
    for record in records {
        report
            .models
            .entry(record.model_id.clone())
            .or_default()
            .entry(record.method.as_str().to_string())
            .or_default()
            .add(record, taxonomy);
    }
    report
}

impl MetricsReport {
    pub fn merge(mut self, other: &MetricsReport) -> MetricsReport {
        for (model, methods) in &other.models {
            let mine = self.models.entry(model.clone()).or_default();
            for (method, cell) in methods {
                mine.entry(method.clone()).or_default().merge(cell);
            }
        }
        self
    }

    pub fn cell(&self, model: &str, method: Method) -> Option<&CellMetrics> {
        self.models.get(model).and_then(|m| m.get(method.as_str()))
    }

    pub fn total_records(&self) -> usize {
        self.models
            .values()
            .flat_map(|m| m.values())
            .map(|c| c.records)
            .sum()
    }

    /// Presence counts summed over models: code -> method name -> count.
    pub fn combined_code_table(&self) -> BTreeMap<String, BTreeMap<String, usize>> {
        let mut table: BTreeMap<String, BTreeMap<String, usize>> = BTreeMap::new();
        for methods in self.models.values() {
            for (method, cell) in methods {
                for (code, n) in &cell.code_presence {
                    *table
                        .entry(code.clone())
                        .or_default()
                        .entry(method.clone())
                        .or_insert(0) += n;
                }
            }
        }
        table
    }

    /// Per-method presence totals over all codes and models.
    pub fn method_presence_totals(&self) -> BTreeMap<String, usize> {
        let mut totals = BTreeMap::new();
        for methods in self.models.values() {
            for (method, cell) in methods {
                let sum: usize = cell.code_presence.values().sum();
                *totals.entry(method.clone()).or_insert(0) += sum;
            }
        }
        totals
    }

    /// Pattern occurrence tallies summed over models for one method.
    pub fn combined_pattern_table(&self, method: Method) -> BTreeMap<String, PatternMetrics> {
        let mut table: BTreeMap<String, PatternMetrics> = BTreeMap::new();
        for methods in self.models.values() {
            if let Some(cell) = methods.get(method.as_str()) {
                for (pattern, metrics) in &cell.patterns {
                    table.entry(pattern.clone()).or_default().merge(metrics);
                }
            }
        }
        table
    }

    pub fn pass_at_k(&self, model: &str, method: Method, k: u64) -> Result<f64, MetricsError> {
        let (n, c) = self
            .cell(model, method)
            .map(|cell| cell.pass_inputs())
            .unwrap_or((0, 0));
        pass_at_k(n, c, k)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tier {
    Core,
    Common,
    Optional,
}

/// Inclusive thresholds: >= 0.80 Core, >= 0.40 Common, below that Optional.
pub fn tier_for(coverage: f64) -> Tier {
    if coverage >= 0.80 {
        Tier::Core
    } else if coverage >= 0.40 {
        Tier::Common
    } else {
        Tier::Optional
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TierItemKind {
    TopLevelField,
    ObjectType,
    ScriptClass,
    LinkRelation,
    RuleType,
    RuntimeParamKey,
    EvidenceType,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TierItem {
    pub kind: TierItemKind,
    pub name: String,
    pub present_in: usize,
    pub total: usize,
    pub coverage: f64,
    pub tier: Tier,
}

/// Coverage of every schema element across a corpus: the fraction of
/// documents containing at least one instance of the element.
pub fn frequency_tiers(irs: &[PatternIR]) -> Result<Vec<TierItem>, MetricsError> {
    if irs.is_empty() {
        return Err(MetricsError::NoDocuments);
    }
    let total = irs.len();
    let mut presence: BTreeMap<(TierItemKind, String), usize> = BTreeMap::new();
    for ir in irs {
        let mut seen: BTreeSet<(TierItemKind, String)> = BTreeSet::new();
        for field in ["scene", "objects", "scripts", "params", "runtime_params", "links", "rules"]
        {
            seen.insert((TierItemKind::TopLevelField, field.to_string()));
        }
        for object in &ir.objects {
            seen.insert((TierItemKind::ObjectType, object.object_type.as_str().to_string()));
        }
        for script in &ir.scripts {
            seen.insert((TierItemKind::ScriptClass, script.class_name.clone()));
        }
        for params in ir.runtime_params.values() {
            for key in params.keys() {
                seen.insert((TierItemKind::RuntimeParamKey, key.clone()));
            }
        }
        for link in &ir.links {
            seen.insert((TierItemKind::LinkRelation, link.relation.clone()));
            if let Some(evidence) = link.evidence_type {
                seen.insert((TierItemKind::EvidenceType, evidence.as_str().to_string()));
            }
        }
        for rule in &ir.rules {
            seen.insert((TierItemKind::RuleType, rule.rule_type.clone()));
            if let Some(evidence) = rule.evidence_type {
                seen.insert((TierItemKind::EvidenceType, evidence.as_str().to_string()));
            }
        }
        for key in seen {
            *presence.entry(key).or_insert(0) += 1;
        }
    }
    let mut items: Vec<TierItem> = presence
        .into_iter()
        .map(|((kind, name), present_in)| {
            let coverage = present_in as f64 / total as f64;
            TierItem { kind, name, present_in, total, coverage, tier: tier_for(coverage) }
        })
        .collect();
    items.sort_by(|a, b| {
        a.kind
            .cmp(&b.kind)
            .then(b.present_in.cmp(&a.present_in))
            .then(a.name.cmp(&b.name))
    });
    Ok(items)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Markdown,
    Csv,
    Json,
}

impl ReportFormat {
    pub fn parse(s: &str) -> Result<ReportFormat, MetricsError> {
        match s {
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(MetricsError::BadFormat(other.to_string())),
        }
    }
}

/// Patterns sort by their numeric prefix (`10_Rescue` after `9_Conceal`),
/// with a name fallback for anything unprefixed.
pub fn pattern_sort_key(name: &str) -> (u64, String) {
    let digits: String = name.chars().take_while(|c| c.is_ascii_digit()).collect();
    (digits.parse().unwrap_or(u64::MAX), name.to_string())
}

fn method_columns() -> Vec<&'static str> {
    list_methods().iter().map(|m| m.as_str()).collect()
}

fn render_markdown(report: &MetricsReport, taxonomy: &ErrorTaxonomy, ks: &[u64]) -> String {
    let mut out = String::new();
    let methods = method_columns();

    out.push_str("# Run summary\n\n");
    out.push_str("| model | method | records | success | failed | timeout | gen_failed | timeout_rate |");
    for k in ks {
        out.push_str(&format!(" pass@{k} |"));
    }
    out.push('\n');
    out.push_str("|---|---|---|---|---|---|---|---|");
    for _ in ks {
        out.push_str("---|");
    }
    out.push('\n');
    for (model, cells) in &report.models {
        for method in &methods {
            let Some(cell) = cells.get(*method) else { continue };
            out.push_str(&format!(
                "| {model} | {method} | {} | {} | {} | {} | {} | {:.3} |",
                cell.records,
                cell.successes,
                cell.failed,
                cell.timeouts,
                cell.generation_failed,
                cell.timeout_rate()
            ));
            let (n, c) = cell.pass_inputs();
            for k in ks {
                match pass_at_k(n, c, *k) {
                    Ok(v) => out.push_str(&format!(" {v:.3} |")),
                    Err(_) => out.push_str(" - |"),
                }
            }
            out.push('\n');
        }
    }

    out.push_str("\n# Error codes by configuration (records containing code)\n\n");
    out.push_str("| code | class |");
    for method in &methods {
        out.push_str(&format!(" {method} |"));
    }
    out.push_str(" total |\n|---|---|");
    for _ in &methods {
        out.push_str("---|");
    }
    out.push_str("---|\n");
    let combined = report.combined_code_table();
    let mut grand = vec![0usize; methods.len()];
    for (code, row) in &combined {
        let class = match taxonomy.classify(code) {
            Ok(Classification::Grounding) => "G",
            Ok(Classification::Hygiene) => "H",
            _ => "?",
        };
        out.push_str(&format!("| {code} | {class} |"));
        let mut total = 0;
        for (i, method) in methods.iter().enumerate() {
            let n = row.get(*method).copied().unwrap_or(0);
            grand[i] += n;
            total += n;
            out.push_str(&format!(" {n} |"));
        }
        out.push_str(&format!(" {total} |\n"));
    }
    out.push_str("| Total | |");
    let mut sum = 0;
    for n in &grand {
        sum += n;
        out.push_str(&format!(" {n} |"));
    }
    out.push_str(&format!(" {sum} |\n"));

    out.push_str("\n# Per-model code tables (grounding first)\n");
    for (model, cells) in &report.models {
        out.push_str(&format!("\n## {model}\n\n| code | class |"));
        for method in &methods {
            out.push_str(&format!(" {method} |"));
        }
        out.push_str("\n|---|---|");
        for _ in &methods {
            out.push_str("---|");
        }
        out.push('\n');
        let mut codes: BTreeSet<&String> =
            cells.values().flat_map(|c| c.code_presence.keys()).collect();
        let ordered: Vec<&String> = {
            let mut grounding: Vec<&String> = codes
                .iter()
                .copied()
                .filter(|c| taxonomy.classify(c).ok() == Some(Classification::Grounding))
                .collect();
            let rest: Vec<&String> = codes
                .iter()
                .copied()
                .filter(|c| taxonomy.classify(c).ok() != Some(Classification::Grounding))
                .collect();
            grounding.extend(rest);
            codes.clear();
            grounding
        };
        let mut class_totals: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for code in ordered {
            let class = match taxonomy.classify(code) {
                Ok(Classification::Grounding) => "G",
                Ok(Classification::Hygiene) => "H",
                _ => "?",
            };
            out.push_str(&format!("| {code} | {class} |"));
            let totals = class_totals.entry(class).or_insert_with(|| vec![0; methods.len()]);
            for (i, method) in methods.iter().enumerate() {
                let n = cells
                    .get(*method)
                    .and_then(|c| c.code_presence.get(code))
                    .copied()
                    .unwrap_or(0);
                totals[i] += n;
                out.push_str(&format!(" {n} |"));
            }
            out.push('\n');
        }
        for (class, totals) in &class_totals {
            out.push_str(&format!("| {class} total | |"));
            for n in totals {
                out.push_str(&format!(" {n} |"));
            }
            out.push('\n');
        }
    }

    out.push_str("\n# Pattern-level error occurrences\n");
    for (model, cells) in &report.models {
        for method in &methods {
            let Some(cell) = cells.get(*method) else { continue };
            if cell.patterns.values().all(|p| p.total == 0 && p.unknown == 0) {
                continue;
            }
            out.push_str(&format!(
                "\n## {model} / {method}\n\n| pattern | total | G | H | top G codes |\n|---|---|---|---|---|\n"
            ));
            let mut patterns: Vec<(&String, &PatternMetrics)> = cell.patterns.iter().collect();
            patterns.sort_by_key(|(name, _)| pattern_sort_key(name));
            for (pattern, metrics) in patterns {
                let top: Vec<String> = metrics
                    .top_grounding(taxonomy, 2)
                    .into_iter()
                    .map(|(code, n)| format!("{code}({n})"))
                    .collect();
                let top = if top.is_empty() { "-".to_string() } else { top.join(", ") };
                out.push_str(&format!(
                    "| {pattern} | {} | {} | {} | {top} |\n",
                    metrics.total, metrics.grounding, metrics.hygiene
                ));
            }
        }
    }
    out
}

fn render_csv(report: &MetricsReport) -> String {
    let methods = method_columns();
    let mut out = String::from("code");
    for method in &methods {
        out.push_str(&format!(",{method}"));
    }
    out.push_str(",total\n");
    for (code, row) in report.combined_code_table() {
        out.push_str(&code);
        let mut total = 0;
        for method in &methods {
            let n = row.get(*method).copied().unwrap_or(0);
            total += n;
            out.push_str(&format!(",{n}"));
        }
        out.push_str(&format!(",{total}\n"));
    }
    out
}

fn tier_kind_label(kind: TierItemKind) -> &'static str {
    match kind {
        TierItemKind::TopLevelField => "top_level_field",
        TierItemKind::ObjectType => "object_type",
        TierItemKind::ScriptClass => "script_class",
        TierItemKind::LinkRelation => "link_relation",
        TierItemKind::RuleType => "rule_type",
        TierItemKind::RuntimeParamKey => "runtime_param_key",
        TierItemKind::EvidenceType => "evidence_type",
    }
}

fn tier_label(tier: Tier) -> &'static str {
    match tier {
        Tier::Core => "Core",
        Tier::Common => "Common",
        Tier::Optional => "Optional",
    }
}

/// Deterministic text rendering of a tier table.
pub fn render_tiers(items: &[TierItem], format: ReportFormat) -> String {
    match format {
        ReportFormat::Markdown => {
            let mut out = String::from(
                "# Schema element frequency tiers\n\n| kind | name | present | total | coverage | tier |\n|---|---|---|---|---|---|\n",
            );
            for item in items {
                out.push_str(&format!(
                    "| {} | {} | {} | {} | {:.3} | {} |\n",
                    tier_kind_label(item.kind),
                    item.name,
                    item.present_in,
                    item.total,
                    item.coverage,
                    tier_label(item.tier)
                ));
            }
            out
        }
        ReportFormat::Csv => {
            let mut out = String::from("kind,name,present,total,coverage,tier\n");
            for item in items {
                out.push_str(&format!(
                    "{},{},{},{},{:.3},{}\n",
                    tier_kind_label(item.kind),
                    item.name,
                    item.present_in,
                    item.total,
                    item.coverage,
                    tier_label(item.tier)
                ));
            }
            out
        }
        ReportFormat::Json => serde_json::to_string_pretty(items).expect("tiers serialize") + "\n",
    }
}

/// Deterministic text rendering of an aggregate. `ks` picks the pass@k
/// columns for the summary table.
pub fn render_report(
    report: &MetricsReport,
    taxonomy: &ErrorTaxonomy,
    format: ReportFormat,
    ks: &[u64],
) -> Result<String, MetricsError> {
    Ok(match format {
        ReportFormat::Markdown => render_markdown(report, taxonomy, ks),
        ReportFormat::Csv => render_csv(report),
        ReportFormat::Json => {
            serde_json::to_string_pretty(report).expect("report serializes") + "\n"
        }
    })
}
