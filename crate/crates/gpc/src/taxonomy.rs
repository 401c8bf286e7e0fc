//! Compiler-error taxonomy: code extraction from build logs and the
//! grounding/hygiene classification. The built-in table ships as
//! `data/taxonomy.json` and can be swapped out at load time, so new codes do
//! not require a rebuild.

use once_cell::sync::Lazy;
use regex::Regex;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use thiserror::Error;

/// The two failure families. Grounding failures reference project, engine,
/// or inheritance structure that does not exist; hygiene failures are
/// syntax, duplication, formatting, or coercion problems that would occur
/// even if every referenced construct existed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FailureClass {
    Grounding,
    Hygiene,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Classification {
    Grounding,
    Hygiene,
    /// Not in the taxonomy. Reported, never dropped.
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroundingLayer {
    ProjectLevel,
    EngineApi,
    Architectural,
    NotGrounding,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaxonomyEntry {
    pub class: FailureClass,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub layer: Option<GroundingLayer>,
    pub message: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErrorTaxonomy {
    codes: BTreeMap<String, TaxonomyEntry>,
}

#[derive(Debug, Error)]
pub enum TaxonomyError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("taxonomy code '{code}' is not of the form CS+4 digits")]
    BadCode { code: String },
    #[error("taxonomy entry {code}: grounding entries need a layer, hygiene entries must not have one")]
    LayerMismatch { code: String },
    #[error("'{code}' is not a well-formed compiler error code")]
    MalformedQuery { code: String },
}

static CODE: Lazy<Regex> = Lazy::new(|| Regex::new(r"^CS\d{4}$").unwrap());
static CODE_TOKEN: Lazy<Regex> = Lazy::new(|| Regex::new(r"CS\d{4}").unwrap());

/// Default compiler-error line shape; other log dialects can supply their
/// own via [`extract_codes_with`].
pub static ERROR_LINE: Lazy<Regex> = Lazy::new(|| Regex::new(r"error CS\d{4}:").unwrap());

static BUILTIN: Lazy<ErrorTaxonomy> = Lazy::new(|| {
    ErrorTaxonomy::from_json(include_str!("../data/taxonomy.json"))
        .expect("bundled taxonomy is valid")
});

impl ErrorTaxonomy {
    /// The 41-code table shipped with the crate: 13 grounding, 28 hygiene.
    pub fn builtin() -> &'static ErrorTaxonomy {
        &BUILTIN
    }

    pub fn from_json(text: &str) -> Result<ErrorTaxonomy, TaxonomyError> {
        let taxonomy: ErrorTaxonomy =
            serde_json::from_str(text).map_err(|e| TaxonomyError::Io {
                path: "<inline>".into(),
                message: e.to_string(),
            })?;
        taxonomy.check()?;
        Ok(taxonomy)
    }

    pub fn load(path: &Path) -> Result<ErrorTaxonomy, TaxonomyError> {
        let text = std::fs::read_to_string(path).map_err(|e| TaxonomyError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let taxonomy: ErrorTaxonomy =
            serde_json::from_str(&text).map_err(|e| TaxonomyError::Io {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
        taxonomy.check()?;
        Ok(taxonomy)
    }

    fn check(&self) -> Result<(), TaxonomyError> {
        for (code, entry) in &self.codes {
            if !CODE.is_match(code) {
                return Err(TaxonomyError::BadCode { code: code.clone() });
            }
            let grounding = entry.class == FailureClass::Grounding;
            let layered =
                entry.layer.is_some() && entry.layer != Some(GroundingLayer::NotGrounding);
            if grounding != layered {
                return Err(TaxonomyError::LayerMismatch { code: code.clone() });
            }
        }
        Ok(())
    }

    pub fn classify(&self, code: &str) -> Result<Classification, TaxonomyError> {
        if !CODE.is_match(code) {
            return Err(TaxonomyError::MalformedQuery { code: code.to_string() });
        }
        Ok(match self.codes.get(code).map(|e| e.class) {
            Some(FailureClass::Grounding) => Classification::Grounding,
            Some(FailureClass::Hygiene) => Classification::Hygiene,
            None => Classification::Unknown,
        })
    }

    pub fn grounding_layer(&self, code: &str) -> GroundingLayer {
        self.codes
            .get(code)
            .and_then(|e| e.layer)
            .unwrap_or(GroundingLayer::NotGrounding)
    }

    pub fn message(&self, code: &str) -> Option<&str> {
        self.codes.get(code).map(|e| e.message.as_str())
    }

    pub fn codes(&self) -> impl Iterator<Item = (&str, &TaxonomyEntry)> {
        self.codes.iter().map(|(c, e)| (c.as_str(), e))
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    pub fn count_by_class(&self, class: FailureClass) -> usize {
        self.codes.values().filter(|e| e.class == class).count()
    }
}

/// Distinct error codes in a log: a code counts once per log file no matter
/// how many lines repeat it. Only lines matching the compiler-error pattern
/// contribute; codes quoted inside source snippets on other lines do not.
pub fn extract_codes(log: &str) -> BTreeSet<String> {
    extract_codes_with(log, &ERROR_LINE)
}

pub fn extract_codes_with(log: &str, error_line: &Regex) -> BTreeSet<String> {
    scan_log_with(log, error_line).codes
}

/// Deduplicated codes plus raw per-code occurrence counts over the same
/// error lines. Presence feeds the once-per-log tables; occurrence counts
/// feed the per-pattern totals, which tally every hit.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LogScan {
    pub codes: BTreeSet<String>,
    pub code_counts: BTreeMap<String, usize>,
}

pub fn scan_log(log: &str) -> LogScan {
    scan_log_with(log, &ERROR_LINE)
}

pub fn scan_log_with(log: &str, error_line: &Regex) -> LogScan {
    let mut scan = LogScan::default();
    for line in log.lines() {
        if !error_line.is_match(line) {
            continue;
        }
        for token in CODE_TOKEN.find_iter(line) {
            let code = token.as_str().to_string();
            *scan.code_counts.entry(code.clone()).or_insert(0) += 1;
            scan.codes.insert(code);
        }
    }
    scan
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_partition_is_13_grounding_28_hygiene() {
        let t = ErrorTaxonomy::builtin();
        assert_eq!(t.len(), 41);
        assert_eq!(t.count_by_class(FailureClass::Grounding), 13);
        assert_eq!(t.count_by_class(FailureClass::Hygiene), 28);
    }

    #[test]
    fn layer_consistency_holds_for_every_code() {
        let t = ErrorTaxonomy::builtin();
        for (code, _) in t.codes() {
            let layered = t.grounding_layer(code) != GroundingLayer::NotGrounding;
            let grounding = t.classify(code).unwrap() == Classification::Grounding;
            assert_eq!(layered, grounding, "layer/class mismatch for {code}");
        }
    }

    #[test]
    fn layer_membership_matches_published_grouping() {
        let t = ErrorTaxonomy::builtin();
        let by_layer = |layer: GroundingLayer| -> Vec<&str> {
            t.codes().map(|(c, _)| c).filter(|c| t.grounding_layer(c) == layer).collect()
        };
        assert_eq!(by_layer(GroundingLayer::ProjectLevel), ["CS0122", "CS0246"]);
        assert_eq!(
            by_layer(GroundingLayer::EngineApi),
            ["CS0117", "CS0234", "CS0311", "CS0315", "CS0619", "CS1061", "CS8121"]
        );
        assert_eq!(
            by_layer(GroundingLayer::Architectural),
            ["CS0115", "CS0239", "CS0509", "CS1624"]
        );
    }

    #[test]
    fn classify_known_and_unknown_codes() {
        let t = ErrorTaxonomy::builtin();
        assert_eq!(t.classify("CS0246").unwrap(), Classification::Grounding);
        assert_eq!(t.classify("CS0101").unwrap(), Classification::Hygiene);
        assert_eq!(t.classify("CS9999").unwrap(), Classification::Unknown);
        assert!(matches!(
            t.classify("XS123"),
            Err(TaxonomyError::MalformedQuery { .. })
        ));
        assert!(t.classify("CS02466").is_err());
    }

    #[test]
    fn grounding_layer_examples() {
        let t = ErrorTaxonomy::builtin();
        assert_eq!(t.grounding_layer("CS0115"), GroundingLayer::Architectural);
        assert_eq!(t.grounding_layer("CS0246"), GroundingLayer::ProjectLevel);
        assert_eq!(t.grounding_layer("CS1061"), GroundingLayer::EngineApi);
        assert_eq!(t.grounding_layer("CS0101"), GroundingLayer::NotGrounding);
        assert_eq!(t.grounding_layer("CS9999"), GroundingLayer::NotGrounding);
    }

    #[test]
    fn message_templates_are_present() {
        let t = ErrorTaxonomy::builtin();
        assert!(t.message("CS1029").unwrap().contains("#error directive"));
        assert!(t.message("CS0246").unwrap().contains("could not be found"));
        assert_eq!(t.message("CS9999"), None);
    }

    #[test]
    fn extract_codes_dedups_per_log() {
        let log = "\
Assets/Generated/x.cs(3,10): error CS0246: The type or namespace 'GuardGoal' could not be found
Assets/Generated/x.cs(9,10): error CS0246: The type or namespace 'GuardPost' could not be found
Assets/Generated/x.cs(14,1): error CS0101: The namespace already contains a definition for 'X'
";
        let codes = extract_codes(log);
        assert_eq!(
            codes.into_iter().collect::<Vec<_>>(),
            ["CS0101", "CS0246"]
        );
    }

    #[test]
    fn empty_log_has_no_codes() {
        assert!(extract_codes("").is_empty());
    }

    #[test]
    fn quoted_snippets_do_not_count() {
        let log = "\
Compiling...
    // the fix for CS0246 is to add a using directive
note: previous run hit CS0101 here
";
        assert!(extract_codes(log).is_empty());
    }

    #[test]
    fn scan_log_counts_occurrences_and_presence() {
        let log = "\
x.cs(1,1): error CS0246: missing type A
x.cs(2,1): error CS0246: missing type B
x.cs(3,1): error CS1029: #error: marker
";
        let scan = scan_log(log);
        assert_eq!(scan.codes.len(), 2);
        assert_eq!(scan.code_counts["CS0246"], 2);
        assert_eq!(scan.code_counts["CS1029"], 1);
    }

    #[test]
    fn custom_line_pattern_is_honored() {
        let log = "E/CS0246 something failed";
        assert!(extract_codes(log).is_empty());
        let custom = Regex::new(r"^E/CS\d{4}").unwrap();
        let codes = extract_codes_with(log, &custom);
        assert_eq!(codes.into_iter().collect::<Vec<_>>(), ["CS0246"]);
    }

    #[test]
    fn extract_matches_brute_force_oracle() {
        let log = "\
a.cs(1,1): error CS0103: no such name
random chatter CS1234 outside an error line
a.cs(2,2): error CS1513: } expected
a.cs(3,3): error CS0103: no such name again
";
        // Oracle: filter lines on the error shape, collect tokens, unique.
        let oracle: BTreeSet<String> = log
            .lines()
            .filter(|l| l.contains("error CS"))
            .flat_map(|l| CODE_TOKEN.find_iter(l).map(|m| m.as_str().to_string()))
            .collect();
        assert_eq!(extract_codes(log), oracle);
    }

    #[test]
    fn load_rejects_inconsistent_layers() {
        let bad = r#"{ "codes": { "CS0246": { "class": "grounding", "message": "x" } } }"#;
        assert!(matches!(
            ErrorTaxonomy::from_json(bad),
            Err(TaxonomyError::LayerMismatch { .. })
        ));
        let bad = r#"{ "codes": { "CS0101": { "class": "hygiene", "layer": "engine_api", "message": "x" } } }"#;
        assert!(matches!(
            ErrorTaxonomy::from_json(bad),
            Err(TaxonomyError::LayerMismatch { .. })
        ));
        let bad = r#"{ "codes": { "C246": { "class": "hygiene", "message": "x" } } }"#;
        assert!(matches!(ErrorTaxonomy::from_json(bad), Err(TaxonomyError::BadCode { .. })));
    }

    #[test]
    fn override_file_round_trips() {
        let t = ErrorTaxonomy::builtin();
        let json = serde_json::to_string(t).unwrap();
        let again = ErrorTaxonomy::from_json(&json).unwrap();
        assert_eq!(again.len(), 41);
        assert_eq!(again.classify("CS8121").unwrap(), Classification::Grounding);
    }
}
