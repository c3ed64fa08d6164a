//! Pattern-variant-episode memory schema and its line-delimited storage.
//!
//! A record keeps three layers of issue knowledge: the reusable root-cause
//! pattern, context-specific variants carrying fix strategies and
//! command/path/stack signatures, and concrete validated episodes. Banks are
//! stored one record per JSON line with lexicographically sorted keys so
//! that saves are diff-able and byte-deterministic.

use crate::canon::{self, ObjWriter};
use crate::family::FailureFamily;
use serde::Deserialize;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::Path;
use thiserror::Error;

/// Validation feedback attached to an episode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedbackLabel {
    Verified,
    Accepted,
    Rejected,
    FalsePositive,
    None,
}

impl FeedbackLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            FeedbackLabel::Verified => "verified",
            FeedbackLabel::Accepted => "accepted",
            FeedbackLabel::Rejected => "rejected",
            FeedbackLabel::FalsePositive => "false_positive",
            FeedbackLabel::None => "none",
        }
    }
}

/// Reusable symptom and root-cause class.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct Pattern {
    pub pattern_id: String,
    pub family: FailureFamily,
    pub symptom_tokens: BTreeSet<String>,
    pub root_cause_tokens: BTreeSet<String>,
    pub description: String,
}

/// Context-specific fix strategy with operational signatures.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct Variant {
    pub variant_id: String,
    pub parent_pattern_id: String,
    pub fix_strategy: String,
    pub command_signature: BTreeSet<String>,
    pub path_signature: BTreeSet<String>,
    pub stack_signature: BTreeSet<String>,
    pub entities: BTreeSet<String>,
}

/// Concrete observed occurrence with validation evidence.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct Episode {
    pub episode_id: String,
    pub parent_variant_id: String,
    pub observed_evidence: String,
    pub validated: bool,
    pub feedback_label: FeedbackLabel,
    pub timestamp: u64,
}

/// One unit of reusable issue knowledge: a pattern plus its variants,
/// episodes, and query-level history rates.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct MemoryRecord {
    pub pattern: Pattern,
    pub variants: Vec<Variant>,
    pub episodes: Vec<Episode>,
    pub historical_acceptance_rate: f64,
    pub historical_false_positive_rate: f64,
}

/// The local memory bank. Immutable after load; mutation happens only by
/// constructing a new bank.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MemoryBank {
    pub records: Vec<MemoryRecord>,
    pub bank_version: u64,
}

/// A single invariant violation found by [`validate_bank`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    DuplicatePatternId { id: String },
    DuplicateVariantId { id: String },
    DuplicateEpisodeId { id: String },
    DanglingReference { id: String, referenced: String },
    RateOutOfRange { pattern_id: String, field: &'static str, value: String },
    EmptySymptomTokens { pattern_id: String },
    EmptySignatures { variant_id: String },
    BadFeedbackLabel { episode_id: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DuplicatePatternId { id } => write!(f, "duplicate pattern_id {id}"),
            Violation::DuplicateVariantId { id } => write!(f, "duplicate variant_id {id}"),
            Violation::DuplicateEpisodeId { id } => write!(f, "duplicate episode_id {id}"),
            Violation::DanglingReference { id, referenced } => {
                write!(f, "{id} references missing {referenced}")
            }
            Violation::RateOutOfRange { pattern_id, field, value } => {
                write!(f, "{pattern_id}: {field} = {value} outside [0,1]")
            }
            Violation::EmptySymptomTokens { pattern_id } => {
                write!(f, "{pattern_id}: symptom_tokens empty")
            }
            Violation::EmptySignatures { variant_id } => {
                write!(f, "{variant_id}: all three signatures empty")
            }
            Violation::BadFeedbackLabel { episode_id } => {
                write!(f, "{episode_id}: invalid feedback label")
            }
        }
    }
}

#[derive(Debug, Error)]
pub enum BankError {
    #[error("line {line}: malformed record: {message}")]
    MalformedRecord { line: usize, message: String },
    #[error("duplicate pattern_id {0}")]
    DuplicatePatternId(String),
    #[error("dangling reference to {0}")]
    DanglingReference(String),
    #[error("bank failed validation: {0}")]
    InvalidBank(String),
    #[error("io failure: {0}")]
    Io(#[from] std::io::Error),
}

/// Check every schema invariant; an empty list means the bank is valid.
pub fn validate_bank(bank: &MemoryBank) -> Vec<Violation> {
    let mut violations = Vec::new();
    let mut pattern_ids = BTreeSet::new();
    let mut variant_ids = BTreeSet::new();
    let mut episode_ids = BTreeSet::new();

    for record in &bank.records {
        let pattern = &record.pattern;
        if !pattern_ids.insert(pattern.pattern_id.clone()) {
            violations.push(Violation::DuplicatePatternId {
                id: pattern.pattern_id.clone(),
            });
        }
        if pattern.symptom_tokens.is_empty() {
            violations.push(Violation::EmptySymptomTokens {
                pattern_id: pattern.pattern_id.clone(),
            });
        }
        for (field, value) in [
            ("historical_acceptance_rate", record.historical_acceptance_rate),
            ("historical_false_positive_rate", record.historical_false_positive_rate),
        ] {
            if !(0.0..=1.0).contains(&value) || value.is_nan() {
                violations.push(Violation::RateOutOfRange {
                    pattern_id: pattern.pattern_id.clone(),
                    field,
                    value: canon::fmt_f64(value),
                });
            }
        }

        let local_variants: BTreeSet<&str> =
            record.variants.iter().map(|v| v.variant_id.as_str()).collect();

        for variant in &record.variants {
            if !variant_ids.insert(variant.variant_id.clone()) {
                violations.push(Violation::DuplicateVariantId {
                    id: variant.variant_id.clone(),
                });
            }
            if variant.parent_pattern_id != pattern.pattern_id {
                violations.push(Violation::DanglingReference {
                    id: variant.variant_id.clone(),
                    referenced: variant.parent_pattern_id.clone(),
                });
            }
            if variant.command_signature.is_empty()
                && variant.path_signature.is_empty()
                && variant.stack_signature.is_empty()
            {
                violations.push(Violation::EmptySignatures {
                    variant_id: variant.variant_id.clone(),
                });
            }
        }

        for episode in &record.episodes {
            if !episode_ids.insert(episode.episode_id.clone()) {
                violations.push(Violation::DuplicateEpisodeId {
                    id: episode.episode_id.clone(),
                });
            }
            if !local_variants.contains(episode.parent_variant_id.as_str()) {
                violations.push(Violation::DanglingReference {
                    id: episode.episode_id.clone(),
                    referenced: episode.parent_variant_id.clone(),
                });
            }
        }
    }

    violations
}

/// Load a bank from its line-delimited file, rejecting invalid content.
pub fn load_bank(path: &Path) -> Result<MemoryBank, BankError> {
    let text = fs::read_to_string(path)?;
    let mut records = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: MemoryRecord =
            serde_json::from_str(line).map_err(|e| BankError::MalformedRecord {
                line: idx + 1,
                message: e.to_string(),
            })?;
        records.push(record);
    }
    let bank = MemoryBank {
        records,
        bank_version: 1,
    };
    let violations = validate_bank(&bank);
    if let Some(v) = violations.first() {
        return Err(match v {
            Violation::DuplicatePatternId { id } => BankError::DuplicatePatternId(id.clone()),
            Violation::DanglingReference { referenced, .. } => {
                BankError::DanglingReference(referenced.clone())
            }
            other => BankError::InvalidBank(other.to_string()),
        });
    }
    Ok(bank)
}

/// Save a bank in canonical form; output is a pure function of content.
pub fn save_bank(bank: &MemoryBank, path: &Path) -> Result<(), BankError> {
    let violations = validate_bank(bank);
    if let Some(v) = violations.first() {
        return Err(BankError::InvalidBank(v.to_string()));
    }
    fs::write(path, encode_bank(bank))?;
    Ok(())
}

/// Canonical line-delimited encoding of a bank.
pub fn encode_bank(bank: &MemoryBank) -> String {
    let mut out = String::new();
    for record in &bank.records {
        out.push_str(&encode_record(record));
        out.push('\n');
    }
    out
}

pub(crate) fn encode_record(record: &MemoryRecord) -> String {
    let mut w = ObjWriter::new();
    w.field_raw(
        "episodes",
        &canon::json_array(record.episodes.iter().map(encode_episode)),
    );
    w.field_f64("historical_acceptance_rate", record.historical_acceptance_rate);
    w.field_f64(
        "historical_false_positive_rate",
        record.historical_false_positive_rate,
    );
    w.field_raw("pattern", &encode_pattern(&record.pattern));
    w.field_raw(
        "variants",
        &canon::json_array(record.variants.iter().map(encode_variant)),
    );
    w.finish()
}

fn encode_pattern(pattern: &Pattern) -> String {
    let mut w = ObjWriter::new();
    w.field_str("description", &pattern.description);
    w.field_str("family", pattern.family.as_str());
    w.field_str("pattern_id", &pattern.pattern_id);
    w.field_str_array(
        "root_cause_tokens",
        pattern.root_cause_tokens.iter().map(String::as_str),
    );
    w.field_str_array(
        "symptom_tokens",
        pattern.symptom_tokens.iter().map(String::as_str),
    );
    w.finish()
}

fn encode_variant(variant: &Variant) -> String {
    let mut w = ObjWriter::new();
    w.field_str_array(
        "command_signature",
        variant.command_signature.iter().map(String::as_str),
    );
    w.field_str_array("entities", variant.entities.iter().map(String::as_str));
    w.field_str("fix_strategy", &variant.fix_strategy);
    w.field_str("parent_pattern_id", &variant.parent_pattern_id);
    w.field_str_array(
        "path_signature",
        variant.path_signature.iter().map(String::as_str),
    );
    w.field_str_array(
        "stack_signature",
        variant.stack_signature.iter().map(String::as_str),
    );
    w.field_str("variant_id", &variant.variant_id);
    w.finish()
}

fn encode_episode(episode: &Episode) -> String {
    let mut w = ObjWriter::new();
    w.field_str("episode_id", &episode.episode_id);
    w.field_str("feedback_label", episode.feedback_label.as_str());
    w.field_str("observed_evidence", &episode.observed_evidence);
    w.field_str("parent_variant_id", &episode.parent_variant_id);
    w.field_u64("timestamp", episode.timestamp);
    w.field_bool("validated", episode.validated);
    w.finish()
}

impl MemoryBank {
    /// Look up a record by pattern id.
    pub fn record(&self, pattern_id: &str) -> Option<&MemoryRecord> {
        self.records
            .iter()
            .find(|r| r.pattern.pattern_id == pattern_id)
    }

    /// Total variant count across all records.
    pub fn variant_count(&self) -> usize {
        self.records.iter().map(|r| r.variants.len()).sum()
    }

    /// Records indexed by pattern id.
    pub fn by_pattern(&self) -> BTreeMap<&str, &MemoryRecord> {
        self.records
            .iter()
            .map(|r| (r.pattern.pattern_id.as_str(), r))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_record(id: &str, family: FailureFamily) -> MemoryRecord {
        let pattern_id = format!("pat_{id}");
        let variant_id = format!("var_{id}_1");
        MemoryRecord {
            pattern: Pattern {
                pattern_id: pattern_id.clone(),
                family,
                symptom_tokens: ["error", "locked"].iter().map(|s| s.to_string()).collect(),
                root_cause_tokens: ["connection"].iter().map(|s| s.to_string()).collect(),
                description: "sample".to_string(),
            },
            variants: vec![Variant {
                variant_id: variant_id.clone(),
                parent_pattern_id: pattern_id,
                fix_strategy: "release the lingering connection".to_string(),
                command_signature: ["sqlite3"].iter().map(|s| s.to_string()).collect(),
                path_signature: ["db"].iter().map(|s| s.to_string()).collect(),
                stack_signature: BTreeSet::new(),
                entities: ["database_url"].iter().map(|s| s.to_string()).collect(),
            }],
            episodes: vec![Episode {
                episode_id: format!("epi_{id}_1"),
                parent_variant_id: variant_id,
                observed_evidence: "database is locked".to_string(),
                validated: true,
                feedback_label: FeedbackLabel::Verified,
                timestamp: 1,
            }],
            historical_acceptance_rate: 0.75,
            historical_false_positive_rate: 0.1,
        }
    }

    fn sample_bank() -> MemoryBank {
        MemoryBank {
            records: vec![
                sample_record("a", FailureFamily::SqliteInitLocking),
                sample_record("b", FailureFamily::StaleMigration),
            ],
            bank_version: 1,
        }
    }

    #[test]
    fn empty_file_loads_empty_bank() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bank.jsonl");
        fs::write(&path, "").unwrap();
        let bank = load_bank(&path).unwrap();
        assert!(bank.records.is_empty());
    }

    #[test]
    fn save_load_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bank.jsonl");
        let bank = sample_bank();
        save_bank(&bank, &path).unwrap();
        let loaded = load_bank(&path).unwrap();
        assert_eq!(loaded, bank);
    }

    #[test]
    fn load_then_save_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bank.jsonl");
        save_bank(&sample_bank(), &path).unwrap();
        let bytes = fs::read(&path).unwrap();
        let reloaded = load_bank(&path).unwrap();
        assert_eq!(encode_bank(&reloaded).into_bytes(), bytes);
    }

    #[test]
    fn two_saves_are_identical() {
        let bank = sample_bank();
        assert_eq!(encode_bank(&bank), encode_bank(&bank));
    }

    #[test]
    fn empty_bank_saves_empty_file() {
        assert_eq!(encode_bank(&MemoryBank::default()), "");
    }

    #[test]
    fn dangling_variant_reference_fails_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bank.jsonl");
        let mut bank = sample_bank();
        bank.records[0].variants[0].parent_pattern_id = "pat_missing".to_string();
        fs::write(&path, encode_bank(&bank)).unwrap();
        match load_bank(&path) {
            Err(BankError::DanglingReference(id)) => assert_eq!(id, "pat_missing"),
            other => panic!("expected dangling reference, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_pattern_id_fails_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bank.jsonl");
        let mut bank = sample_bank();
        bank.records[1] = bank.records[0].clone();
        fs::write(&path, encode_bank(&bank)).unwrap();
        assert!(matches!(
            load_bank(&path),
            Err(BankError::DuplicatePatternId(_))
        ));
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bank.jsonl");
        let mut text = encode_bank(&sample_bank());
        text.push_str("{not json\n");
        fs::write(&path, text).unwrap();
        match load_bank(&path) {
            Err(BankError::MalformedRecord { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected malformed record, got {other:?}"),
        }
    }

    #[test]
    fn rate_out_of_range_is_reported() {
        let mut bank = sample_bank();
        bank.records[0].historical_acceptance_rate = 1.2;
        let violations = validate_bank(&bank);
        assert_eq!(violations.len(), 1);
        assert!(matches!(violations[0], Violation::RateOutOfRange { .. }));
    }

    #[test]
    fn episode_with_missing_variant_is_reported() {
        let mut bank = sample_bank();
        bank.records[0].episodes[0].parent_variant_id = "var_missing".to_string();
        let violations = validate_bank(&bank);
        assert_eq!(violations.len(), 1);
        assert!(matches!(violations[0], Violation::DanglingReference { .. }));
    }

    #[test]
    fn valid_bank_has_no_violations() {
        assert!(validate_bank(&sample_bank()).is_empty());
    }
}
