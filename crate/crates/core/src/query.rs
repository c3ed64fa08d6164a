//! Query normalization and deterministic candidate retrieval.
//!
//! Raw debugging context is normalized into a query profile (lexical tokens,
//! failure-family votes, command/path/stack signatures, entity slots), then
//! every (record, variant) pair in the bank is scored over seven evidence
//! channels with fixed weights. There is no embedding model anywhere in this
//! path: paraphrase degradation comes purely from token mismatch.

use crate::family::FailureFamily;
use crate::memory::{MemoryBank, MemoryRecord, Variant};
use serde::Deserialize;
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

/// Fixed channel weights for the aggregate candidate score.
pub const WEIGHT_LEXICAL: f64 = 0.30;
pub const WEIGHT_FAMILY: f64 = 0.20;
pub const WEIGHT_ENTITY: f64 = 0.10;
pub const WEIGHT_COMMAND: f64 = 0.15;
pub const WEIGHT_PATH: f64 = 0.10;
pub const WEIGHT_STACK: f64 = 0.10;
pub const WEIGHT_HISTORY: f64 = 0.05;

/// Lexical weight used by high-recall retrieval (others renormalized).
pub const HIGH_RECALL_LEXICAL_WEIGHT: f64 = 0.45;

/// Structural-evidence floor for high-precision retrieval.
pub const HIGH_PRECISION_GATE: f64 = 0.5;

/// Default candidate count.
pub const DEFAULT_K: usize = 3;

const STOPWORDS: [&str; 24] = [
    "a", "an", "and", "are", "as", "at", "be", "but", "by", "for", "from", "has", "in", "is",
    "it", "no", "not", "of", "on", "or", "the", "to", "was", "with",
];

/// Boilerplate words dropped when extracting stack-frame identifiers.
const STACK_BOILERPLATE: [&str; 9] = [
    "file", "line", "in", "most", "recent", "call", "last", "traceback", "module",
];

/// Raw debugging context as observed by the agent.
#[derive(Debug, Clone, Default, PartialEq, Eq, Deserialize)]
pub struct RawContext {
    pub error_text: String,
    pub stack_excerpt: String,
    pub command: String,
    pub paths: Vec<String>,
    pub repo_scope: String,
    pub env_metadata: BTreeMap<String, String>,
    pub prior_attempts: u32,
    pub session_id: String,
}

/// Normalized query profile.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct QueryProfile {
    pub tokens: BTreeSet<String>,
    pub family_votes: BTreeMap<FailureFamily, f64>,
    pub command_signature: BTreeSet<String>,
    pub path_signature: BTreeSet<String>,
    pub stack_signature: BTreeSet<String>,
    pub entities: BTreeSet<String>,
    pub session_id: String,
    pub session_rejections: u32,
}

/// Per-channel component scores, each in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ChannelScores {
    pub lexical: f64,
    pub family: f64,
    pub entity: f64,
    pub command: f64,
    pub path: f64,
    pub stack: f64,
    pub history: f64,
}

/// A scored (record, variant) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub record_ref: String,
    pub variant_ref: String,
    pub score: f64,
    pub component_scores: ChannelScores,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RetrievalKind {
    Standard,
    HighPrecision,
    HighRecall,
}

/// Retrieval mode plus candidate budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetrievalMode {
    pub kind: RetrievalKind,
    pub k: usize,
}

impl RetrievalMode {
    pub fn standard(k: usize) -> Self {
        assert!(k >= 1);
        Self { kind: RetrievalKind::Standard, k }
    }

    pub fn high_precision(k: usize) -> Self {
        assert!(k >= 1);
        Self { kind: RetrievalKind::HighPrecision, k }
    }

    pub fn high_recall(k: usize) -> Self {
        assert!(k >= 1);
        Self { kind: RetrievalKind::HighRecall, k }
    }
}

impl Default for RetrievalMode {
    fn default() -> Self {
        Self::standard(DEFAULT_K)
    }
}

/// One keyword rule contributing family votes.
#[derive(Debug, Clone, Deserialize)]
pub struct FamilyRule {
    pub family: FailureFamily,
    pub keywords: BTreeSet<String>,
    pub weight: f64,
}

/// The full keyword rule set, one or more rules per family.
#[derive(Debug, Clone)]
pub struct FamilyRules {
    rules: Vec<FamilyRule>,
}

#[derive(Debug, Error)]
pub enum RulesError {
    #[error("line {line}: malformed family rule: {message}")]
    Malformed { line: usize, message: String },
    #[error("io failure: {0}")]
    Io(#[from] std::io::Error),
}

const BUILTIN_RULES: &str = include_str!("../data/family_rules.jsonl");

impl FamilyRules {
    /// The rule set shipped with the crate (`data/family_rules.jsonl`).
    pub fn builtin() -> Self {
        Self::parse(BUILTIN_RULES).expect("builtin family rules parse")
    }

    pub fn parse(text: &str) -> Result<Self, RulesError> {
        let mut rules = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let rule: FamilyRule =
                serde_json::from_str(line).map_err(|e| RulesError::Malformed {
                    line: idx + 1,
                    message: e.to_string(),
                })?;
            rules.push(rule);
        }
        Ok(Self { rules })
    }

    pub fn load(path: &std::path::Path) -> Result<Self, RulesError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn rules(&self) -> &[FamilyRule] {
        &self.rules
    }

    /// Vote weights per family for the given evidence tokens.
    pub fn votes(&self, evidence: &BTreeSet<String>) -> BTreeMap<FailureFamily, f64> {
        let mut votes = BTreeMap::new();
        for rule in &self.rules {
            let hits = rule.keywords.intersection(evidence).count();
            if hits > 0 {
                *votes.entry(rule.family).or_insert(0.0) += rule.weight * hits as f64;
            }
        }
        votes
    }
}

impl Default for FamilyRules {
    fn default() -> Self {
        Self::builtin()
    }
}

/// Lowercase and split on whitespace and punctuation (any non-alphanumeric
/// character acts as a separator).
pub fn normalize_tokens(text: &str) -> BTreeSet<String> {
    let lowered = text.to_lowercase();
    lowered
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

fn lexical_tokens(text: &str) -> BTreeSet<String> {
    let mut tokens = normalize_tokens(text);
    for stop in STOPWORDS {
        tokens.remove(stop);
    }
    tokens
}

fn stack_identifiers(text: &str) -> BTreeSet<String> {
    let mut tokens = normalize_tokens(text);
    for word in STACK_BOILERPLATE {
        tokens.remove(word);
    }
    tokens.retain(|t| !t.chars().all(|c| c.is_ascii_digit()));
    tokens
}

/// Canonical entity slot: lowercase, non-alphanumeric runs collapsed to `_`.
pub fn normalize_entity(raw: &str) -> String {
    let mut out = String::new();
    let mut last_was_sep = true;
    for c in raw.trim().to_lowercase().chars() {
        if c.is_alphanumeric() {
            out.push(c);
            last_was_sep = false;
        } else if !last_was_sep {
            out.push('_');
            last_was_sep = true;
        }
    }
    while out.ends_with('_') {
        out.pop();
    }
    out
}

/// Normalize raw context with the built-in family rules.
pub fn normalize(raw: &RawContext) -> QueryProfile {
    normalize_with_rules(raw, &FamilyRules::builtin())
}

/// Deterministic normalization `φ(x_t) → q_t`.
pub fn normalize_with_rules(raw: &RawContext, rules: &FamilyRules) -> QueryProfile {
    let mut tokens = lexical_tokens(&raw.error_text);
    tokens.extend(lexical_tokens(&raw.stack_excerpt));

    let command_signature = normalize_tokens(&raw.command);

    let mut path_signature = BTreeSet::new();
    let mut entities = BTreeSet::new();
    for path in &raw.paths {
        for segment in path.split('/') {
            path_signature.extend(normalize_tokens(segment));
        }
        if let Some(base) = path.rsplit('/').next() {
            let slot = normalize_entity(base);
            if !slot.is_empty() {
                entities.insert(slot);
            }
        }
    }

    let stack_signature = stack_identifiers(&raw.stack_excerpt);

    for key in raw.env_metadata.keys() {
        let slot = normalize_entity(key);
        if !slot.is_empty() {
            entities.insert(slot);
        }
    }

    // Family votes consider every evidence channel, not just lexical tokens.
    let mut evidence = tokens.clone();
    evidence.extend(command_signature.iter().cloned());
    evidence.extend(path_signature.iter().cloned());
    evidence.extend(stack_signature.iter().cloned());
    evidence.extend(entities.iter().cloned());
    let family_votes = rules.votes(&evidence);

    QueryProfile {
        tokens,
        family_votes,
        command_signature,
        path_signature,
        stack_signature,
        entities,
        session_id: raw.session_id.clone(),
        session_rejections: raw.prior_attempts,
    }
}

/// Jaccard similarity; empty union scores zero.
pub fn jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    let intersection = a.intersection(b).count();
    let union = a.len() + b.len() - intersection;
    if union == 0 {
        0.0
    } else {
        intersection as f64 / union as f64
    }
}

fn family_component(profile: &QueryProfile, family: FailureFamily) -> f64 {
    let max_vote = profile
        .family_votes
        .values()
        .fold(0.0_f64, |acc, v| acc.max(*v));
    if max_vote <= 0.0 {
        return 0.0;
    }
    profile.family_votes.get(&family).copied().unwrap_or(0.0) / max_vote
}

/// Component scores for one (record, variant) pair.
pub fn channel_scores(
    profile: &QueryProfile,
    record: &MemoryRecord,
    variant: &Variant,
) -> ChannelScores {
    let mut pattern_tokens = record.pattern.symptom_tokens.clone();
    pattern_tokens.extend(record.pattern.root_cause_tokens.iter().cloned());

    let entity = if variant.entities.is_empty() {
        0.0
    } else {
        profile.entities.intersection(&variant.entities).count() as f64
            / variant.entities.len() as f64
    };

    ChannelScores {
        lexical: jaccard(&profile.tokens, &pattern_tokens),
        family: family_component(profile, record.pattern.family),
        entity,
        command: jaccard(&profile.command_signature, &variant.command_signature),
        path: jaccard(&profile.path_signature, &variant.path_signature),
        stack: jaccard(&profile.stack_signature, &variant.stack_signature),
        history: record.historical_acceptance_rate,
    }
}

fn aggregate(scores: &ChannelScores, lexical_weight: f64) -> f64 {
    if (lexical_weight - WEIGHT_LEXICAL).abs() < f64::EPSILON {
        return WEIGHT_LEXICAL * scores.lexical
            + WEIGHT_FAMILY * scores.family
            + WEIGHT_ENTITY * scores.entity
            + WEIGHT_COMMAND * scores.command
            + WEIGHT_PATH * scores.path
            + WEIGHT_STACK * scores.stack
            + WEIGHT_HISTORY * scores.history;
    }
    // Raised lexical weight, remaining mass split over the other channels in
    // their standard proportions.
    let rest = (1.0 - lexical_weight) / (1.0 - WEIGHT_LEXICAL);
    lexical_weight * scores.lexical
        + WEIGHT_FAMILY * rest * scores.family
        + WEIGHT_ENTITY * rest * scores.entity
        + WEIGHT_COMMAND * rest * scores.command
        + WEIGHT_PATH * rest * scores.path
        + WEIGHT_STACK * rest * scores.stack
        + WEIGHT_HISTORY * rest * scores.history
}

/// Score one candidate with the standard channel weights.
pub fn score_candidate(
    profile: &QueryProfile,
    record: &MemoryRecord,
    variant: &Variant,
) -> Candidate {
    let components = channel_scores(profile, record, variant);
    Candidate {
        record_ref: record.pattern.pattern_id.clone(),
        variant_ref: variant.variant_id.clone(),
        score: aggregate(&components, WEIGHT_LEXICAL),
        component_scores: components,
    }
}

fn sort_candidates(candidates: &mut [Candidate]) {
    candidates.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.record_ref.cmp(&b.record_ref))
            .then_with(|| a.variant_ref.cmp(&b.variant_ref))
    });
}

/// Deterministic retrieval `R(q_t, M) → C_t`, sorted by
/// (score desc, pattern id asc, variant id asc).
pub fn retrieve(profile: &QueryProfile, bank: &MemoryBank, mode: RetrievalMode) -> Vec<Candidate> {
    let lexical_weight = match mode.kind {
        RetrievalKind::HighRecall => HIGH_RECALL_LEXICAL_WEIGHT,
        _ => WEIGHT_LEXICAL,
    };

    let mut candidates = Vec::new();
    for record in &bank.records {
        for variant in &record.variants {
            let components = channel_scores(profile, record, variant);
            if mode.kind == RetrievalKind::HighPrecision
                && components.command < HIGH_PRECISION_GATE
                && components.path < HIGH_PRECISION_GATE
                && components.stack < HIGH_PRECISION_GATE
            {
                continue;
            }
            candidates.push(Candidate {
                record_ref: record.pattern.pattern_id.clone(),
                variant_ref: variant.variant_id.clone(),
                score: aggregate(&components, lexical_weight),
                component_scores: components,
            });
        }
    }

    sort_candidates(&mut candidates);
    let limit = match mode.kind {
        RetrievalKind::HighRecall => mode.k * 2,
        _ => mode.k,
    };
    candidates.truncate(limit);
    candidates
}

/// Rank every variant by the lexical channel alone (the `lexical_only`
/// baseline's view of the bank).
pub fn retrieve_lexical(profile: &QueryProfile, bank: &MemoryBank, k: usize) -> Vec<Candidate> {
    let mut candidates: Vec<Candidate> = Vec::new();
    for record in &bank.records {
        for variant in &record.variants {
            let components = channel_scores(profile, record, variant);
            candidates.push(Candidate {
                record_ref: record.pattern.pattern_id.clone(),
                variant_ref: variant.variant_id.clone(),
                score: components.lexical,
                component_scores: components,
            });
        }
    }
    sort_candidates(&mut candidates);
    candidates.truncate(k);
    candidates
}
