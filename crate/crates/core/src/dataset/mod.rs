//! Deterministic smoke-scale benchmark generator and dataset IO.
//!
//! Every artifact is a pure function of the generator seed: the memory bank
//! (16 records, 32 variants across the 15 families), 24 canonical queries,
//! 96 paraphrases, 32 hard-negative cases built from the five confusable
//! pairs, 40 replay events per replay seed, and 24 context-budget cases. A
//! `manifest.json` records counts and a content digest per file.

mod content;

pub use content::{CONFUSABLE_PAIRS, FAMILY_SPECS, NOISE_TOKENS, SYNONYMS};

use crate::canon::{self, ObjWriter};
use crate::family::FailureFamily;
use crate::memory::{
    encode_bank, load_bank, validate_bank, Episode, FeedbackLabel, MemoryBank, MemoryRecord,
    Pattern, Variant,
};
use crate::policy::{compute_reward, Action, Outcome, RewardConfig};
use crate::query::{normalize, normalize_entity, normalize_tokens, retrieve, FamilyRules,
    RawContext, RetrievalMode,
};
use crate::rng::RngState;
use content::{spec_for, FamilySpec, EXTRA_SPEC};
use serde::Deserialize;
use sha2::{Digest, Sha256};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::Path;
use thiserror::Error;

/// Smoke-scale cardinalities.
pub const SMOKE_QUERIES: usize = 24;
pub const SMOKE_PARAPHRASES_PER_QUERY: usize = 4;
pub const SMOKE_PARAPHRASES: usize = 96;
pub const SMOKE_HARD_NEGATIVES: usize = 32;
pub const SMOKE_EVENTS_PER_SEED: usize = 40;
pub const SMOKE_RECORDS: usize = 16;
pub const SMOKE_VARIANTS: usize = 32;
pub const SMOKE_BUDGET_CASES: usize = 24;

/// The two default replay seeds.
pub const DEFAULT_REPLAY_SEEDS: [u64; 2] = [1337, 2024];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    Smoke,
}

impl Scale {
    pub fn as_str(&self) -> &'static str {
        "smoke"
    }
}

/// Generator configuration; content is a pure function of these fields.
#[derive(Debug, Clone)]
pub struct GeneratorConfig {
    pub seed: u64,
    pub scale: Scale,
    pub replay_seeds: Vec<u64>,
}

impl GeneratorConfig {
    pub fn smoke(seed: u64) -> Self {
        Self {
            seed,
            scale: Scale::Smoke,
            replay_seeds: DEFAULT_REPLAY_SEEDS.to_vec(),
        }
    }
}

/// One retrieval query with its gold pattern.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct QueryCase {
    pub query_id: String,
    pub raw: RawContext,
    pub gold_pattern_id: String,
    pub family: FailureFamily,
}

/// One must-not-inject case built from a confusable pair.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct HardNegativeCase {
    pub case_id: String,
    pub raw: RawContext,
    pub decoy_pattern_id: String,
    pub confusable_with: FailureFamily,
    pub label: String,
}

/// One offline feedback case: pre-labeled outcomes for every action.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct ReplayEvent {
    pub event_id: String,
    pub seed: u64,
    pub session_id: String,
    pub query_id: String,
    pub outcome_per_action: BTreeMap<Action, Outcome>,
    pub oracle_action: Action,
}

/// Payload modes of the context-budget proxy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BudgetMode {
    NoMemory,
    ShortHint,
    Top1Resolution,
    Top3Summary,
    FullTrace,
}

impl BudgetMode {
    pub const ALL: [BudgetMode; 5] = [
        BudgetMode::NoMemory,
        BudgetMode::ShortHint,
        BudgetMode::Top1Resolution,
        BudgetMode::Top3Summary,
        BudgetMode::FullTrace,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            BudgetMode::NoMemory => "no_memory",
            BudgetMode::ShortHint => "short_hint",
            BudgetMode::Top1Resolution => "top1_resolution",
            BudgetMode::Top3Summary => "top3_summary",
            BudgetMode::FullTrace => "full_trace",
        }
    }

    /// Base (tokens, latency_ms, success, fp_influence) before jitter.
    fn base(&self) -> (f64, f64, f64, f64) {
        match self {
            BudgetMode::NoMemory => (0.0, 0.0, 0.62, 0.0),
            BudgetMode::ShortHint => (41.0, 18.0, 0.78, 0.28),
            BudgetMode::Top1Resolution => (29.0, 16.0, 0.58, 0.86),
            BudgetMode::Top3Summary => (157.0, 54.0, 0.57, 0.86),
            BudgetMode::FullTrace => (351.0, 115.0, 0.48, 0.53),
        }
    }
}

/// One context-budget proxy case.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct ContextBudgetCase {
    pub case_id: String,
    pub mode: BudgetMode,
    pub tokens: f64,
    pub latency_ms: f64,
    pub success_proxy: f64,
    pub fp_influence_proxy: f64,
}

/// Dataset manifest with per-file content digests.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub scale: String,
    pub replay_seeds: Vec<u64>,
    pub counts: BTreeMap<String, u64>,
    pub files: BTreeMap<String, String>,
}

/// The full in-memory dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub bank: MemoryBank,
    pub queries: Vec<QueryCase>,
    pub paraphrases: Vec<QueryCase>,
    pub hard_negatives: Vec<HardNegativeCase>,
    pub replay_events: Vec<ReplayEvent>,
    pub context_budget: Vec<ContextBudgetCase>,
    pub manifest: Manifest,
}

impl Dataset {
    pub fn query(&self, query_id: &str) -> Option<&QueryCase> {
        self.queries.iter().find(|q| q.query_id == query_id)
    }

    /// Replay events for one seed, in generation order.
    pub fn events_for_seed(&self, seed: u64) -> Vec<&ReplayEvent> {
        self.replay_events.iter().filter(|e| e.seed == seed).collect()
    }
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("io failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("{file} line {line}: {message}")]
    Malformed {
        file: &'static str,
        line: usize,
        message: String,
    },
    #[error("memory bank: {0}")]
    Bank(#[from] crate::memory::BankError),
}

/// A single dataset-level invariant violation.
#[derive(Debug, Clone, PartialEq)]
pub enum DatasetViolation {
    CardinalityMismatch { artifact: &'static str, expected: usize, actual: usize },
    DanglingReference { id: String, referenced: String },
    BankViolation(String),
    SaturationFailure { query_id: String, top: String },
    WeakDecoy { case_id: String },
    UngatedHardNegative { case_id: String, top1_score: f64 },
    BadLabel { id: String, message: String },
}

impl fmt::Display for DatasetViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DatasetViolation::CardinalityMismatch { artifact, expected, actual } => {
                write!(f, "{artifact}: expected {expected} entries, found {actual}")
            }
            DatasetViolation::DanglingReference { id, referenced } => {
                write!(f, "{id} references missing {referenced}")
            }
            DatasetViolation::BankViolation(v) => write!(f, "bank: {v}"),
            DatasetViolation::SaturationFailure { query_id, top } => {
                write!(f, "{query_id}: gold pattern not ranked first (top = {top})")
            }
            DatasetViolation::WeakDecoy { case_id } => {
                write!(f, "{case_id}: no candidate with lexical score >= 0.55")
            }
            DatasetViolation::UngatedHardNegative { case_id, top1_score } => {
                write!(
                    f,
                    "{case_id}: top candidate score {top1_score} reaches the static injection gate"
                )
            }
            DatasetViolation::BadLabel { id, message } => write!(f, "{id}: {message}"),
        }
    }
}

// ---------------------------------------------------------------------------
// Bank construction
// ---------------------------------------------------------------------------

fn pattern_id(idx: usize) -> String {
    format!("pat{idx:02}")
}

fn record_from_spec(idx: usize, spec: &FamilySpec) -> MemoryRecord {
    let pid = pattern_id(idx);
    let mut symptom_tokens = lexical(spec.error_text);
    for frame in spec.frames {
        symptom_tokens.insert(frame.to_string());
    }
    let root_cause_tokens = lexical(spec.root_hint);

    let make_variant = |suffix: &str,
                        command: &str,
                        path: &str,
                        frames: [&str; 3],
                        env: (&str, &str),
                        fix: &str| {
        let mut entities = BTreeSet::new();
        entities.insert(normalize_entity(env.0));
        if let Some(base) = path.rsplit('/').next() {
            entities.insert(normalize_entity(base));
        }
        Variant {
            variant_id: format!("var{idx:02}{suffix}"),
            parent_pattern_id: pid.clone(),
            fix_strategy: fix.to_string(),
            command_signature: normalize_tokens(command),
            path_signature: path.split('/').flat_map(|s| normalize_tokens(s)).collect(),
            stack_signature: frames.iter().map(|s| s.to_string()).collect(),
            entities,
        }
    };

    let variant_a = make_variant("a", spec.command, spec.path, spec.frames, spec.env, spec.fix);
    let variant_b = make_variant(
        "b",
        spec.alt_command,
        spec.alt_path,
        spec.alt_frames,
        spec.alt_env,
        spec.alt_fix,
    );

    let second_label = if spec.fp_history > 0.3 {
        FeedbackLabel::Rejected
    } else {
        FeedbackLabel::Accepted
    };

    MemoryRecord {
        pattern: Pattern {
            pattern_id: pid.clone(),
            family: spec.family,
            symptom_tokens,
            root_cause_tokens,
            description: spec.description.to_string(),
        },
        episodes: vec![
            Episode {
                episode_id: format!("epi{idx:02}a"),
                parent_variant_id: variant_a.variant_id.clone(),
                observed_evidence: spec.error_text.to_string(),
                validated: true,
                feedback_label: FeedbackLabel::Verified,
                timestamp: (idx as u64) * 2,
            },
            Episode {
                episode_id: format!("epi{idx:02}b"),
                parent_variant_id: variant_b.variant_id.clone(),
                observed_evidence: spec.error_text.to_string(),
                validated: false,
                feedback_label: second_label,
                timestamp: (idx as u64) * 2 + 1,
            },
        ],
        variants: vec![variant_a, variant_b],
        historical_acceptance_rate: spec.acceptance,
        historical_false_positive_rate: spec.fp_history,
    }
}

fn lexical(text: &str) -> BTreeSet<String> {
    // Same tokenization the normalizer applies to error text.
    let raw = RawContext {
        error_text: text.to_string(),
        session_id: "gen".to_string(),
        ..Default::default()
    };
    normalize(&raw).tokens
}

/// Build the smoke-scale bank: one record per family plus a second
/// duplicate-server flavor.
pub fn build_bank() -> MemoryBank {
    let mut records: Vec<MemoryRecord> = FAMILY_SPECS
        .iter()
        .enumerate()
        .map(|(idx, spec)| record_from_spec(idx, spec))
        .collect();
    records.push(record_from_spec(15, &EXTRA_SPEC));
    MemoryBank { records, bank_version: 1 }
}

// ---------------------------------------------------------------------------
// Queries
// ---------------------------------------------------------------------------

/// Family indices (into `FAMILY_SPECS`) that receive a risky second query:
/// the first nine confusable-pair members in enumeration order.
const RISKY_FAMILY_INDICES: [usize; 9] = [1, 2, 3, 5, 6, 7, 9, 10, 12];

fn pair_of(family: FailureFamily) -> Option<(FailureFamily, &'static str)> {
    for (a, b, surface) in CONFUSABLE_PAIRS {
        if a == family {
            return Some((b, surface));
        }
        if b == family {
            return Some((a, surface));
        }
    }
    None
}

fn clean_query(idx: usize, spec: &FamilySpec) -> QueryCase {
    // Confusable-pair members get full operational context; the unpaired
    // families report only the terminal text. The sparse queries still
    // saturate retrieval but land just under a pure score threshold, which
    // is what separates a learned gate from a fixed one.
    let rich = spec.fp_history > 0.3;
    let raw = RawContext {
        error_text: format!("{} {}", spec.error_text, spec.root_hint),
        stack_excerpt: if rich { spec.frames.join(" / ") } else { String::new() },
        command: if rich { spec.command.to_string() } else { String::new() },
        paths: if rich { vec![spec.path.to_string()] } else { vec![] },
        repo_scope: "demo-repo".to_string(),
        env_metadata: if rich {
            [(spec.env.0.to_string(), spec.env.1.to_string())]
                .into_iter()
                .collect()
        } else {
            BTreeMap::new()
        },
        prior_attempts: 0,
        session_id: format!("q{idx:02}"),
    };
    QueryCase {
        query_id: format!("q{idx:02}"),
        raw,
        gold_pattern_id: pattern_id(idx),
        family: spec.family,
    }
}

/// An ambiguous query: shared pair surface, weak structural evidence, and
/// family keywords from both members. The gold record still ranks first,
/// but with a thin margin and a high-false-positive history.
fn risky_query(query_idx: usize, family_idx: usize) -> QueryCase {
    let spec = &FAMILY_SPECS[family_idx];
    let (partner, surface) = pair_of(spec.family).expect("risky families are paired");
    let partner_spec = spec_for(partner);
    let error_text = format!(
        "{surface} {} {} {} {} outcome unclear",
        spec.vote_tokens[0], spec.vote_tokens[1], partner_spec.vote_tokens[0],
        partner_spec.vote_tokens[1],
    );
    let first_path_segment = spec.path.split('/').next().unwrap_or_default();
    // Two frames: the second is always family-exclusive, which keeps the
    // gold pattern lexically ahead of its confusable partner. No command
    // evidence: the variant-only structural edge would widen the margin
    // past the ambiguity band these queries exist to exercise.
    let raw = RawContext {
        error_text,
        stack_excerpt: format!("{} / {}", spec.frames[0], spec.frames[1]),
        command: String::new(),
        paths: vec![first_path_segment.to_string()],
        repo_scope: "demo-repo".to_string(),
        env_metadata: BTreeMap::new(),
        prior_attempts: 1,
        session_id: format!("q{query_idx:02}"),
    };
    QueryCase {
        query_id: format!("q{query_idx:02}"),
        raw,
        gold_pattern_id: pattern_id(family_idx),
        family: spec.family,
    }
}

/// The 24 canonical queries: 15 clean (one per family) then 9 risky.
pub fn build_queries() -> Vec<QueryCase> {
    let mut queries: Vec<QueryCase> = FAMILY_SPECS
        .iter()
        .enumerate()
        .map(|(idx, spec)| clean_query(idx, spec))
        .collect();
    for (offset, family_idx) in RISKY_FAMILY_INDICES.iter().enumerate() {
        queries.push(risky_query(15 + offset, *family_idx));
    }
    queries
}

// ---------------------------------------------------------------------------
// Paraphrases
// ---------------------------------------------------------------------------

fn synonym_for(word: &str) -> Option<&'static str> {
    let key: String = word
        .to_lowercase()
        .chars()
        .filter(|c| c.is_alphanumeric())
        .collect();
    SYNONYMS
        .iter()
        .find(|(k, _)| *k == key)
        .map(|(_, v)| *v)
}

fn transform_error_text(text: &str, transform: usize, rng: &mut RngState) -> String {
    let words: Vec<&str> = text.split_whitespace().collect();
    match transform {
        // Synonym substitution from the fixed table.
        0 => words
            .iter()
            .map(|w| synonym_for(w).unwrap_or(w).to_string())
            .collect::<Vec<_>>()
            .join(" "),
        // Token reordering (Fisher-Yates).
        1 => {
            let mut shuffled: Vec<String> = words.iter().map(|w| w.to_string()).collect();
            for i in (1..shuffled.len()).rev() {
                let j = rng.next_index(i + 1);
                shuffled.swap(i, j);
            }
            shuffled.join(" ")
        }
        // Truncation to 60% of the words.
        2 => {
            let keep = ((words.len() as f64) * 0.6).ceil() as usize;
            words[..keep.min(words.len())].join(" ")
        }
        // Noise-token insertion.
        _ => {
            let mut with_noise: Vec<String> = words.iter().map(|w| w.to_string()).collect();
            for _ in 0..4 {
                let token = NOISE_TOKENS[rng.next_index(NOISE_TOKENS.len())];
                let pos = rng.next_index(with_noise.len() + 1);
                with_noise.insert(pos, token.to_string());
            }
            with_noise.join(" ")
        }
    }
}

/// Four deterministic paraphrases per canonical query. The transform
/// rewrites the query's whole textual surface (error text and stack
/// excerpt), so both the lexical channel and the structural signatures
/// drift away from the stored pattern.
pub fn build_paraphrases(queries: &[QueryCase], seed: u64) -> Vec<QueryCase> {
    let mut out = Vec::with_capacity(queries.len() * SMOKE_PARAPHRASES_PER_QUERY);
    for (q_idx, case) in queries.iter().enumerate() {
        for transform in 0..SMOKE_PARAPHRASES_PER_QUERY {
            let mut rng = RngState::new(
                seed ^ ((q_idx as u64) << 8) ^ (transform as u64 + 1),
            );
            let mut raw = case.raw.clone();
            raw.error_text = transform_error_text(&raw.error_text, transform, &mut rng);
            if !raw.stack_excerpt.is_empty() {
                raw.stack_excerpt = transform_error_text(&raw.stack_excerpt, transform, &mut rng);
            }
            raw.session_id = format!("{}_p{transform}", case.query_id);
            out.push(QueryCase {
                query_id: format!("{}_p{transform}", case.query_id),
                raw,
                gold_pattern_id: case.gold_pattern_id.clone(),
                family: case.family,
            });
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Hard negatives
// ---------------------------------------------------------------------------

/// Decoy boost tokens: pattern vocabulary that is lexically distinctive but
/// carries no family keyword, so the decoy wins the lexical channel while
/// losing the family vote.
fn decoy_boost_tokens(spec: &FamilySpec, surface: &BTreeSet<String>, rules: &FamilyRules) -> Vec<String> {
    let keywords: BTreeSet<&str> = rules
        .rules()
        .iter()
        .filter(|r| r.family == spec.family)
        .flat_map(|r| r.keywords.iter().map(String::as_str))
        .collect();
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    let pools = [spec.error_text, spec.root_hint];
    for pool in pools {
        for token in pool.split_whitespace() {
            for tok in normalize_tokens(token) {
                if surface.contains(&tok) || keywords.contains(tok.as_str()) {
                    continue;
                }
                if lexical(pool).contains(&tok) && seen.insert(tok.clone()) {
                    out.push(tok);
                }
            }
        }
    }
    for frame in spec.frames {
        if seen.insert(frame.to_string()) && !keywords.contains(frame) {
            out.push(frame.to_string());
        }
    }
    out.truncate(10);
    out
}

/// The 32 hard negatives, cycling the five confusable pairs in both
/// orientations.
pub fn build_hard_negatives(rules: &FamilyRules) -> Vec<HardNegativeCase> {
    let mut cases = Vec::with_capacity(SMOKE_HARD_NEGATIVES);
    for i in 0..SMOKE_HARD_NEGATIVES {
        let (a, b, surface_text) = CONFUSABLE_PAIRS[i % CONFUSABLE_PAIRS.len()];
        let flipped = (i / CONFUSABLE_PAIRS.len()) % 2 == 1;
        let (true_family, decoy_family) = if flipped { (b, a) } else { (a, b) };
        let true_spec = spec_for(true_family);
        let decoy_spec = spec_for(decoy_family);
        let surface_tokens = lexical(surface_text);
        let boost = decoy_boost_tokens(decoy_spec, &surface_tokens, rules);
        let noise = NOISE_TOKENS[i % NOISE_TOKENS.len()];
        let error_text = format!(
            "{surface_text} {} {} {} {noise}",
            boost.join(" "),
            true_spec.vote_tokens[0],
            true_spec.vote_tokens[1],
        );
        let decoy_idx = decoy_spec.index();
        cases.push(HardNegativeCase {
            case_id: format!("hn{i:02}"),
            raw: RawContext {
                error_text,
                stack_excerpt: String::new(),
                command: String::new(),
                paths: vec![],
                repo_scope: "demo-repo".to_string(),
                env_metadata: BTreeMap::new(),
                prior_attempts: 0,
                session_id: format!("hn{i:02}"),
            },
            decoy_pattern_id: pattern_id(decoy_idx),
            confusable_with: true_family,
            label: "must_not_inject".to_string(),
        });
    }
    cases
}

// ---------------------------------------------------------------------------
// Replay events
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum EventKind {
    Verified,
    Accepted,
    Rejected,
    FalsePositive,
    CorrectAbstain,
}

const EVENT_SCHEDULE: [EventKind; 5] = [
    EventKind::Verified,
    EventKind::Accepted,
    EventKind::Rejected,
    EventKind::FalsePositive,
    EventKind::CorrectAbstain,
];

fn outcome_for(kind: EventKind, action: Action) -> Outcome {
    let latency = action.payload_latency_ms();
    let tokens = action.payload_tokens();
    match kind {
        EventKind::Verified => {
            if action == Action::Top1Resolution {
                Outcome::verified(latency, tokens)
            } else if action.injects_memory() {
                Outcome::accepted(latency, tokens)
            } else {
                Outcome::none(latency, tokens)
            }
        }
        EventKind::Accepted => {
            if action.injects_memory() {
                Outcome::accepted(latency, tokens)
            } else {
                Outcome::none(latency, tokens)
            }
        }
        EventKind::Rejected | EventKind::CorrectAbstain => {
            if action.injects_memory() {
                Outcome::rejected(latency, tokens)
            } else if action == Action::Abstain {
                Outcome::correct_abstain(latency, tokens)
            } else {
                Outcome::none(latency, tokens)
            }
        }
        EventKind::FalsePositive => {
            if action.injects_memory() {
                Outcome::false_positive(latency, tokens)
            } else if action == Action::Abstain {
                Outcome::correct_abstain(latency, tokens)
            } else {
                Outcome::none(latency, tokens)
            }
        }
    }
}

fn best_action(outcomes: &BTreeMap<Action, Outcome>, cfg: &RewardConfig) -> Action {
    let mut best = Action::NoMemory;
    let mut best_reward = f64::NEG_INFINITY;
    for action in Action::TIE_BREAK {
        let reward = compute_reward(&outcomes[&action], cfg);
        if reward > best_reward {
            best = action;
            best_reward = reward;
        }
    }
    best
}

/// 40 events for one replay seed. Each family's events cycle the five
/// outcome kinds with a seed-dependent phase; risky kinds reference risky
/// queries so their retrieval evidence matches the labeled danger.
pub fn build_replay_events(seed: u64) -> Vec<ReplayEvent> {
    let cfg = RewardConfig::default();
    let mut events = Vec::with_capacity(SMOKE_EVENTS_PER_SEED);
    for i in 0..SMOKE_EVENTS_PER_SEED {
        let family_idx = i % 15;
        let occurrence = (i / 15) as u64;
        let phase = (seed + family_idx as u64) % 5;
        let kind = EVENT_SCHEDULE[((phase + occurrence) % 5) as usize];

        let query_idx = match kind {
            EventKind::Verified | EventKind::Accepted => family_idx,
            _ => match RISKY_FAMILY_INDICES.iter().position(|f| *f == family_idx) {
                Some(pos) => 15 + pos,
                None => 15 + (i % RISKY_FAMILY_INDICES.len()),
            },
        };

        let outcome_per_action: BTreeMap<Action, Outcome> = Action::ALL
            .iter()
            .map(|a| (*a, outcome_for(kind, *a)))
            .collect();
        let oracle_action = best_action(&outcome_per_action, &cfg);

        events.push(ReplayEvent {
            event_id: format!("ev{seed}_{i:02}"),
            seed,
            session_id: format!("sess{seed}_{}", i / 5),
            query_id: format!("q{query_idx:02}"),
            outcome_per_action,
            oracle_action,
        });
    }
    events
}

// ---------------------------------------------------------------------------
// Context budget
// ---------------------------------------------------------------------------

/// Quantize to nine decimal places so values survive the canonical
/// fixed-point encoding bit-exactly.
fn q9(x: f64) -> f64 {
    (x * 1e9).round() / 1e9
}

/// 24 context-budget cases cycling the five payload modes, with seeded
/// jitter on the proxies. `no_memory` keeps zero tokens, latency, and
/// false-positive influence exactly.
pub fn build_context_budget(seed: u64) -> Vec<ContextBudgetCase> {
    let mut rng = RngState::new(seed ^ 0x6275_6467_6574);
    let mut cases = Vec::with_capacity(SMOKE_BUDGET_CASES);
    for i in 0..SMOKE_BUDGET_CASES {
        let mode = BudgetMode::ALL[i % BudgetMode::ALL.len()];
        let (tokens, latency, success, fp) = mode.base();
        let success_jitter = rng.next_range(-0.05, 0.05);
        let fp_jitter = rng.next_range(-0.05, 0.05);
        let tokens_jitter = rng.next_range(-0.2, 0.2);
        let latency_jitter = rng.next_range(-0.2, 0.2);
        let case = if mode == BudgetMode::NoMemory {
            ContextBudgetCase {
                case_id: format!("cb{i:02}"),
                mode,
                tokens: 0.0,
                latency_ms: 0.0,
                success_proxy: q9((success + success_jitter).clamp(0.0, 1.0)),
                fp_influence_proxy: 0.0,
            }
        } else {
            ContextBudgetCase {
                case_id: format!("cb{i:02}"),
                mode,
                tokens: q9(tokens * (1.0 + tokens_jitter)),
                latency_ms: q9(latency * (1.0 + latency_jitter)),
                success_proxy: q9((success + success_jitter).clamp(0.0, 1.0)),
                fp_influence_proxy: q9((fp + fp_jitter).clamp(0.0, 1.0)),
            }
        };
        cases.push(case);
    }
    cases
}

// ---------------------------------------------------------------------------
// Generation, encoding, IO
// ---------------------------------------------------------------------------

/// Generate the full dataset in memory. Pure function of the config.
pub fn generate(cfg: &GeneratorConfig) -> Dataset {
    let rules = FamilyRules::builtin();
    let bank = build_bank();
    let queries = build_queries();
    let paraphrases = build_paraphrases(&queries, cfg.seed);
    let hard_negatives = build_hard_negatives(&rules);
    let mut replay_events = Vec::new();
    for seed in &cfg.replay_seeds {
        replay_events.extend(build_replay_events(*seed));
    }
    let context_budget = build_context_budget(cfg.seed);

    let mut dataset = Dataset {
        bank,
        queries,
        paraphrases,
        hard_negatives,
        replay_events,
        context_budget,
        manifest: Manifest {
            seed: cfg.seed,
            scale: cfg.scale.as_str().to_string(),
            replay_seeds: cfg.replay_seeds.clone(),
            counts: BTreeMap::new(),
            files: BTreeMap::new(),
        },
    };
    dataset.manifest.counts = counts_of(&dataset);
    dataset.manifest.files = digests_of(&dataset);
    dataset
}

fn counts_of(dataset: &Dataset) -> BTreeMap<String, u64> {
    [
        ("bank_records", dataset.bank.records.len() as u64),
        ("bank_variants", dataset.bank.variant_count() as u64),
        ("canonical_queries", dataset.queries.len() as u64),
        ("context_budget_cases", dataset.context_budget.len() as u64),
        ("hard_negatives", dataset.hard_negatives.len() as u64),
        ("paraphrases", dataset.paraphrases.len() as u64),
        ("replay_events", dataset.replay_events.len() as u64),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}

fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

fn digests_of(dataset: &Dataset) -> BTreeMap<String, String> {
    encoded_files(dataset)
        .into_iter()
        .map(|(name, text)| (name.to_string(), sha256_hex(text.as_bytes())))
        .collect()
}

fn encoded_files(dataset: &Dataset) -> Vec<(&'static str, String)> {
    vec![
        ("memory_bank.jsonl", encode_bank(&dataset.bank)),
        ("queries.jsonl", encode_lines(dataset.queries.iter().map(encode_query))),
        (
            "paraphrases.jsonl",
            encode_lines(dataset.paraphrases.iter().map(encode_query)),
        ),
        (
            "hard_negatives.jsonl",
            encode_lines(dataset.hard_negatives.iter().map(encode_hard_negative)),
        ),
        (
            "replay_events.jsonl",
            encode_lines(dataset.replay_events.iter().map(encode_event)),
        ),
        (
            "context_budget.jsonl",
            encode_lines(dataset.context_budget.iter().map(encode_budget_case)),
        ),
    ]
}

fn encode_lines<I: Iterator<Item = String>>(lines: I) -> String {
    let mut out = String::new();
    for line in lines {
        out.push_str(&line);
        out.push('\n');
    }
    out
}

fn encode_raw(raw: &RawContext) -> String {
    let mut env = String::from("{");
    for (i, (k, v)) in raw.env_metadata.iter().enumerate() {
        if i > 0 {
            env.push(',');
        }
        canon::push_json_str(&mut env, k);
        env.push(':');
        canon::push_json_str(&mut env, v);
    }
    env.push('}');

    let mut w = ObjWriter::new();
    w.field_str("command", &raw.command);
    w.field_raw("env_metadata", &env);
    w.field_str("error_text", &raw.error_text);
    w.field_str_array("paths", raw.paths.iter().map(String::as_str));
    w.field_u64("prior_attempts", raw.prior_attempts as u64);
    w.field_str("repo_scope", &raw.repo_scope);
    w.field_str("session_id", &raw.session_id);
    w.field_str("stack_excerpt", &raw.stack_excerpt);
    w.finish()
}

fn encode_query(case: &QueryCase) -> String {
    let mut w = ObjWriter::new();
    w.field_str("family", case.family.as_str());
    w.field_str("gold_pattern_id", &case.gold_pattern_id);
    w.field_str("query_id", &case.query_id);
    w.field_raw("raw", &encode_raw(&case.raw));
    w.finish()
}

fn encode_hard_negative(case: &HardNegativeCase) -> String {
    let mut w = ObjWriter::new();
    w.field_str("case_id", &case.case_id);
    w.field_str("confusable_with", case.confusable_with.as_str());
    w.field_str("decoy_pattern_id", &case.decoy_pattern_id);
    w.field_str("label", &case.label);
    w.field_raw("raw", &encode_raw(&case.raw));
    w.finish()
}

fn encode_outcome(outcome: &Outcome) -> String {
    let mut w = ObjWriter::new();
    w.field_bool("accepted", outcome.accepted);
    w.field_bool("correct_abstain", outcome.correct_abstain);
    w.field_bool("false_positive", outcome.false_positive);
    w.field_f64("latency_ms", outcome.latency_ms);
    w.field_bool("rejected", outcome.rejected);
    w.field_f64("token_cost", outcome.token_cost);
    w.field_bool("verified", outcome.verified);
    w.finish()
}

fn encode_event(event: &ReplayEvent) -> String {
    let mut outcomes = String::from("{");
    let mut sorted: Vec<(&Action, &Outcome)> = event.outcome_per_action.iter().collect();
    sorted.sort_by_key(|(a, _)| a.as_str());
    for (i, (action, outcome)) in sorted.into_iter().enumerate() {
        if i > 0 {
            outcomes.push(',');
        }
        canon::push_json_str(&mut outcomes, action.as_str());
        outcomes.push(':');
        outcomes.push_str(&encode_outcome(outcome));
    }
    outcomes.push('}');

    let mut w = ObjWriter::new();
    w.field_str("event_id", &event.event_id);
    w.field_str("oracle_action", event.oracle_action.as_str());
    w.field_raw("outcome_per_action", &outcomes);
    w.field_str("query_id", &event.query_id);
    w.field_u64("seed", event.seed);
    w.field_str("session_id", &event.session_id);
    w.finish()
}

fn encode_budget_case(case: &ContextBudgetCase) -> String {
    let mut w = ObjWriter::new();
    w.field_str("case_id", &case.case_id);
    w.field_f64("fp_influence_proxy", case.fp_influence_proxy);
    w.field_f64("latency_ms", case.latency_ms);
    w.field_str("mode", case.mode.as_str());
    w.field_f64("success_proxy", case.success_proxy);
    w.field_f64("tokens", case.tokens);
    w.finish()
}

fn encode_manifest(manifest: &Manifest) -> String {
    let mut counts = String::from("{");
    for (i, (k, v)) in manifest.counts.iter().enumerate() {
        if i > 0 {
            counts.push(',');
        }
        canon::push_json_str(&mut counts, k);
        counts.push(':');
        counts.push_str(&v.to_string());
    }
    counts.push('}');

    let mut files = String::from("{");
    for (i, (k, v)) in manifest.files.iter().enumerate() {
        if i > 0 {
            files.push(',');
        }
        canon::push_json_str(&mut files, k);
        files.push(':');
        canon::push_json_str(&mut files, v);
    }
    files.push('}');

    let mut seeds = String::from("[");
    for (i, s) in manifest.replay_seeds.iter().enumerate() {
        if i > 0 {
            seeds.push(',');
        }
        seeds.push_str(&s.to_string());
    }
    seeds.push(']');

    let mut w = ObjWriter::new();
    w.field_raw("counts", &counts);
    w.field_raw("files", &files);
    w.field_raw("replay_seeds", &seeds);
    w.field_str("scale", &manifest.scale);
    w.field_u64("seed", manifest.seed);
    w.finish()
}

/// Write every artifact plus the manifest into `dir`.
pub fn write_dataset(dataset: &Dataset, dir: &Path) -> Result<(), DatasetError> {
    fs::create_dir_all(dir)?;
    for (name, text) in encoded_files(dataset) {
        fs::write(dir.join(name), text)?;
    }
    let mut manifest_text = encode_manifest(&dataset.manifest);
    manifest_text.push('\n');
    fs::write(dir.join("manifest.json"), manifest_text)?;
    Ok(())
}

/// Generate and write in one step.
pub fn generate_artifacts(cfg: &GeneratorConfig, dir: &Path) -> Result<Dataset, DatasetError> {
    let dataset = generate(cfg);
    write_dataset(&dataset, dir)?;
    Ok(dataset)
}

fn load_lines<T: serde::de::DeserializeOwned>(
    dir: &Path,
    name: &'static str,
) -> Result<Vec<T>, DatasetError> {
    let text = fs::read_to_string(dir.join(name))?;
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(line).map_err(|e| DatasetError::Malformed {
                file: name,
                line: idx + 1,
                message: e.to_string(),
            })?,
        );
    }
    Ok(out)
}

/// Load a dataset directory written by [`write_dataset`].
pub fn load_dataset(dir: &Path) -> Result<Dataset, DatasetError> {
    let bank = load_bank(&dir.join("memory_bank.jsonl"))?;
    let queries: Vec<QueryCase> = load_lines(dir, "queries.jsonl")?;
    let paraphrases: Vec<QueryCase> = load_lines(dir, "paraphrases.jsonl")?;
    let hard_negatives: Vec<HardNegativeCase> = load_lines(dir, "hard_negatives.jsonl")?;
    let replay_events: Vec<ReplayEvent> = load_lines(dir, "replay_events.jsonl")?;
    let context_budget: Vec<ContextBudgetCase> = load_lines(dir, "context_budget.jsonl")?;
    let manifest_text = fs::read_to_string(dir.join("manifest.json"))?;
    let manifest: Manifest =
        serde_json::from_str(&manifest_text).map_err(|e| DatasetError::Malformed {
            file: "manifest.json",
            line: 1,
            message: e.to_string(),
        })?;
    Ok(Dataset {
        bank,
        queries,
        paraphrases,
        hard_negatives,
        replay_events,
        context_budget,
        manifest,
    })
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

/// Gate used by the abstention-capable static baseline; hard-negative top
/// scores must stay below it.
pub const STATIC_INJECTION_GATE: f64 = 0.55;

/// Check every dataset invariant; empty means valid.
pub fn validate_dataset(dataset: &Dataset) -> Vec<DatasetViolation> {
    let mut violations = Vec::new();

    let expected_events = SMOKE_EVENTS_PER_SEED * dataset.manifest.replay_seeds.len();
    let cardinalities = [
        ("queries.jsonl", SMOKE_QUERIES, dataset.queries.len()),
        ("paraphrases.jsonl", SMOKE_PARAPHRASES, dataset.paraphrases.len()),
        ("hard_negatives.jsonl", SMOKE_HARD_NEGATIVES, dataset.hard_negatives.len()),
        ("replay_events.jsonl", expected_events, dataset.replay_events.len()),
        ("memory_bank.jsonl", SMOKE_RECORDS, dataset.bank.records.len()),
        ("bank variants", SMOKE_VARIANTS, dataset.bank.variant_count()),
        ("context_budget.jsonl", SMOKE_BUDGET_CASES, dataset.context_budget.len()),
    ];
    for (artifact, expected, actual) in cardinalities {
        if expected != actual {
            violations.push(DatasetViolation::CardinalityMismatch { artifact, expected, actual });
        }
    }

    for v in validate_bank(&dataset.bank) {
        violations.push(DatasetViolation::BankViolation(v.to_string()));
    }

    let by_pattern = dataset.bank.by_pattern();
    for case in dataset.queries.iter().chain(dataset.paraphrases.iter()) {
        match by_pattern.get(case.gold_pattern_id.as_str()) {
            None => violations.push(DatasetViolation::DanglingReference {
                id: case.query_id.clone(),
                referenced: case.gold_pattern_id.clone(),
            }),
            Some(record) => {
                if record.pattern.family != case.family {
                    violations.push(DatasetViolation::BadLabel {
                        id: case.query_id.clone(),
                        message: "family does not match gold record".to_string(),
                    });
                }
            }
        }
    }

    // Canonical saturation: the gold pattern ranks first under standard
    // retrieval for every canonical query.
    for case in &dataset.queries {
        let profile = normalize(&case.raw);
        let candidates = retrieve(&profile, &dataset.bank, RetrievalMode::default());
        match candidates.first() {
            Some(top) if top.record_ref == case.gold_pattern_id => {}
            Some(top) => violations.push(DatasetViolation::SaturationFailure {
                query_id: case.query_id.clone(),
                top: top.record_ref.clone(),
            }),
            None => violations.push(DatasetViolation::SaturationFailure {
                query_id: case.query_id.clone(),
                top: "<empty>".to_string(),
            }),
        }
    }

    for case in &dataset.hard_negatives {
        if !by_pattern.contains_key(case.decoy_pattern_id.as_str()) {
            violations.push(DatasetViolation::DanglingReference {
                id: case.case_id.clone(),
                referenced: case.decoy_pattern_id.clone(),
            });
            continue;
        }
        if case.label != "must_not_inject" {
            violations.push(DatasetViolation::BadLabel {
                id: case.case_id.clone(),
                message: format!("unexpected label {}", case.label),
            });
        }
        let decoy_family = by_pattern[case.decoy_pattern_id.as_str()].pattern.family;
        if decoy_family == case.confusable_with {
            violations.push(DatasetViolation::BadLabel {
                id: case.case_id.clone(),
                message: "decoy belongs to the case's own family".to_string(),
            });
        }
        let profile = normalize(&case.raw);
        let all = retrieve(
            &profile,
            &dataset.bank,
            RetrievalMode::standard(dataset.bank.variant_count().max(1)),
        );
        if !all.iter().any(|c| c.component_scores.lexical >= 0.55) {
            violations.push(DatasetViolation::WeakDecoy { case_id: case.case_id.clone() });
        }
        if let Some(top) = all.first() {
            if top.score >= STATIC_INJECTION_GATE {
                violations.push(DatasetViolation::UngatedHardNegative {
                    case_id: case.case_id.clone(),
                    top1_score: top.score,
                });
            }
        }
    }

    let query_ids: BTreeSet<&str> = dataset.queries.iter().map(|q| q.query_id.as_str()).collect();
    let cfg = RewardConfig::default();
    for event in &dataset.replay_events {
        if !query_ids.contains(event.query_id.as_str()) {
            violations.push(DatasetViolation::DanglingReference {
                id: event.event_id.clone(),
                referenced: event.query_id.clone(),
            });
        }
        if event.outcome_per_action.len() != Action::ALL.len() {
            violations.push(DatasetViolation::BadLabel {
                id: event.event_id.clone(),
                message: "outcome map does not cover every action".to_string(),
            });
            continue;
        }
        for (action, outcome) in &event.outcome_per_action {
            if !outcome.flags_valid() {
                violations.push(DatasetViolation::BadLabel {
                    id: event.event_id.clone(),
                    message: format!("outcome flags for {action} not mutually exclusive"),
                });
            }
        }
        let oracle_reward = compute_reward(&event.outcome_per_action[&event.oracle_action], &cfg);
        let max_reward = event
            .outcome_per_action
            .values()
            .map(|o| compute_reward(o, &cfg))
            .fold(f64::NEG_INFINITY, f64::max);
        if oracle_reward < max_reward {
            violations.push(DatasetViolation::BadLabel {
                id: event.event_id.clone(),
                message: "oracle action is not reward-optimal".to_string(),
            });
        }
    }

    for (i, case) in dataset.context_budget.iter().enumerate() {
        if case.mode != BudgetMode::ALL[i % BudgetMode::ALL.len()] {
            violations.push(DatasetViolation::BadLabel {
                id: case.case_id.clone(),
                message: "budget modes out of cycle order".to_string(),
            });
        }
        if case.mode == BudgetMode::NoMemory
            && (case.tokens != 0.0 || case.latency_ms != 0.0 || case.fp_influence_proxy != 0.0)
        {
            violations.push(DatasetViolation::BadLabel {
                id: case.case_id.clone(),
                message: "no_memory case must have zero cost and zero fp influence".to_string(),
            });
        }
    }

    violations
}

/// Load a directory and validate it; IO or parse errors surface as one
/// violation instead of a panic.
pub fn validate_dataset_dir(dir: &Path) -> Vec<DatasetViolation> {
    match load_dataset(dir) {
        Ok(dataset) => validate_dataset(&dataset),
        Err(e) => vec![DatasetViolation::BadLabel {
            id: dir.display().to_string(),
            message: e.to_string(),
        }],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_deterministic() {
        let cfg = GeneratorConfig::smoke(1337);
        let a = generate(&cfg);
        let b = generate(&cfg);
        assert_eq!(a, b);
        assert_eq!(encode_manifest(&a.manifest), encode_manifest(&b.manifest));
    }

    #[test]
    fn smoke_cardinalities() {
        let dataset = generate(&GeneratorConfig::smoke(1337));
        assert_eq!(dataset.queries.len(), SMOKE_QUERIES);
        assert_eq!(dataset.paraphrases.len(), SMOKE_PARAPHRASES);
        assert_eq!(dataset.hard_negatives.len(), SMOKE_HARD_NEGATIVES);
        assert_eq!(dataset.replay_events.len(), 2 * SMOKE_EVENTS_PER_SEED);
        assert_eq!(dataset.bank.records.len(), SMOKE_RECORDS);
        assert_eq!(dataset.bank.variant_count(), SMOKE_VARIANTS);
        assert_eq!(dataset.context_budget.len(), SMOKE_BUDGET_CASES);
    }

    #[test]
    fn generated_dataset_validates() {
        let dataset = generate(&GeneratorConfig::smoke(1337));
        let violations = validate_dataset(&dataset);
        assert!(violations.is_empty(), "{violations:?}");
    }

    #[test]
    fn generated_dataset_validates_second_seed() {
        let dataset = generate(&GeneratorConfig::smoke(2024));
        let violations = validate_dataset(&dataset);
        assert!(violations.is_empty(), "{violations:?}");
    }

    #[test]
    fn round_trips_through_directory() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = GeneratorConfig::smoke(1337);
        let written = generate_artifacts(&cfg, dir.path()).unwrap();
        let loaded = load_dataset(dir.path()).unwrap();
        assert_eq!(written, loaded);
    }

    #[test]
    fn two_writes_are_byte_identical() {
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        let cfg = GeneratorConfig::smoke(1337);
        generate_artifacts(&cfg, dir_a.path()).unwrap();
        generate_artifacts(&cfg, dir_b.path()).unwrap();
        for name in [
            "memory_bank.jsonl",
            "queries.jsonl",
            "paraphrases.jsonl",
            "hard_negatives.jsonl",
            "replay_events.jsonl",
            "context_budget.jsonl",
            "manifest.json",
        ] {
            let a = fs::read(dir_a.path().join(name)).unwrap();
            let b = fs::read(dir_b.path().join(name)).unwrap();
            assert_eq!(a, b, "file {name} differs between runs");
        }
    }

    #[test]
    fn deleting_a_paraphrase_is_caught() {
        let mut dataset = generate(&GeneratorConfig::smoke(1337));
        dataset.paraphrases.pop();
        let violations = validate_dataset(&dataset);
        assert!(violations
            .iter()
            .any(|v| matches!(v, DatasetViolation::CardinalityMismatch { .. })));
    }

    #[test]
    fn corrupting_gold_reference_is_caught() {
        let mut dataset = generate(&GeneratorConfig::smoke(1337));
        dataset.queries[0].gold_pattern_id = "pat99".to_string();
        let violations = validate_dataset(&dataset);
        assert!(violations
            .iter()
            .any(|v| matches!(v, DatasetViolation::DanglingReference { .. })));
    }

    #[test]
    fn event_type_mix_is_balanced() {
        // The per-family schedule with 40 events yields exactly 8 events of
        // each outcome kind, for any seed.
        for seed in [1337_u64, 2024, 7] {
            let events = build_replay_events(seed);
            let mut verified = 0;
            let mut fp = 0;
            for event in &events {
                let top1 = &event.outcome_per_action[&Action::Top1Resolution];
                if top1.verified {
                    verified += 1;
                }
                if top1.false_positive {
                    fp += 1;
                }
            }
            assert_eq!(verified, 8, "seed {seed}");
            assert_eq!(fp, 8, "seed {seed}");
        }
    }
}
