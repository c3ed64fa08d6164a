//! The fixed 16-feature policy state built from retrieval evidence.
//!
//! Feature order is frozen and documented on [`StateVector`]; every feature
//! that feeds the contextual models is normalized into `[0, 1]` with fixed
//! caps (candidate count 10, latency 1000 ms, tokens 2000, rejections 5).
//! The distribution smoothing constant is `ε = 1e-6` and all logarithms are
//! natural.

use crate::memory::MemoryBank;
use crate::policy::Action;
use crate::query::{Candidate, QueryProfile};
use std::collections::BTreeMap;
use thiserror::Error;

/// Smoothing constant for the candidate score distribution.
pub const DISTRIBUTION_EPSILON: f64 = 1e-6;

pub const CANDIDATE_COUNT_CAP: f64 = 10.0;
pub const LATENCY_CAP_MS: f64 = 1000.0;
pub const TOKEN_CAP: f64 = 2000.0;
pub const REJECTION_CAP: f64 = 5.0;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum StateError {
    #[error("empty score list")]
    EmptyScores,
}

/// The policy state `z_t`, sixteen named scalars in fixed order:
///
/// 1. `top1_score` 2. `top2_score` 3. `score_margin` 4. `candidate_entropy`
/// 5. `candidate_count` 6. `family_confidence` 7. `entity_match_ratio`
/// 8. `command_signature_match` 9. `path_signature_match`
/// 10. `stack_signature_match` 11. `session_rejection_count`
/// 12. `historical_acceptance_rate` 13. `historical_false_positive_rate`
/// 14. `estimated_latency_ms` 15. `estimated_token_cost`
/// 16. `token_budget_remaining`
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StateVector {
    pub top1_score: f64,
    pub top2_score: f64,
    pub score_margin: f64,
    pub candidate_entropy: f64,
    pub candidate_count: f64,
    pub family_confidence: f64,
    pub entity_match_ratio: f64,
    pub command_signature_match: f64,
    pub path_signature_match: f64,
    pub stack_signature_match: f64,
    pub session_rejection_count: f64,
    pub historical_acceptance_rate: f64,
    pub historical_false_positive_rate: f64,
    pub estimated_latency_ms: f64,
    pub estimated_token_cost: f64,
    pub token_budget_remaining: f64,
}

pub const STATE_DIM: usize = 16;

pub const FEATURE_NAMES: [&str; STATE_DIM] = [
    "top1_score",
    "top2_score",
    "score_margin",
    "candidate_entropy",
    "candidate_count",
    "family_confidence",
    "entity_match_ratio",
    "command_signature_match",
    "path_signature_match",
    "stack_signature_match",
    "session_rejection_count",
    "historical_acceptance_rate",
    "historical_false_positive_rate",
    "estimated_latency_ms",
    "estimated_token_cost",
    "token_budget_remaining",
];

impl StateVector {
    /// Features in their fixed order.
    pub fn as_array(&self) -> [f64; STATE_DIM] {
        [
            self.top1_score,
            self.top2_score,
            self.score_margin,
            self.candidate_entropy,
            self.candidate_count,
            self.family_confidence,
            self.entity_match_ratio,
            self.command_signature_match,
            self.path_signature_match,
            self.stack_signature_match,
            self.session_rejection_count,
            self.historical_acceptance_rate,
            self.historical_false_positive_rate,
            self.estimated_latency_ms,
            self.estimated_token_cost,
            self.token_budget_remaining,
        ]
    }

    pub fn from_array(values: [f64; STATE_DIM]) -> Self {
        Self {
            top1_score: values[0],
            top2_score: values[1],
            score_margin: values[2],
            candidate_entropy: values[3],
            candidate_count: values[4],
            family_confidence: values[5],
            entity_match_ratio: values[6],
            command_signature_match: values[7],
            path_signature_match: values[8],
            stack_signature_match: values[9],
            session_rejection_count: values[10],
            historical_acceptance_rate: values[11],
            historical_false_positive_rate: values[12],
            estimated_latency_ms: values[13],
            estimated_token_cost: values[14],
            token_budget_remaining: values[15],
        }
    }

    /// Canonical ordered serialization used in audit logs.
    pub fn to_canonical_json(&self) -> String {
        let mut out = String::from("[");
        for (i, v) in self.as_array().iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            out.push_str(&crate::canon::fmt_f64(*v));
        }
        out.push(']');
        out
    }
}

/// Estimated payload latency and token cost per action, plus the remaining
/// context budget as a fraction.
#[derive(Debug, Clone, PartialEq)]
pub struct BudgetState {
    pub token_budget_remaining: f64,
    pub payload: BTreeMap<Action, (f64, f64)>,
}

impl BudgetState {
    /// Full budget with the standard per-action payload estimates.
    pub fn full() -> Self {
        Self {
            token_budget_remaining: 1.0,
            payload: Action::ALL
                .iter()
                .map(|a| (*a, (a.payload_latency_ms(), a.payload_tokens())))
                .collect(),
        }
    }

    pub fn with_budget(mut self, fraction: f64) -> Self {
        self.token_budget_remaining = fraction;
        self
    }

    /// The injection action with the smallest estimated token payload.
    fn cheapest_injection(&self) -> Option<(f64, f64)> {
        self.payload
            .iter()
            .filter(|(a, _)| a.injects_memory())
            .min_by(|(a, (_, ta)), (b, (_, tb))| {
                ta.partial_cmp(tb)
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then_with(|| a.cmp(b))
            })
            .map(|(_, v)| *v)
    }
}

impl Default for BudgetState {
    fn default() -> Self {
        Self::full()
    }
}

/// Smoothed candidate distribution `π_i = (s_i + ε) / Σ_j (s_j + ε)`.
pub fn candidate_distribution(scores: &[f64], epsilon: f64) -> Result<Vec<f64>, StateError> {
    if scores.is_empty() {
        return Err(StateError::EmptyScores);
    }
    debug_assert!(epsilon > 0.0);
    let total: f64 = scores.iter().map(|s| s + epsilon).sum();
    Ok(scores.iter().map(|s| (s + epsilon) / total).collect())
}

/// Shannon entropy in nats, with `0 · ln 0 ≡ 0`.
pub fn entropy(distribution: &[f64]) -> f64 {
    distribution
        .iter()
        .filter(|p| **p > 0.0)
        .map(|p| -p * p.ln())
        .sum()
}

/// Entropy normalized by `ln(max(k, 2))`, the form used as feature 4.
pub fn normalized_entropy(distribution: &[f64]) -> f64 {
    let k = distribution.len().max(2);
    entropy(distribution) / (k as f64).ln()
}

/// Top-two score margin; a single candidate's margin is its own score.
pub fn margin(sorted_scores: &[f64]) -> Result<f64, StateError> {
    match sorted_scores {
        [] => Err(StateError::EmptyScores),
        [only] => Ok(*only),
        [first, second, ..] => Ok(first - second),
    }
}

/// Build the 16-feature state `z_t = ψ(q_t, C_t)`.
///
/// Candidates must already be sorted by descending score (retrieval output
/// order). The bank parameter is kept for callers that derive additional
/// context; the historical rates come from the top candidate's record.
pub fn build_state(
    profile: &QueryProfile,
    candidates: &[Candidate],
    bank: &MemoryBank,
    budget: &BudgetState,
) -> StateVector {
    let scores: Vec<f64> = candidates.iter().map(|c| c.score).collect();

    let (top1, top2, score_margin, candidate_entropy) = if scores.is_empty() {
        (0.0, 0.0, 0.0, 0.0)
    } else {
        let pi = candidate_distribution(&scores, DISTRIBUTION_EPSILON)
            .expect("non-empty scores");
        (
            scores[0],
            scores.get(1).copied().unwrap_or(0.0),
            margin(&scores).expect("non-empty scores"),
            normalized_entropy(&pi),
        )
    };

    let top = candidates.first();
    let components = top.map(|c| c.component_scores).unwrap_or_default();
    let (acceptance, fp_rate) = top
        .and_then(|c| bank.record(&c.record_ref))
        .map(|r| (r.historical_acceptance_rate, r.historical_false_positive_rate))
        .unwrap_or((0.0, 0.0));

    let (latency_ms, tokens) = budget.cheapest_injection().unwrap_or((0.0, 0.0));

    StateVector {
        top1_score: top1,
        top2_score: top2,
        score_margin,
        candidate_entropy,
        candidate_count: (candidates.len() as f64).min(CANDIDATE_COUNT_CAP) / CANDIDATE_COUNT_CAP,
        family_confidence: components.family,
        entity_match_ratio: components.entity,
        command_signature_match: components.command,
        path_signature_match: components.path,
        stack_signature_match: components.stack,
        session_rejection_count: (profile.session_rejections as f64).min(REJECTION_CAP)
            / REJECTION_CAP,
        historical_acceptance_rate: acceptance,
        historical_false_positive_rate: fp_rate,
        estimated_latency_ms: latency_ms.min(LATENCY_CAP_MS) / LATENCY_CAP_MS,
        estimated_token_cost: tokens.min(TOKEN_CAP) / TOKEN_CAP,
        token_budget_remaining: budget.token_budget_remaining,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::query::ChannelScores;

    #[test]
    fn uniform_distribution_from_equal_scores() {
        let pi = candidate_distribution(&[1.0, 1.0, 1.0], 1e-6).unwrap();
        for p in &pi {
            assert!((p - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn single_score_distribution_is_one() {
        let pi = candidate_distribution(&[1.0], 1e-3).unwrap();
        assert_eq!(pi, vec![1.0]);
    }

    #[test]
    fn three_one_distribution() {
        let pi = candidate_distribution(&[3.0, 1.0], 1e-6).unwrap();
        assert!((pi[0] - 0.75).abs() < 1e-5);
        assert!((pi[1] - 0.25).abs() < 1e-5);
    }

    #[test]
    fn empty_scores_error() {
        assert_eq!(candidate_distribution(&[], 1e-6), Err(StateError::EmptyScores));
        assert_eq!(margin(&[]), Err(StateError::EmptyScores));
    }

    #[test]
    fn entropy_of_point_mass_is_zero() {
        assert_eq!(entropy(&[1.0]), 0.0);
    }

    #[test]
    fn entropy_of_uniform_three_is_ln3() {
        let h = entropy(&[1.0 / 3.0; 3]);
        assert!((h - 3.0_f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn entropy_of_three_one_split() {
        let h = entropy(&[0.75, 0.25]);
        assert!((h - 0.5623).abs() < 1e-4);
    }

    #[test]
    fn margins() {
        assert_eq!(margin(&[0.9, 0.9]).unwrap(), 0.0);
        assert_eq!(margin(&[0.8]).unwrap(), 0.8);
        assert!((margin(&[0.9, 0.3]).unwrap() - 0.6).abs() < 1e-12);
    }

    fn candidate(score: f64, components: ChannelScores) -> Candidate {
        Candidate {
            record_ref: "pat_x".to_string(),
            variant_ref: "var_x".to_string(),
            score,
            component_scores: components,
        }
    }

    #[test]
    fn empty_candidates_zero_features() {
        let z = build_state(
            &QueryProfile::default(),
            &[],
            &MemoryBank::default(),
            &BudgetState::full(),
        );
        let arr = z.as_array();
        for v in &arr[..10] {
            assert_eq!(*v, 0.0);
        }
        assert_eq!(z.candidate_count, 0.0);
        assert_eq!(z.token_budget_remaining, 1.0);
    }

    #[test]
    fn single_perfect_candidate_state() {
        let components = ChannelScores {
            lexical: 1.0,
            family: 1.0,
            entity: 1.0,
            command: 1.0,
            path: 1.0,
            stack: 1.0,
            history: 1.0,
        };
        let z = build_state(
            &QueryProfile::default(),
            &[candidate(1.0, components)],
            &MemoryBank::default(),
            &BudgetState::full(),
        );
        assert_eq!(z.top1_score, 1.0);
        assert_eq!(z.top2_score, 0.0);
        assert_eq!(z.score_margin, 1.0);
        assert_eq!(z.candidate_entropy, 0.0);
        assert!((z.candidate_count - 0.1).abs() < 1e-12);
        assert_eq!(z.family_confidence, 1.0);
        assert_eq!(z.entity_match_ratio, 1.0);
        assert_eq!(z.command_signature_match, 1.0);
        assert_eq!(z.path_signature_match, 1.0);
        assert_eq!(z.stack_signature_match, 1.0);
        assert_eq!(z.session_rejection_count, 0.0);
        assert_eq!(z.token_budget_remaining, 1.0);
    }

    #[test]
    fn build_state_is_pure() {
        let profile = QueryProfile {
            session_rejections: 3,
            ..Default::default()
        };
        let cands = vec![candidate(0.7, ChannelScores::default())];
        let a = build_state(&profile, &cands, &MemoryBank::default(), &BudgetState::full());
        let b = build_state(&profile, &cands, &MemoryBank::default(), &BudgetState::full());
        assert_eq!(a.to_canonical_json(), b.to_canonical_json());
        assert!((a.session_rejection_count - 0.6).abs() < 1e-12);
    }

    #[test]
    fn dimension_is_sixteen() {
        assert_eq!(StateVector::default().as_array().len(), 16);
        assert_eq!(FEATURE_NAMES.len(), 16);
    }
}
