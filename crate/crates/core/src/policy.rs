//! Action space, reward, risk-sensitive scoring, safety overrides, and the
//! decide/update loop.
//!
//! The reward decomposes per-outcome bonuses and penalties with the design
//! invariant `γ > α > β`: a false-positive injection costs strictly more
//! than a successful reuse earns. Action selection maximizes a score that
//! combines empirical quality, adoption and false-positive evidence,
//! exploration terms, and lightweight per-action linear reward/risk models
//! over the 16-feature state; a post-argmax safety override can replace an
//! unsafe injection with `abstain` or `no_memory`.

use crate::canon::{self, ObjWriter};
use crate::query::Candidate;
use crate::state::{StateVector, STATE_DIM};
use std::collections::BTreeMap;
use thiserror::Error;

/// The seven memory-control actions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    NoMemory,
    Top1Resolution,
    Top3Summary,
    HighPrecisionRetrieval,
    HighRecallRetrieval,
    Abstain,
    AskFeedback,
}

impl Action {
    /// Fixed enumeration order.
    pub const ALL: [Action; 7] = [
        Action::NoMemory,
        Action::Top1Resolution,
        Action::Top3Summary,
        Action::HighPrecisionRetrieval,
        Action::HighRecallRetrieval,
        Action::Abstain,
        Action::AskFeedback,
    ];

    /// Argmax tie-break order: non-injection actions first, each group in
    /// enumeration order.
    pub const TIE_BREAK: [Action; 7] = [
        Action::NoMemory,
        Action::Abstain,
        Action::AskFeedback,
        Action::Top1Resolution,
        Action::Top3Summary,
        Action::HighPrecisionRetrieval,
        Action::HighRecallRetrieval,
    ];

    /// Whether this action places memory content into the agent context.
    pub fn injects_memory(&self) -> bool {
        matches!(
            self,
            Action::Top1Resolution
                | Action::Top3Summary
                | Action::HighPrecisionRetrieval
                | Action::HighRecallRetrieval
        )
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Action::NoMemory => "no_memory",
            Action::Top1Resolution => "top1_resolution",
            Action::Top3Summary => "top3_summary",
            Action::HighPrecisionRetrieval => "high_precision_retrieval",
            Action::HighRecallRetrieval => "high_recall_retrieval",
            Action::Abstain => "abstain",
            Action::AskFeedback => "ask_feedback",
        }
    }

    pub fn index(&self) -> usize {
        Action::ALL.iter().position(|a| a == self).unwrap()
    }

    /// Normalized payload cost `C(a)`, ordered by payload size.
    pub fn cost(&self) -> f64 {
        match self {
            Action::NoMemory => 0.0,
            Action::Abstain => 0.02,
            Action::AskFeedback => 0.05,
            Action::Top1Resolution => 0.10,
            Action::HighPrecisionRetrieval => 0.10,
            Action::HighRecallRetrieval => 0.25,
            Action::Top3Summary => 0.30,
        }
    }

    /// Estimated payload latency in milliseconds.
    pub fn payload_latency_ms(&self) -> f64 {
        match self {
            Action::NoMemory => 0.0,
            Action::Abstain => 0.0,
            Action::AskFeedback => 5.0,
            Action::HighPrecisionRetrieval => 12.0,
            Action::Top1Resolution => 16.0,
            Action::HighRecallRetrieval => 40.0,
            Action::Top3Summary => 54.0,
        }
    }

    /// Estimated payload token cost.
    pub fn payload_tokens(&self) -> f64 {
        match self {
            Action::NoMemory => 0.0,
            Action::Abstain => 0.0,
            Action::AskFeedback => 10.0,
            Action::HighPrecisionRetrieval => 25.0,
            Action::Top1Resolution => 29.0,
            Action::HighRecallRetrieval => 120.0,
            Action::Top3Summary => 157.0,
        }
    }
}

impl std::fmt::Display for Action {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Action {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Action::ALL
            .iter()
            .find(|a| a.as_str() == s)
            .copied()
            .ok_or_else(|| format!("unknown action: {s}"))
    }
}

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("reward ordering violated: need gamma > alpha > beta, got gamma={gamma} alpha={alpha} beta={beta}")]
    InvalidRewardConfig { alpha: f64, beta: f64, gamma: f64 },
    #[error("probability out of range: {name} = {value}")]
    ProbabilityOutOfRange { name: &'static str, value: f64 },
}

/// Reward coefficients `(α, β, κ, γ, δ, η, λ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardConfig {
    pub alpha: f64,
    pub beta: f64,
    pub kappa: f64,
    pub gamma: f64,
    pub delta: f64,
    pub eta: f64,
    pub lambda: f64,
}

impl RewardConfig {
    /// Construct a config, enforcing the `γ > α > β` design invariant.
    pub fn new(
        alpha: f64,
        beta: f64,
        kappa: f64,
        gamma: f64,
        delta: f64,
        eta: f64,
        lambda: f64,
    ) -> Result<Self, PolicyError> {
        if !(gamma > alpha && alpha > beta) {
            return Err(PolicyError::InvalidRewardConfig { alpha, beta, gamma });
        }
        Ok(Self { alpha, beta, kappa, gamma, delta, eta, lambda })
    }
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            alpha: 2.0,
            beta: 1.0,
            kappa: 0.5,
            gamma: 4.0,
            delta: 1.0,
            eta: 0.001,
            lambda: 0.01,
        }
    }
}

/// One observed feedback outcome. At most one of the five flags is true.
#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Deserialize)]
pub struct Outcome {
    pub verified: bool,
    pub accepted: bool,
    pub correct_abstain: bool,
    pub false_positive: bool,
    pub rejected: bool,
    pub latency_ms: f64,
    pub token_cost: f64,
}

impl Outcome {
    pub fn verified(latency_ms: f64, token_cost: f64) -> Self {
        Self { verified: true, latency_ms, token_cost, ..Default::default() }
    }

    pub fn accepted(latency_ms: f64, token_cost: f64) -> Self {
        Self { accepted: true, latency_ms, token_cost, ..Default::default() }
    }

    pub fn correct_abstain(latency_ms: f64, token_cost: f64) -> Self {
        Self { correct_abstain: true, latency_ms, token_cost, ..Default::default() }
    }

    pub fn false_positive(latency_ms: f64, token_cost: f64) -> Self {
        Self { false_positive: true, latency_ms, token_cost, ..Default::default() }
    }

    pub fn rejected(latency_ms: f64, token_cost: f64) -> Self {
        Self { rejected: true, latency_ms, token_cost, ..Default::default() }
    }

    /// Neutral outcome: no flag set, only latency/token costs.
    pub fn none(latency_ms: f64, token_cost: f64) -> Self {
        Self { latency_ms, token_cost, ..Default::default() }
    }

    pub fn flags_valid(&self) -> bool {
        let set = [
            self.verified,
            self.accepted,
            self.correct_abstain,
            self.false_positive,
            self.rejected,
        ]
        .iter()
        .filter(|f| **f)
        .count();
        set <= 1 && self.latency_ms >= 0.0 && self.token_cost >= 0.0
    }
}

/// Evaluate the decomposed reward.
pub fn compute_reward(outcome: &Outcome, cfg: &RewardConfig) -> f64 {
    let ind = |b: bool| if b { 1.0 } else { 0.0 };
    cfg.alpha * ind(outcome.verified) + cfg.beta * ind(outcome.accepted)
        + cfg.kappa * ind(outcome.correct_abstain)
        - cfg.gamma * ind(outcome.false_positive)
        - cfg.delta * ind(outcome.rejected)
        - cfg.eta * outcome.latency_ms
        - cfg.lambda * outcome.token_cost
}

/// Risk-regularized action score `S = R̂ − μ·p̂_fp − λ_c·ĉ` with
/// caller-supplied estimates. Adding the constants `μ·ε + λ_c·b` to every
/// action's score leaves the argmax unchanged.
pub fn lagrangian_score(
    expected_reward: f64,
    fp_probability: f64,
    cost: f64,
    mu: f64,
    lambda_c: f64,
) -> f64 {
    debug_assert!(mu >= 0.0 && lambda_c >= 0.0);
    expected_reward - mu * fp_probability - lambda_c * cost
}

/// Per-action feedback statistics.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ActionStats {
    /// Feedback count `N(a)`.
    pub n: u64,
    /// Running mean reward `Q(a)`.
    pub q: f64,
    /// Accepted-or-verified count.
    pub n_adopt: u64,
    /// False-positive evidence count `N^fp(a)`.
    pub n_fp: u64,
}

impl ActionStats {
    /// Adoption fraction `A(a)`.
    pub fn adoption(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.n_adopt as f64 / self.n as f64
        }
    }

    /// False-positive fraction `FP(a)`.
    pub fn fp_rate(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.n_fp as f64 / self.n as f64
        }
    }
}

/// One linear model with bias over the 16-feature state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearModel {
    pub weights: [f64; STATE_DIM],
    pub bias: f64,
}

impl Default for LinearModel {
    fn default() -> Self {
        Self { weights: [0.0; STATE_DIM], bias: 0.0 }
    }
}

impl LinearModel {
    pub fn raw(&self, z: &StateVector) -> f64 {
        let x = z.as_array();
        let mut acc = self.bias;
        for i in 0..STATE_DIM {
            acc += self.weights[i] * x[i];
        }
        acc
    }

    /// Output clamped to `[-1, 1]` (used by the reward/risk models).
    pub fn clamped(&self, z: &StateVector) -> f64 {
        self.raw(z).clamp(-1.0, 1.0)
    }

    /// Output through the logistic function (used by the fp-context model).
    pub fn logistic(&self, z: &StateVector) -> f64 {
        1.0 / (1.0 + (-self.raw(z)).exp())
    }

    /// One squared-error gradient step on the raw linear output toward
    /// `target`: `w ← w − lr·(pred − target)·z`, `b ← b − lr·(pred − target)`.
    pub fn sgd_step(&mut self, z: &StateVector, target: f64, learning_rate: f64) {
        let residual = self.raw(z) - target;
        let x = z.as_array();
        for i in 0..STATE_DIM {
            self.weights[i] -= learning_rate * residual * x[i];
        }
        self.bias -= learning_rate * residual;
    }

    /// One logistic-regression gradient step toward a `{0,1}` label:
    /// `w ← w − lr·(σ(w·z + b) − y)·z`.
    pub fn logistic_step(&mut self, z: &StateVector, label: f64, learning_rate: f64) {
        let residual = self.logistic(z) - label;
        let x = z.as_array();
        for i in 0..STATE_DIM {
            self.weights[i] -= learning_rate * residual * x[i];
        }
        self.bias -= learning_rate * residual;
    }
}

/// Per-action contextual reward and risk models plus the shared
/// false-positive context model.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextModels {
    pub reward: [LinearModel; 7],
    pub risk: [LinearModel; 7],
    pub fp_context: LinearModel,
    pub learning_rate: f64,
}

impl Default for ContextModels {
    fn default() -> Self {
        Self {
            reward: [LinearModel::default(); 7],
            risk: [LinearModel::default(); 7],
            fp_context: LinearModel::default(),
            learning_rate: 0.05,
        }
    }
}

/// Score-shaping multipliers `(ρ, μ, λ_c, w_u, w_r)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Knobs {
    pub rho: f64,
    pub mu: f64,
    pub lambda_c: f64,
    pub w_u: f64,
    pub w_r: f64,
}

impl Default for Knobs {
    fn default() -> Self {
        Self { rho: 0.5, mu: 2.0, lambda_c: 0.1, w_u: 0.5, w_r: 0.5 }
    }
}

/// Controller behavior switches used by the ablation variants. Everything
/// is enabled by default.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ControllerOptions {
    /// Keep abstain/ask_feedback available and allow overrides to redirect.
    pub abstention_enabled: bool,
    /// Include the contextual g/h/p terms in the score.
    pub contextual_enabled: bool,
    /// Apply μ/w_r risk terms and safety overrides.
    pub risk_enabled: bool,
}

impl Default for ControllerOptions {
    fn default() -> Self {
        Self { abstention_enabled: true, contextual_enabled: true, risk_enabled: true }
    }
}

/// All learnable controller state `Θ`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyState {
    pub stats: [ActionStats; 7],
    pub models: ContextModels,
    pub total_feedback: u64,
    pub session_rejections: BTreeMap<String, u32>,
    pub cost_table: [f64; 7],
    pub knobs: Knobs,
    pub reward_config: RewardConfig,
    pub options: ControllerOptions,
}

impl PolicyState {
    pub fn new(reward_config: RewardConfig) -> Self {
        let mut cost_table = [0.0; 7];
        for action in Action::ALL {
            cost_table[action.index()] = action.cost();
        }
        Self {
            stats: [ActionStats::default(); 7],
            models: ContextModels::default(),
            total_feedback: 0,
            session_rejections: BTreeMap::new(),
            cost_table,
            knobs: Knobs::default(),
            reward_config,
            options: ControllerOptions::default(),
        }
    }

    pub fn with_options(mut self, options: ControllerOptions) -> Self {
        self.options = options;
        self
    }

    pub fn stats_for(&self, action: Action) -> &ActionStats {
        &self.stats[action.index()]
    }
}

impl Default for PolicyState {
    fn default() -> Self {
        Self::new(RewardConfig::default())
    }
}

/// One auditable decision.
#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub chosen: Action,
    pub scores: BTreeMap<Action, f64>,
    pub overridden: bool,
    pub override_reason: Option<String>,
    pub state_snapshot: StateVector,
}

impl Decision {
    /// Canonical single-line audit record: state snapshot, all action
    /// scores, chosen action, and override reason.
    pub fn to_audit_line(&self) -> String {
        let mut scores = String::from("{");
        for (i, (action, score)) in self.scores.iter().enumerate() {
            if i > 0 {
                scores.push(',');
            }
            canon::push_json_str(&mut scores, action.as_str());
            scores.push(':');
            scores.push_str(&canon::fmt_f64(*score));
        }
        scores.push('}');

        let mut w = ObjWriter::new();
        w.field_str("chosen", self.chosen.as_str());
        w.field_str(
            "override_reason",
            self.override_reason.as_deref().unwrap_or(""),
        );
        w.field_bool("overridden", self.overridden);
        w.field_raw("scores", &scores);
        w.field_raw("state", &self.state_snapshot.to_canonical_json());
        w.finish()
    }
}

/// Actions legal for the current candidate set.
///
/// Non-injection actions are always available; injections require at least
/// one candidate, and `top3_summary` at least two.
pub fn available_actions(candidates: &[Candidate]) -> Vec<Action> {
    available_actions_with(candidates, &ControllerOptions::default())
}

pub fn available_actions_with(
    candidates: &[Candidate],
    options: &ControllerOptions,
) -> Vec<Action> {
    let mut actions = Vec::with_capacity(7);
    if options.abstention_enabled {
        actions.push(Action::NoMemory);
        actions.push(Action::Abstain);
        actions.push(Action::AskFeedback);
    } else if candidates.is_empty() {
        // With abstention removed, proceeding without memory remains legal
        // only when there is nothing to inject.
        actions.push(Action::NoMemory);
    }
    if !candidates.is_empty() {
        actions.push(Action::Top1Resolution);
        if candidates.len() >= 2 {
            actions.push(Action::Top3Summary);
        }
        actions.push(Action::HighPrecisionRetrieval);
        actions.push(Action::HighRecallRetrieval);
    }
    actions
}

/// The full implemented action score `S_t(a)`.
pub fn full_score(action: Action, z: &StateVector, theta: &PolicyState, knobs: &Knobs) -> f64 {
    let idx = action.index();
    let stats = &theta.stats[idx];
    let n_total = theta.total_feedback as f64;
    let log_term = (n_total + 2.0).ln();

    let exploration = knobs.w_u * (log_term / (stats.n as f64 + 1.0)).sqrt();

    let mut score = stats.q + knobs.rho * stats.adoption()
        - knobs.mu * stats.fp_rate()
        - knobs.lambda_c * theta.cost_table[idx]
        + exploration;

    if theta.options.contextual_enabled {
        let fp_context = theta.models.fp_context.logistic(z);
        score -= knobs.w_r * (log_term / (stats.n_fp as f64 + 1.0)).sqrt() * fp_context;
        score += theta.models.reward[idx].clamped(z);
        score -= theta.models.risk[idx].clamped(z);
    }
    score
}

/// Override thresholds (fixed constants, each mapped to one of the
/// motivating failure modes).
pub const OVERRIDE_REJECTION_FLOOR: f64 = 0.4; // normalized; 2 raw rejections
pub const OVERRIDE_FP_RATE: f64 = 0.3;
pub const OVERRIDE_MARGIN: f64 = 0.15;
pub const OVERRIDE_SCORE_FLOOR: f64 = 0.35;

/// Post-argmax safety rule: replace an unsafe injection with `abstain` or
/// `no_memory`. Non-injection proposals pass through unchanged.
pub fn safety_override(
    z: &StateVector,
    proposed: Action,
    options: &ControllerOptions,
) -> (Action, Option<String>) {
    if !proposed.injects_memory() {
        return (proposed, None);
    }
    if !options.risk_enabled || !options.abstention_enabled {
        return (proposed, None);
    }
    if z.session_rejection_count >= OVERRIDE_REJECTION_FLOOR {
        return (
            Action::Abstain,
            Some("session_rejections_at_or_above_2".to_string()),
        );
    }
    if z.historical_false_positive_rate > OVERRIDE_FP_RATE && z.score_margin < OVERRIDE_MARGIN {
        return (
            Action::Abstain,
            Some("high_fp_history_with_ambiguous_margin".to_string()),
        );
    }
    if z.top1_score < OVERRIDE_SCORE_FLOOR {
        return (Action::NoMemory, Some("top1_score_below_floor".to_string()));
    }
    if z.estimated_token_cost > z.token_budget_remaining {
        return (Action::NoMemory, Some("token_budget_exhausted".to_string()));
    }
    (proposed, None)
}

/// Score every available action, apply the argmax with the fixed tie-break
/// order, then the safety override.
pub fn decide(z: &StateVector, candidates: &[Candidate], theta: &PolicyState) -> Decision {
    let available = available_actions_with(candidates, &theta.options);
    let mut scores = BTreeMap::new();
    let mut best: Option<(Action, f64)> = None;
    for action in Action::TIE_BREAK {
        if !available.contains(&action) {
            continue;
        }
        let s = full_score(action, z, theta, &theta.knobs);
        scores.insert(action, s);
        match best {
            Some((_, best_score)) if s <= best_score => {}
            _ => best = Some((action, s)),
        }
    }
    let proposed = best.expect("at least one action is always available").0;
    let (chosen, override_reason) = safety_override(z, proposed, &theta.options);
    Decision {
        chosen,
        scores,
        overridden: override_reason.is_some(),
        override_reason,
        state_snapshot: *z,
    }
}

impl PolicyState {
    /// Fold one observed feedback into the policy state.
    ///
    /// `reward` must be `compute_reward(outcome, cfg)` for this state's
    /// config. Q consumes the raw reward; the contextual reward model
    /// trains on the γ-normalized reward clamped to `[-1, 1]`.
    pub fn update(&mut self, action: Action, z: &StateVector, reward: f64, outcome: &Outcome) {
        debug_assert!(outcome.flags_valid());
        let idx = action.index();
        self.total_feedback += 1;
        let stats = &mut self.stats[idx];
        stats.n += 1;
        stats.q += (reward - stats.q) / stats.n as f64;
        if outcome.accepted || outcome.verified {
            stats.n_adopt += 1;
        }
        if outcome.false_positive {
            stats.n_fp += 1;
        }

        let lr = self.models.learning_rate;
        let reward_target = (reward / self.reward_config.gamma).clamp(-1.0, 1.0);
        let fp_label = if outcome.false_positive { 1.0 } else { 0.0 };
        self.models.reward[idx].sgd_step(z, reward_target, lr);
        self.models.risk[idx].sgd_step(z, fp_label, lr);
        if action.injects_memory() {
            self.models.fp_context.logistic_step(z, fp_label, lr);
        }
    }

    /// Record a session-level rejection (feeds feature 11 on later queries).
    pub fn note_session_rejection(&mut self, session_id: &str) {
        *self.session_rejections.entry(session_id.to_string()).or_insert(0) += 1;
    }

    pub fn session_rejection_count(&self, session_id: &str) -> u32 {
        self.session_rejections.get(session_id).copied().unwrap_or(0)
    }
}

/// Expected one-step rewards for an injection versus a non-injection action
/// under outcome probabilities, plus the dominance test.
///
/// `abstain_dominates` is evaluated in the boundary form
/// `γ·p_f + δ·p_r + κ·p_c > α·p_v + β·p_a`, which is algebraically the same
/// comparison as `E_abstain > E_inject`.
pub fn expected_rewards(
    p_verified: f64,
    p_accepted: f64,
    p_false_positive: f64,
    p_rejected: f64,
    p_correct_abstain: f64,
    cfg: &RewardConfig,
) -> Result<(f64, f64, bool), PolicyError> {
    for (name, value) in [
        ("p_verified", p_verified),
        ("p_accepted", p_accepted),
        ("p_false_positive", p_false_positive),
        ("p_rejected", p_rejected),
        ("p_correct_abstain", p_correct_abstain),
    ] {
        if !(0.0..=1.0).contains(&value) || value.is_nan() {
            return Err(PolicyError::ProbabilityOutOfRange { name, value });
        }
    }
    let e_inject = cfg.alpha * p_verified + cfg.beta * p_accepted
        - cfg.gamma * p_false_positive
        - cfg.delta * p_rejected;
    let e_abstain = cfg.kappa * p_correct_abstain;
    let abstain_dominates = cfg.gamma * p_false_positive
        + cfg.delta * p_rejected
        + cfg.kappa * p_correct_abstain
        > cfg.alpha * p_verified + cfg.beta * p_accepted;
    Ok((e_inject, e_abstain, abstain_dominates))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::query::ChannelScores;

    fn candidates(n: usize) -> Vec<Candidate> {
        (0..n)
            .map(|i| Candidate {
                record_ref: format!("pat_{i}"),
                variant_ref: format!("var_{i}"),
                score: 0.9 - 0.1 * i as f64,
                component_scores: ChannelScores::default(),
            })
            .collect()
    }

    #[test]
    fn action_table() {
        assert_eq!(Action::ALL.len(), 7);
        let injecting: Vec<Action> = Action::ALL
            .iter()
            .copied()
            .filter(Action::injects_memory)
            .collect();
        assert_eq!(
            injecting,
            vec![
                Action::Top1Resolution,
                Action::Top3Summary,
                Action::HighPrecisionRetrieval,
                Action::HighRecallRetrieval
            ]
        );
    }

    #[test]
    fn reward_config_ordering_enforced() {
        assert!(RewardConfig::new(2.0, 1.0, 0.5, 4.0, 1.0, 0.001, 0.01).is_ok());
        assert!(RewardConfig::new(2.0, 1.0, 0.5, 2.0, 1.0, 0.001, 0.01).is_err());
        assert!(RewardConfig::new(2.0, 1.0, 0.5, 1.5, 1.0, 0.001, 0.01).is_err());
        assert!(RewardConfig::new(1.0, 1.0, 0.5, 4.0, 1.0, 0.001, 0.01).is_err());
        assert!(RewardConfig::new(0.5, 1.0, 0.5, 4.0, 1.0, 0.001, 0.01).is_err());
    }

    #[test]
    fn reward_values_for_all_flags() {
        let cfg = RewardConfig::default();
        assert_eq!(compute_reward(&Outcome::verified(0.0, 0.0), &cfg), 2.0);
        assert_eq!(compute_reward(&Outcome::accepted(0.0, 0.0), &cfg), 1.0);
        assert_eq!(compute_reward(&Outcome::correct_abstain(0.0, 0.0), &cfg), 0.5);
        assert_eq!(compute_reward(&Outcome::false_positive(0.0, 0.0), &cfg), -4.0);
        assert_eq!(compute_reward(&Outcome::rejected(0.0, 0.0), &cfg), -1.0);
        assert_eq!(
            compute_reward(&Outcome::false_positive(10.0, 100.0), &cfg),
            -5.01
        );
    }

    #[test]
    fn availability_rules() {
        let none = available_actions(&[]);
        assert_eq!(
            none,
            vec![Action::NoMemory, Action::Abstain, Action::AskFeedback]
        );
        let one = available_actions(&candidates(1));
        assert_eq!(one.len(), 6);
        assert!(!one.contains(&Action::Top3Summary));
        let three = available_actions(&candidates(3));
        assert_eq!(three.len(), 7);
    }

    #[test]
    fn lagrangian_examples() {
        assert_eq!(lagrangian_score(1.0, 0.0, 0.0, 2.0, 0.1), 1.0);
        let s = lagrangian_score(1.0, 0.5, 0.2, 2.0, 0.1);
        assert!((s - (-0.02)).abs() < 1e-12);
    }

    #[test]
    fn cold_start_full_score() {
        let mut theta = PolicyState::default();
        theta.cost_table = [0.0; 7];
        let z = StateVector::default();
        let s = full_score(Action::Top1Resolution, &z, &theta, &theta.knobs);
        let expected = 0.5 * (2.0_f64.ln()).sqrt() - 0.5 * (2.0_f64.ln()).sqrt() * 0.5;
        assert!((s - expected).abs() < 1e-12);
        assert!((s - 0.2081).abs() < 1e-4);
    }

    #[test]
    fn quality_dominates_without_exploration() {
        let mut theta = PolicyState::default();
        theta.knobs.w_u = 0.0;
        theta.knobs.w_r = 0.0;
        theta.cost_table = [0.0; 7];
        theta.options.contextual_enabled = false;
        theta.stats[Action::Top1Resolution.index()].q = 1.0;
        theta.stats[Action::Top1Resolution.index()].n = 1;
        let s = full_score(Action::Top1Resolution, &StateVector::default(), &theta, &theta.knobs);
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn score_decreases_with_fp_evidence() {
        let mut theta = PolicyState::default();
        let z = StateVector::default();
        theta.stats[Action::Top1Resolution.index()].n = 10;
        let low = full_score(Action::Top1Resolution, &z, &theta, &theta.knobs);
        theta.stats[Action::Top1Resolution.index()].n_fp = 5;
        let high = full_score(Action::Top1Resolution, &z, &theta, &theta.knobs);
        assert!(high < low);
    }

    #[test]
    fn override_passes_non_injections() {
        let options = ControllerOptions::default();
        let z = StateVector { top1_score: 0.1, ..Default::default() };
        assert_eq!(safety_override(&z, Action::Abstain, &options).0, Action::Abstain);
        assert_eq!(safety_override(&z, Action::NoMemory, &options).0, Action::NoMemory);
    }

    #[test]
    fn override_low_score_goes_no_memory() {
        let options = ControllerOptions::default();
        let z = StateVector {
            top1_score: 0.2,
            score_margin: 0.2,
            token_budget_remaining: 1.0,
            ..Default::default()
        };
        let (chosen, reason) = safety_override(&z, Action::Top1Resolution, &options);
        assert_eq!(chosen, Action::NoMemory);
        assert!(reason.unwrap().contains("floor"));
    }

    #[test]
    fn override_fp_history_with_thin_margin_abstains() {
        let options = ControllerOptions::default();
        let z = StateVector {
            top1_score: 0.5,
            score_margin: 0.05,
            historical_false_positive_rate: 0.5,
            token_budget_remaining: 1.0,
            ..Default::default()
        };
        let (chosen, _) = safety_override(&z, Action::Top1Resolution, &options);
        assert_eq!(chosen, Action::Abstain);
    }

    #[test]
    fn override_session_rejections_abstains() {
        let options = ControllerOptions::default();
        let z = StateVector {
            top1_score: 0.9,
            score_margin: 0.5,
            session_rejection_count: 0.4,
            token_budget_remaining: 1.0,
            ..Default::default()
        };
        let (chosen, _) = safety_override(&z, Action::Top1Resolution, &options);
        assert_eq!(chosen, Action::Abstain);
    }

    #[test]
    fn override_budget_exhausted_goes_no_memory() {
        let options = ControllerOptions::default();
        let z = StateVector {
            top1_score: 0.9,
            score_margin: 0.5,
            estimated_token_cost: 0.5,
            token_budget_remaining: 0.1,
            ..Default::default()
        };
        let (chosen, reason) = safety_override(&z, Action::Top1Resolution, &options);
        assert_eq!(chosen, Action::NoMemory);
        assert!(reason.unwrap().contains("budget"));
    }

    #[test]
    fn decide_without_candidates_stays_non_injection() {
        let theta = PolicyState::default();
        let decision = decide(&StateVector::default(), &[], &theta);
        assert!(!decision.chosen.injects_memory());
        assert!(!decision.overridden);
        assert_eq!(decision.scores.len(), 3);
    }

    #[test]
    fn decide_exploits_injected_quality() {
        let mut theta = PolicyState::default();
        theta.stats[Action::Top1Resolution.index()] = ActionStats {
            n: 10,
            q: 10.0,
            n_adopt: 10,
            n_fp: 0,
        };
        let z = StateVector {
            top1_score: 0.9,
            score_margin: 0.5,
            token_budget_remaining: 1.0,
            ..Default::default()
        };
        let decision = decide(&z, &candidates(3), &theta);
        assert_eq!(decision.chosen, Action::Top1Resolution);
        assert!(!decision.overridden);
    }

    #[test]
    fn ties_prefer_non_injection_order() {
        // Zero knobs make every action score exactly -lambda_c*C(a); zero
        // the cost table too so all scores are bit-identical.
        let mut theta = PolicyState::default();
        theta.knobs = Knobs { rho: 0.0, mu: 0.0, lambda_c: 0.0, w_u: 0.0, w_r: 0.0 };
        let z = StateVector {
            top1_score: 0.9,
            score_margin: 0.5,
            token_budget_remaining: 1.0,
            ..Default::default()
        };
        let decision = decide(&z, &candidates(3), &theta);
        assert_eq!(decision.chosen, Action::NoMemory);
    }

    #[test]
    fn decide_is_deterministic() {
        let theta = PolicyState::default();
        let z = StateVector {
            top1_score: 0.6,
            score_margin: 0.3,
            token_budget_remaining: 1.0,
            ..Default::default()
        };
        let a = decide(&z, &candidates(2), &theta);
        let b = decide(&z, &candidates(2), &theta);
        assert_eq!(a, b);
        assert_eq!(a.to_audit_line(), b.to_audit_line());
    }

    #[test]
    fn update_running_mean() {
        let mut theta = PolicyState::default();
        let z = StateVector::default();
        theta.update(Action::Top1Resolution, &z, 2.0, &Outcome::verified(0.0, 0.0));
        assert_eq!(theta.stats_for(Action::Top1Resolution).q, 2.0);
        assert_eq!(theta.stats_for(Action::Top1Resolution).n, 1);
        assert_eq!(theta.total_feedback, 1);
        theta.update(Action::Top1Resolution, &z, -4.0, &Outcome::false_positive(0.0, 0.0));
        assert_eq!(theta.stats_for(Action::Top1Resolution).q, -1.0);
        assert_eq!(theta.stats_for(Action::Top1Resolution).n_fp, 1);
        assert_eq!(theta.stats_for(Action::Top1Resolution).fp_rate(), 0.5);
    }

    #[test]
    fn fp_update_raises_context_prediction() {
        let mut theta = PolicyState::default();
        let z = StateVector {
            top1_score: 0.5,
            candidate_entropy: 0.8,
            historical_false_positive_rate: 0.4,
            token_budget_remaining: 1.0,
            ..Default::default()
        };
        let before = theta.models.fp_context.logistic(&z);
        theta.update(Action::Top1Resolution, &z, -4.0, &Outcome::false_positive(0.0, 0.0));
        let after = theta.models.fp_context.logistic(&z);
        assert!(after > before);
        assert_eq!(
            theta.stats_for(Action::Top1Resolution).fp_rate(),
            1.0
        );
    }

    #[test]
    fn non_injection_update_leaves_fp_context_untouched() {
        let mut theta = PolicyState::default();
        let z = StateVector { top1_score: 0.5, ..Default::default() };
        let before = theta.models.fp_context;
        theta.update(Action::Abstain, &z, 0.5, &Outcome::correct_abstain(0.0, 0.0));
        assert_eq!(theta.models.fp_context, before);
    }

    #[test]
    fn total_feedback_equals_per_action_sum() {
        let mut theta = PolicyState::default();
        let z = StateVector::default();
        for (i, action) in Action::ALL.iter().cycle().take(23).enumerate() {
            theta.update(*action, &z, i as f64 * 0.1, &Outcome::none(0.0, 0.0));
        }
        let per_action: u64 = theta.stats.iter().map(|s| s.n).sum();
        assert_eq!(theta.total_feedback, per_action);
    }

    #[test]
    fn expected_reward_examples() {
        let cfg = RewardConfig::default();
        let (e_inject, e_abstain, dominates) =
            expected_rewards(0.0, 0.0, 1.0, 0.0, 0.0, &cfg).unwrap();
        assert_eq!(e_inject, -4.0);
        assert_eq!(e_abstain, 0.0);
        assert!(dominates);

        let (e_inject, _, dominates) = expected_rewards(1.0, 0.0, 0.0, 0.0, 0.0, &cfg).unwrap();
        assert_eq!(e_inject, 2.0);
        assert!(!dominates);

        let (e_inject, e_abstain, dominates) =
            expected_rewards(0.3, 0.2, 0.3, 0.2, 0.8, &cfg).unwrap();
        assert!((e_inject - (-0.6)).abs() < 1e-12);
        assert!((e_abstain - 0.4).abs() < 1e-12);
        assert!(dominates);
    }

    #[test]
    fn probability_out_of_range_rejected() {
        let cfg = RewardConfig::default();
        assert!(expected_rewards(1.2, 0.0, 0.0, 0.0, 0.0, &cfg).is_err());
        assert!(expected_rewards(0.0, -0.1, 0.0, 0.0, 0.0, &cfg).is_err());
    }

    #[test]
    fn audit_line_is_canonical_json() {
        let theta = PolicyState::default();
        let z = StateVector { top1_score: 0.5, ..Default::default() };
        let decision = decide(&z, &candidates(2), &theta);
        let line = decision.to_audit_line();
        let parsed: serde_json::Value = serde_json::from_str(&line).unwrap();
        assert_eq!(parsed["chosen"].as_str().unwrap(), decision.chosen.as_str());
        assert_eq!(parsed["state"].as_array().unwrap().len(), 16);
    }
}
