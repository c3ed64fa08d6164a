//! Experiment runners and metrics for every benchmark family.
//!
//! Retrieval quality (Recall@k, MRR, nDCG@3), hard-negative safety, the
//! combined abstention set, offline replay with regret against the oracle,
//! ablation variants, the reward-coefficient sweep, the context-budget
//! proxy, and the hot-path latency run.

use crate::baselines::{create_controller_from_state, create_policy, Policy, PolicyKind};
use crate::dataset::{BudgetMode, ContextBudgetCase, Dataset, HardNegativeCase, QueryCase};
use crate::memory::MemoryBank;
use crate::policy::{compute_reward, Action, ControllerOptions, Knobs, Outcome, PolicyState,
    RewardConfig,
};
use crate::query::{normalize, retrieve, retrieve_lexical, Candidate, RetrievalMode, DEFAULT_K};
use crate::state::{build_state, BudgetState, StateVector};
use std::collections::BTreeMap;
use std::str::FromStr;
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("empty query set")]
    EmptyQuerySet,
    #[error("event {event}: no outcome recorded for action {action}")]
    MissingOutcome { event: String, action: Action },
    #[error("event {event}: unknown query {query}")]
    MissingQuery { event: String, query: String },
    #[error("unknown ablation variant: {0}")]
    UnknownVariant(String),
    #[error("invalid sweep config {name}: {message}")]
    InvalidConfig { name: String, message: String },
}

/// Ranked-retrieval quality over a query set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetrievalMetrics {
    pub recall_at_1: f64,
    pub recall_at_3: f64,
    pub mrr: f64,
    pub ndcg_at_3: f64,
    pub top1_accuracy: f64,
    pub n_queries: usize,
}

/// Injection-safety behavior over labeled cases.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SafetyMetrics {
    pub false_positive_rate: f64,
    pub unsafe_injection_rate: f64,
    pub correct_abstention_rate: f64,
    pub wrong_abstention_rate: f64,
    pub n_cases: usize,
}

/// Offline replay outcome statistics for one policy run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReplayMetrics {
    pub success_rate: f64,
    pub fp_rate: f64,
    pub abstention_rate: f64,
    pub verified_reuse_rate: f64,
    pub avg_reward: f64,
    pub cumulative_reward: f64,
    pub regret_proxy: f64,
    pub n_events: usize,
}

/// Decide-call latency statistics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatencyStats {
    pub mean_us: f64,
    pub p95_us: f64,
    pub n_decisions: usize,
}

// ---------------------------------------------------------------------------
// Retrieval evaluation
// ---------------------------------------------------------------------------

/// The retrieval-side methods compared in the ranking experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RetrievalMethod {
    Lexical,
    StaticHybrid,
    StaticHybridWithAbstention,
    FullSystem,
    Oracle,
}

impl RetrievalMethod {
    pub const ALL: [RetrievalMethod; 5] = [
        RetrievalMethod::Lexical,
        RetrievalMethod::StaticHybrid,
        RetrievalMethod::StaticHybridWithAbstention,
        RetrievalMethod::FullSystem,
        RetrievalMethod::Oracle,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            RetrievalMethod::Lexical => "lexical_only",
            RetrievalMethod::StaticHybrid => "static_hybrid",
            RetrievalMethod::StaticHybridWithAbstention => "static_hybrid_with_abstention",
            RetrievalMethod::FullSystem => "full_system",
            RetrievalMethod::Oracle => "oracle_upper_bound",
        }
    }
}

/// 1-based rank of the gold pattern under `method`, `None` when absent
/// from the returned candidates.
fn gold_rank(method: RetrievalMethod, case: &QueryCase, bank: &MemoryBank) -> Option<usize> {
    if method == RetrievalMethod::Oracle {
        return Some(1);
    }
    let profile = normalize(&case.raw);
    let candidates = match method {
        RetrievalMethod::Lexical => retrieve_lexical(&profile, bank, DEFAULT_K),
        _ => retrieve(&profile, bank, RetrievalMode::default()),
    };
    candidates
        .iter()
        .position(|c| c.record_ref == case.gold_pattern_id)
        .map(|idx| idx + 1)
}

/// Recall@1/3, MRR, nDCG@3, and top-1 accuracy against gold patterns.
pub fn eval_retrieval(
    method: RetrievalMethod,
    queries: &[QueryCase],
    bank: &MemoryBank,
) -> Result<RetrievalMetrics, HarnessError> {
    if queries.is_empty() {
        return Err(HarnessError::EmptyQuerySet);
    }
    let n = queries.len() as f64;
    let mut recall_1 = 0.0;
    let mut recall_3 = 0.0;
    let mut mrr = 0.0;
    let mut ndcg = 0.0;
    for case in queries {
        if let Some(rank) = gold_rank(method, case, bank) {
            if rank == 1 {
                recall_1 += 1.0;
            }
            if rank <= 3 {
                recall_3 += 1.0;
                ndcg += 1.0 / ((rank as f64) + 1.0).log2();
            }
            mrr += 1.0 / rank as f64;
        }
    }
    Ok(RetrievalMetrics {
        recall_at_1: recall_1 / n,
        recall_at_3: recall_3 / n,
        mrr: mrr / n,
        ndcg_at_3: ndcg / n,
        top1_accuracy: recall_1 / n,
        n_queries: queries.len(),
    })
}

// ---------------------------------------------------------------------------
// Replay
// ---------------------------------------------------------------------------

fn candidates_for(
    lexical_ranking: bool,
    profile: &crate::query::QueryProfile,
    bank: &MemoryBank,
) -> Vec<Candidate> {
    if lexical_ranking {
        retrieve_lexical(profile, bank, DEFAULT_K)
    } else {
        retrieve(profile, bank, RetrievalMode::default())
    }
}

/// Feature mask applied by the feature-ablation variants.
type StateMask = fn(StateVector) -> StateVector;

fn identity_mask(z: StateVector) -> StateVector {
    z
}

fn mask_family(mut z: StateVector) -> StateVector {
    z.family_confidence = 0.0;
    z
}

fn mask_entity(mut z: StateVector) -> StateVector {
    z.entity_match_ratio = 0.0;
    z
}

struct ReplayAccumulator {
    successes: usize,
    fps: usize,
    abstentions: usize,
    verified: usize,
    total_reward: f64,
    n: usize,
}

impl ReplayAccumulator {
    fn new() -> Self {
        Self { successes: 0, fps: 0, abstentions: 0, verified: 0, total_reward: 0.0, n: 0 }
    }

    fn record(&mut self, chosen: Action, outcome: &Outcome, reward: f64) {
        self.n += 1;
        if outcome.verified || outcome.accepted || outcome.correct_abstain {
            self.successes += 1;
        }
        if outcome.false_positive {
            self.fps += 1;
        }
        if chosen == Action::Abstain {
            self.abstentions += 1;
        }
        if outcome.verified {
            self.verified += 1;
        }
        self.total_reward += reward;
    }

    fn finish(&self, oracle_cumulative: f64) -> ReplayMetrics {
        let n = self.n.max(1) as f64;
        ReplayMetrics {
            success_rate: self.successes as f64 / n,
            fp_rate: self.fps as f64 / n,
            abstention_rate: self.abstentions as f64 / n,
            verified_reuse_rate: self.verified as f64 / n,
            avg_reward: self.total_reward / n,
            cumulative_reward: self.total_reward,
            regret_proxy: oracle_cumulative - self.total_reward,
            n_events: self.n,
        }
    }
}

/// One policy's pass over one seed's events: build state, decide, look up
/// the chosen action's labeled outcome, reward, update.
fn replay_pass(
    policy: &mut dyn Policy,
    lexical_ranking: bool,
    mask: StateMask,
    dataset: &Dataset,
    seed: u64,
    cfg: &RewardConfig,
) -> Result<ReplayAccumulator, HarnessError> {
    let mut acc = ReplayAccumulator::new();
    let mut session_rejections: BTreeMap<&str, u32> = BTreeMap::new();
    let budget = BudgetState::full();
    for event in dataset.events_for_seed(seed) {
        let query = dataset
            .query(&event.query_id)
            .ok_or_else(|| HarnessError::MissingQuery {
                event: event.event_id.clone(),
                query: event.query_id.clone(),
            })?;
        let mut profile = normalize(&query.raw);
        profile.session_rejections = session_rejections
            .get(event.session_id.as_str())
            .copied()
            .unwrap_or(0);
        let candidates = candidates_for(lexical_ranking, &profile, &dataset.bank);
        let z = mask(build_state(&profile, &candidates, &dataset.bank, &budget));
        let decision = policy.decide(&z, &candidates, Some(event));
        let outcome = event
            .outcome_per_action
            .get(&decision.chosen)
            .ok_or_else(|| HarnessError::MissingOutcome {
                event: event.event_id.clone(),
                action: decision.chosen,
            })?;
        let reward = compute_reward(outcome, cfg);
        policy.update(decision.chosen, &z, reward, outcome);
        if outcome.rejected {
            *session_rejections.entry(event.session_id.as_str()).or_insert(0) += 1;
        }
        acc.record(decision.chosen, outcome, reward);
    }
    Ok(acc)
}

fn oracle_cumulative(dataset: &Dataset, seed: u64, cfg: &RewardConfig) -> Result<f64, HarnessError> {
    let mut oracle = create_policy(PolicyKind::OracleUpperBound, seed, RewardConfig::default());
    let acc = replay_pass(oracle.as_mut(), false, identity_mask, dataset, seed, cfg)?;
    Ok(acc.total_reward)
}

/// Pool per-seed metrics: rates are event-weighted; cumulative reward and
/// regret are averaged per seed so they stay comparable to a single run.
fn pool(per_seed: &[(u64, ReplayMetrics)]) -> ReplayMetrics {
    let runs = per_seed.len().max(1) as f64;
    let total_events: usize = per_seed.iter().map(|(_, m)| m.n_events).sum();
    let n = total_events.max(1) as f64;
    let weighted = |f: fn(&ReplayMetrics) -> f64| -> f64 {
        per_seed
            .iter()
            .map(|(_, m)| f(m) * m.n_events as f64)
            .sum::<f64>()
            / n
    };
    ReplayMetrics {
        success_rate: weighted(|m| m.success_rate),
        fp_rate: weighted(|m| m.fp_rate),
        abstention_rate: weighted(|m| m.abstention_rate),
        verified_reuse_rate: weighted(|m| m.verified_reuse_rate),
        avg_reward: weighted(|m| m.avg_reward),
        cumulative_reward: per_seed.iter().map(|(_, m)| m.cumulative_reward).sum::<f64>() / runs,
        regret_proxy: per_seed.iter().map(|(_, m)| m.regret_proxy).sum::<f64>() / runs,
        n_events: total_events,
    }
}

/// Replay one policy kind over every seed; returns per-seed metrics plus
/// the pooled row.
pub fn run_replay(
    kind: PolicyKind,
    dataset: &Dataset,
    seeds: &[u64],
    cfg: &RewardConfig,
) -> Result<(Vec<(u64, ReplayMetrics)>, ReplayMetrics), HarnessError> {
    let mut per_seed = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let mut policy = create_policy(kind, seed, *cfg);
        let acc = replay_pass(
            policy.as_mut(),
            kind.uses_lexical_ranking(),
            identity_mask,
            dataset,
            seed,
            cfg,
        )?;
        let oracle_total = oracle_cumulative(dataset, seed, cfg)?;
        per_seed.push((seed, acc.finish(oracle_total)));
    }
    let pooled = pool(&per_seed);
    Ok((per_seed, pooled))
}

// ---------------------------------------------------------------------------
// Hard negatives and abstention
// ---------------------------------------------------------------------------

struct CaseOutcome {
    injected: bool,
    wrong_family: bool,
}

fn decide_case(
    policy: &mut dyn Policy,
    lexical_ranking: bool,
    raw: &crate::query::RawContext,
    bank: &MemoryBank,
    true_family: Option<crate::family::FailureFamily>,
) -> CaseOutcome {
    let profile = normalize(raw);
    let candidates = candidates_for(lexical_ranking, &profile, bank);
    let z = build_state(&profile, &candidates, bank, &BudgetState::full());
    let decision = policy.decide(&z, &candidates, None);
    let injected = decision.chosen.injects_memory();
    let wrong_family = match (injected, candidates.first(), true_family) {
        (true, Some(top), Some(family)) => bank
            .record(&top.record_ref)
            .map(|r| r.pattern.family != family)
            .unwrap_or(true),
        _ => false,
    };
    CaseOutcome { injected, wrong_family }
}

/// Decision safety over the must-not-inject cases. The policy starts fresh
/// and receives no feedback; every non-injection here is correct.
pub fn run_hard_negative(
    kind: PolicyKind,
    cases: &[HardNegativeCase],
    bank: &MemoryBank,
    seed: u64,
    cfg: &RewardConfig,
) -> SafetyMetrics {
    let mut policy = create_policy(kind, seed, *cfg);
    let mut fps = 0;
    let mut unsafe_injections = 0;
    for case in cases {
        let outcome = decide_case(
            policy.as_mut(),
            kind.uses_lexical_ranking(),
            &case.raw,
            bank,
            Some(case.confusable_with),
        );
        if outcome.injected {
            unsafe_injections += 1;
            if outcome.wrong_family {
                fps += 1;
            }
        }
    }
    let n = cases.len().max(1) as f64;
    SafetyMetrics {
        false_positive_rate: fps as f64 / n,
        unsafe_injection_rate: unsafe_injections as f64 / n,
        correct_abstention_rate: (cases.len() - unsafe_injections) as f64 / n,
        wrong_abstention_rate: 0.0,
        n_cases: cases.len(),
    }
}

/// The combined abstention benchmark: the hard negatives plus the canonical
/// (answerable) queries, rates over the union.
pub fn run_abstention(
    kind: PolicyKind,
    hard_negatives: &[HardNegativeCase],
    queries: &[QueryCase],
    bank: &MemoryBank,
    seed: u64,
    cfg: &RewardConfig,
) -> SafetyMetrics {
    let mut policy = create_policy(kind, seed, *cfg);
    let total = hard_negatives.len() + queries.len();
    let mut fps = 0;
    let mut unsafe_injections = 0;
    let mut correct_abstentions = 0;
    let mut wrong_abstentions = 0;
    for case in hard_negatives {
        let outcome = decide_case(
            policy.as_mut(),
            kind.uses_lexical_ranking(),
            &case.raw,
            bank,
            Some(case.confusable_with),
        );
        if outcome.injected {
            unsafe_injections += 1;
            if outcome.wrong_family {
                fps += 1;
            }
        } else {
            correct_abstentions += 1;
        }
    }
    for case in queries {
        let outcome = decide_case(
            policy.as_mut(),
            kind.uses_lexical_ranking(),
            &case.raw,
            bank,
            None,
        );
        if !outcome.injected {
            wrong_abstentions += 1;
        }
    }
    let n = total.max(1) as f64;
    SafetyMetrics {
        false_positive_rate: fps as f64 / n,
        unsafe_injection_rate: unsafe_injections as f64 / n,
        correct_abstention_rate: correct_abstentions as f64 / n,
        wrong_abstention_rate: wrong_abstentions as f64 / n,
        n_cases: total,
    }
}

// ---------------------------------------------------------------------------
// Ablations
// ---------------------------------------------------------------------------

/// Controller ablation variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AblationVariant {
    Full,
    MinusFamilyFeatures,
    MinusEntityFeatures,
    MinusAbstention,
    MinusContextualBandit,
    MinusRiskObjective,
    StaticHybridOnly,
    Oracle,
}

impl AblationVariant {
    pub const ALL: [AblationVariant; 8] = [
        AblationVariant::Full,
        AblationVariant::MinusFamilyFeatures,
        AblationVariant::MinusEntityFeatures,
        AblationVariant::MinusAbstention,
        AblationVariant::MinusContextualBandit,
        AblationVariant::MinusRiskObjective,
        AblationVariant::StaticHybridOnly,
        AblationVariant::Oracle,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            AblationVariant::Full => "full",
            AblationVariant::MinusFamilyFeatures => "minus_family_features",
            AblationVariant::MinusEntityFeatures => "minus_entity_features",
            AblationVariant::MinusAbstention => "minus_abstention",
            AblationVariant::MinusContextualBandit => "minus_contextual_bandit",
            AblationVariant::MinusRiskObjective => "minus_risk_objective",
            AblationVariant::StaticHybridOnly => "static_hybrid_only",
            AblationVariant::Oracle => "oracle",
        }
    }

    fn mask(&self) -> StateMask {
        match self {
            AblationVariant::MinusFamilyFeatures => mask_family,
            AblationVariant::MinusEntityFeatures => mask_entity,
            _ => identity_mask,
        }
    }

    fn build_policy(&self, seed: u64, cfg: &RewardConfig) -> Box<dyn Policy> {
        match self {
            AblationVariant::Full
            | AblationVariant::MinusFamilyFeatures
            | AblationVariant::MinusEntityFeatures => {
                create_policy(PolicyKind::FullRscbMc, seed, *cfg)
            }
            AblationVariant::MinusAbstention => create_controller_from_state(
                PolicyState::new(*cfg).with_options(ControllerOptions {
                    abstention_enabled: false,
                    ..Default::default()
                }),
            ),
            AblationVariant::MinusContextualBandit => create_controller_from_state(
                PolicyState::new(*cfg).with_options(ControllerOptions {
                    contextual_enabled: false,
                    ..Default::default()
                }),
            ),
            AblationVariant::MinusRiskObjective => {
                let mut state = PolicyState::new(*cfg).with_options(ControllerOptions {
                    risk_enabled: false,
                    ..Default::default()
                });
                state.knobs = Knobs { mu: 0.0, w_r: 0.0, ..state.knobs };
                create_controller_from_state(state)
            }
            AblationVariant::StaticHybridOnly => {
                create_policy(PolicyKind::StaticHybrid, seed, *cfg)
            }
            AblationVariant::Oracle => create_policy(PolicyKind::OracleUpperBound, seed, *cfg),
        }
    }
}

impl FromStr for AblationVariant {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AblationVariant::ALL
            .iter()
            .find(|v| v.as_str() == s)
            .copied()
            .ok_or_else(|| HarnessError::UnknownVariant(s.to_string()))
    }
}

/// Replay plus hard-negative safety for one ablation variant.
pub fn run_ablation(
    variant: AblationVariant,
    dataset: &Dataset,
    seeds: &[u64],
    cfg: &RewardConfig,
) -> Result<(ReplayMetrics, SafetyMetrics), HarnessError> {
    let mask = variant.mask();
    let mut per_seed = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let mut policy = variant.build_policy(seed, cfg);
        let acc = replay_pass(policy.as_mut(), false, mask, dataset, seed, cfg)?;
        let oracle_total = oracle_cumulative(dataset, seed, cfg)?;
        per_seed.push((seed, acc.finish(oracle_total)));
    }
    let pooled = pool(&per_seed);

    // Safety side: fresh variant policy over the hard negatives.
    let safety_seed = seeds.first().copied().unwrap_or(0);
    let mut policy = variant.build_policy(safety_seed, cfg);
    let mut fps = 0;
    let mut unsafe_injections = 0;
    for case in &dataset.hard_negatives {
        let profile = normalize(&case.raw);
        let candidates = candidates_for(false, &profile, &dataset.bank);
        let z = mask(build_state(&profile, &candidates, &dataset.bank, &BudgetState::full()));
        let decision = policy.decide(&z, &candidates, None);
        if decision.chosen.injects_memory() {
            unsafe_injections += 1;
            let wrong = candidates
                .first()
                .and_then(|top| dataset.bank.record(&top.record_ref))
                .map(|r| r.pattern.family != case.confusable_with)
                .unwrap_or(true);
            if wrong {
                fps += 1;
            }
        }
    }
    let n = dataset.hard_negatives.len().max(1) as f64;
    let safety = SafetyMetrics {
        false_positive_rate: fps as f64 / n,
        unsafe_injection_rate: unsafe_injections as f64 / n,
        correct_abstention_rate: (dataset.hard_negatives.len() - unsafe_injections) as f64 / n,
        wrong_abstention_rate: 0.0,
        n_cases: dataset.hard_negatives.len(),
    };
    Ok((pooled, safety))
}

// ---------------------------------------------------------------------------
// Reward sweep
// ---------------------------------------------------------------------------

/// One reward-sweep configuration and its replay outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub name: String,
    pub config: RewardConfig,
    pub scaled: bool,
    pub pooled: ReplayMetrics,
    /// Risk-adjusted utility: cumulative reward minus gamma per observed
    /// false positive.
    pub utility: f64,
}

fn knob_label(x: f64) -> String {
    if x == x.trunc() {
        format!("{}", x as i64)
    } else {
        format!("{x}").replace('.', "p")
    }
}

/// The sixteen named sweep configurations. A gamma at or below the default
/// alpha scales alpha and beta down to preserve the ordering invariant;
/// the `scaled` flag records that substitution.
pub fn sweep_grid() -> Vec<(String, RewardConfig, bool)> {
    let mut grid = Vec::new();
    for gamma in [1.0, 2.5, 4.0, 8.0] {
        for (beta, kappa) in [(0.5, 0.5), (1.0, 1.0)] {
            for lambda in [0.0, 0.01] {
                let name = format!(
                    "fp{}_acc{}_cab{}_tok{}",
                    knob_label(gamma),
                    knob_label(beta),
                    knob_label(kappa),
                    knob_label(lambda)
                );
                let (config, scaled) =
                    match RewardConfig::new(2.0, beta, kappa, gamma, 1.0, 0.001, lambda) {
                        Ok(cfg) => (cfg, false),
                        Err(_) => {
                            let factor = gamma / 4.0;
                            let cfg = RewardConfig::new(
                                2.0 * factor,
                                beta * factor,
                                kappa,
                                gamma,
                                1.0,
                                0.001,
                                lambda,
                            )
                            .expect("scaled sweep config is ordered");
                            (cfg, true)
                        }
                    };
                grid.push((name, config, scaled));
            }
        }
    }
    grid
}

/// Run the full controller across the sweep grid.
pub fn run_reward_sweep(
    dataset: &Dataset,
    seeds: &[u64],
) -> Result<Vec<SweepResult>, HarnessError> {
    let mut results = Vec::new();
    for (name, config, scaled) in sweep_grid() {
        let (_, pooled) = run_replay(PolicyKind::FullRscbMc, dataset, seeds, &config)?;
        let fp_count = pooled.fp_rate * (pooled.n_events as f64 / seeds.len().max(1) as f64);
        let utility = pooled.cumulative_reward - config.gamma * fp_count;
        results.push(SweepResult { name, config, scaled, pooled, utility });
    }
    Ok(results)
}

// ---------------------------------------------------------------------------
// Context budget
// ---------------------------------------------------------------------------

/// Per-mode summary of the context-budget proxy.
#[derive(Debug, Clone, PartialEq)]
pub struct BudgetSummary {
    pub mode: BudgetMode,
    pub mean_tokens: f64,
    pub mean_latency_ms: f64,
    pub mean_success: f64,
    pub mean_fp_influence: f64,
    pub utility: f64,
    pub n_cases: usize,
}

/// Utility coefficients for the context-budget proxy.
pub const BUDGET_TOKEN_COST: f64 = 0.0001;
pub const BUDGET_LATENCY_COST: f64 = 0.001;

#[derive(Debug, Clone, PartialEq)]
pub struct BudgetReport {
    pub per_mode: Vec<BudgetSummary>,
    /// `no_memory` has the highest utility and `short_hint` the highest
    /// expected success.
    pub orderings_hold: bool,
}

pub fn run_context_budget(cases: &[ContextBudgetCase]) -> BudgetReport {
    let mut per_mode = Vec::new();
    for mode in BudgetMode::ALL {
        let rows: Vec<&ContextBudgetCase> = cases.iter().filter(|c| c.mode == mode).collect();
        let n = rows.len().max(1) as f64;
        let mean = |f: fn(&ContextBudgetCase) -> f64| rows.iter().map(|c| f(c)).sum::<f64>() / n;
        let mean_tokens = mean(|c| c.tokens);
        let mean_latency = mean(|c| c.latency_ms);
        let mean_success = mean(|c| c.success_proxy);
        let mean_fp = mean(|c| c.fp_influence_proxy);
        per_mode.push(BudgetSummary {
            mode,
            mean_tokens,
            mean_latency_ms: mean_latency,
            mean_success,
            mean_fp_influence: mean_fp,
            utility: mean_success
                - mean_fp
                - BUDGET_TOKEN_COST * mean_tokens
                - BUDGET_LATENCY_COST * mean_latency,
            n_cases: rows.len(),
        });
    }
    let best_utility = per_mode
        .iter()
        .max_by(|a, b| a.utility.partial_cmp(&b.utility).unwrap())
        .map(|s| s.mode);
    let best_success = per_mode
        .iter()
        .max_by(|a, b| a.mean_success.partial_cmp(&b.mean_success).unwrap())
        .map(|s| s.mode);
    BudgetReport {
        orderings_hold: best_utility == Some(BudgetMode::NoMemory)
            && best_success == Some(BudgetMode::ShortHint),
        per_mode,
    }
}

// ---------------------------------------------------------------------------
// Hot path
// ---------------------------------------------------------------------------

/// Number of measured decisions per method.
pub const HOTPATH_DECISIONS: usize = 200;
/// Unmeasured warm-up decisions per method.
pub const HOTPATH_WARMUP: usize = 20;

/// Nearest-rank percentile on a sample (sorted internally).
pub fn percentile_nearest_rank(samples: &[f64], p: f64) -> f64 {
    assert!(!samples.is_empty());
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let rank = ((p * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

/// Time `decide` alone over pre-built states; state construction and the
/// policy update happen outside the measured window. Rewards come from the
/// replay labels, so the policy keeps evolving while being timed.
pub fn run_hotpath(
    kinds: &[PolicyKind],
    dataset: &Dataset,
    n_per_method: usize,
    seed: u64,
    cfg: &RewardConfig,
) -> Result<Vec<(PolicyKind, LatencyStats)>, HarnessError> {
    struct Scenario<'a> {
        z: StateVector,
        candidates: Vec<Candidate>,
        event: &'a crate::dataset::ReplayEvent,
    }
    let budget = BudgetState::full();
    let mut scenarios = Vec::new();
    for event in dataset.events_for_seed(seed) {
        let query = dataset
            .query(&event.query_id)
            .ok_or_else(|| HarnessError::MissingQuery {
                event: event.event_id.clone(),
                query: event.query_id.clone(),
            })?;
        let profile = normalize(&query.raw);
        let candidates = retrieve(&profile, &dataset.bank, RetrievalMode::default());
        let z = build_state(&profile, &candidates, &dataset.bank, &budget);
        scenarios.push(Scenario { z, candidates, event });
    }
    if scenarios.is_empty() {
        return Err(HarnessError::EmptyQuerySet);
    }

    let mut results = Vec::with_capacity(kinds.len());
    for &kind in kinds {
        let mut policy = create_policy(kind, seed, *cfg);
        let mut timings: Vec<f64> = Vec::with_capacity(n_per_method);
        for i in 0..(HOTPATH_WARMUP + n_per_method) {
            let scenario = &scenarios[i % scenarios.len()];
            let measured = i >= HOTPATH_WARMUP;
            let decision = if measured {
                let start = Instant::now();
                let d = policy.decide(&scenario.z, &scenario.candidates, Some(scenario.event));
                timings.push(start.elapsed().as_nanos() as f64 / 1000.0);
                d
            } else {
                policy.decide(&scenario.z, &scenario.candidates, Some(scenario.event))
            };
            if let Some(outcome) = scenario.event.outcome_per_action.get(&decision.chosen) {
                let reward = compute_reward(outcome, cfg);
                policy.update(decision.chosen, &scenario.z, reward, outcome);
            }
        }
        let mean = timings.iter().sum::<f64>() / timings.len().max(1) as f64;
        results.push((
            kind,
            LatencyStats {
                mean_us: mean,
                p95_us: percentile_nearest_rank(&timings, 0.95),
                n_decisions: timings.len(),
            },
        ));
    }
    Ok(results)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate, GeneratorConfig};

    fn dataset() -> Dataset {
        generate(&GeneratorConfig::smoke(1337))
    }

    #[test]
    fn canonical_queries_saturate_for_all_methods() {
        let ds = dataset();
        for method in RetrievalMethod::ALL {
            let metrics = eval_retrieval(method, &ds.queries, &ds.bank).unwrap();
            assert_eq!(metrics.recall_at_1, 1.0, "method {}", method.as_str());
            assert_eq!(metrics.mrr, 1.0, "method {}", method.as_str());
            assert_eq!(metrics.top1_accuracy, 1.0, "method {}", method.as_str());
        }
    }

    #[test]
    fn lexical_paraphrase_recall_degrades() {
        let ds = dataset();
        let metrics = eval_retrieval(RetrievalMethod::Lexical, &ds.paraphrases, &ds.bank).unwrap();
        assert!(metrics.recall_at_1 < 1.0, "recall {}", metrics.recall_at_1);
        assert!(metrics.recall_at_1 > 0.5, "recall collapsed: {}", metrics.recall_at_1);
    }

    #[test]
    fn empty_query_set_is_an_error() {
        let ds = dataset();
        assert!(matches!(
            eval_retrieval(RetrievalMethod::Lexical, &[], &ds.bank),
            Err(HarnessError::EmptyQuerySet)
        ));
    }

    #[test]
    fn oracle_replay_has_zero_regret_and_zero_fp() {
        let ds = dataset();
        let cfg = RewardConfig::default();
        let (per_seed, pooled) =
            run_replay(PolicyKind::OracleUpperBound, &ds, &[1337, 2024], &cfg).unwrap();
        for (seed, metrics) in &per_seed {
            assert_eq!(metrics.fp_rate, 0.0, "seed {seed}");
            assert!(metrics.regret_proxy.abs() < 1e-9, "seed {seed}");
        }
        assert_eq!(pooled.fp_rate, 0.0);
    }

    #[test]
    fn static_hybrid_replay_mix() {
        // 8 events of each outcome kind: static always injects top1, so it
        // succeeds on verified+accepted (16/40) and hits every fp event.
        let ds = dataset();
        let cfg = RewardConfig::default();
        let (per_seed, pooled) =
            run_replay(PolicyKind::StaticHybrid, &ds, &[1337, 2024], &cfg).unwrap();
        for (seed, metrics) in &per_seed {
            assert!((metrics.success_rate - 0.4).abs() < 1e-9, "seed {seed}");
            assert!((metrics.fp_rate - 0.2).abs() < 1e-9, "seed {seed}");
        }
        assert!(pooled.fp_rate > 0.0);
    }

    #[test]
    fn full_controller_beats_static_with_zero_fp() {
        let ds = dataset();
        let cfg = RewardConfig::default();
        let (per_seed, pooled) =
            run_replay(PolicyKind::FullRscbMc, &ds, &[1337, 2024], &cfg).unwrap();
        for (seed, metrics) in &per_seed {
            assert_eq!(metrics.fp_rate, 0.0, "seed {seed}");
            assert!(metrics.success_rate > 0.4, "seed {seed}: {}", metrics.success_rate);
            assert!(metrics.regret_proxy >= 0.0, "seed {seed}");
        }
        assert!(pooled.success_rate > 0.4);
    }

    #[test]
    fn hard_negative_safety_rows() {
        let ds = dataset();
        let cfg = RewardConfig::default();
        let full = run_hard_negative(PolicyKind::FullRscbMc, &ds.hard_negatives, &ds.bank, 1337, &cfg);
        assert_eq!(full.false_positive_rate, 0.0);
        assert_eq!(full.unsafe_injection_rate, 0.0);
        assert_eq!(full.correct_abstention_rate, 1.0);

        let risk_ts = run_hard_negative(
            PolicyKind::RiskSensitiveThompson,
            &ds.hard_negatives,
            &ds.bank,
            1337,
            &cfg,
        );
        assert_eq!(risk_ts.false_positive_rate, 0.0);
        assert_eq!(risk_ts.unsafe_injection_rate, 0.0);

        let static_hybrid =
            run_hard_negative(PolicyKind::StaticHybrid, &ds.hard_negatives, &ds.bank, 1337, &cfg);
        assert_eq!(static_hybrid.unsafe_injection_rate, 1.0);
        assert!(static_hybrid.false_positive_rate > 0.0);

        let oracle = run_hard_negative(
            PolicyKind::OracleUpperBound,
            &ds.hard_negatives,
            &ds.bank,
            1337,
            &cfg,
        );
        assert_eq!(oracle.false_positive_rate, 0.0);
    }

    #[test]
    fn static_with_abstention_stays_safe_on_hard_negatives() {
        let ds = dataset();
        let cfg = RewardConfig::default();
        let metrics = run_hard_negative(
            PolicyKind::StaticHybridWithAbstention,
            &ds.hard_negatives,
            &ds.bank,
            1337,
            &cfg,
        );
        assert_eq!(metrics.false_positive_rate, 0.0);
        assert_eq!(metrics.unsafe_injection_rate, 0.0);
    }

    #[test]
    fn abstention_set_rates() {
        let ds = dataset();
        let cfg = RewardConfig::default();
        let metrics = run_abstention(
            PolicyKind::FullRscbMc,
            &ds.hard_negatives,
            &ds.queries,
            &ds.bank,
            1337,
            &cfg,
        );
        assert_eq!(metrics.n_cases, 56);
        assert_eq!(metrics.false_positive_rate, 0.0);
        // Cold-start conservatism: all 32 hard negatives safely declined.
        assert!((metrics.correct_abstention_rate - 32.0 / 56.0).abs() < 1e-9);
    }

    #[test]
    fn ablation_minus_abstention_is_strictly_worse() {
        let ds = dataset();
        let cfg = RewardConfig::default();
        let seeds = [1337, 2024];
        let (full, _) = run_ablation(AblationVariant::Full, &ds, &seeds, &cfg).unwrap();
        let (minus, _) =
            run_ablation(AblationVariant::MinusAbstention, &ds, &seeds, &cfg).unwrap();
        assert!(minus.fp_rate > full.fp_rate);
        assert!(minus.cumulative_reward < full.cumulative_reward);
    }

    #[test]
    fn ablation_oracle_has_best_cumulative_reward() {
        let ds = dataset();
        let cfg = RewardConfig::default();
        let seeds = [1337, 2024];
        let mut best: Option<(AblationVariant, f64)> = None;
        for variant in AblationVariant::ALL {
            let (pooled, _) = run_ablation(variant, &ds, &seeds, &cfg).unwrap();
            if best.map(|(_, r)| pooled.cumulative_reward > r).unwrap_or(true) {
                best = Some((variant, pooled.cumulative_reward));
            }
        }
        assert_eq!(best.unwrap().0, AblationVariant::Oracle);
    }

    #[test]
    fn unknown_variant_is_an_error() {
        assert!(matches!(
            "minus_everything".parse::<AblationVariant>(),
            Err(HarnessError::UnknownVariant(_))
        ));
    }

    #[test]
    fn sweep_has_sixteen_ordered_configs() {
        let grid = sweep_grid();
        assert_eq!(grid.len(), 16);
        let names: Vec<&str> = grid.iter().map(|(n, _, _)| n.as_str()).collect();
        let mut deduped = names.clone();
        deduped.dedup();
        assert_eq!(names.len(), deduped.len());
        // Every config obeys the ordering invariant after scaling.
        for (name, cfg, scaled) in &grid {
            assert!(cfg.gamma > cfg.alpha && cfg.alpha > cfg.beta, "{name}");
            if cfg.gamma == 1.0 {
                assert!(*scaled, "{name} must be scaled");
            }
        }
        assert!(grid.iter().any(|(n, _, _)| n == "fp4_acc1_cab1_tok0p01"));
    }

    #[test]
    fn unscaled_low_gamma_config_is_rejected() {
        assert!(RewardConfig::new(2.0, 1.0, 0.5, 1.0, 1.0, 0.001, 0.0).is_err());
    }

    #[test]
    fn context_budget_orderings() {
        let ds = dataset();
        let report = run_context_budget(&ds.context_budget);
        assert!(report.orderings_hold);
        let no_memory = report
            .per_mode
            .iter()
            .find(|s| s.mode == BudgetMode::NoMemory)
            .unwrap();
        assert_eq!(no_memory.mean_tokens, 0.0);
        assert_eq!(no_memory.mean_latency_ms, 0.0);
        assert_eq!(no_memory.mean_fp_influence, 0.0);
    }

    #[test]
    fn rank_two_metric_contributions() {
        // A paraphrase whose gold lands at rank 2 contributes MRR 1/2 and
        // nDCG@3 1/log2(3).
        use crate::memory::{MemoryBank, Pattern, Variant};
        use std::collections::BTreeSet;
        let set = |items: &[&str]| -> BTreeSet<String> {
            items.iter().map(|s| s.to_string()).collect()
        };
        let record = |id: &str, tokens: &[&str]| crate::memory::MemoryRecord {
            pattern: Pattern {
                pattern_id: id.to_string(),
                family: crate::family::FailureFamily::WrongVirtualenv,
                symptom_tokens: set(tokens),
                root_cause_tokens: BTreeSet::new(),
                description: String::new(),
            },
            variants: vec![Variant {
                variant_id: format!("{id}_v"),
                parent_pattern_id: id.to_string(),
                fix_strategy: String::new(),
                command_signature: set(&["cmd"]),
                path_signature: BTreeSet::new(),
                stack_signature: BTreeSet::new(),
                entities: BTreeSet::new(),
            }],
            episodes: vec![],
            historical_acceptance_rate: 0.0,
            historical_false_positive_rate: 0.0,
        };
        let bank = MemoryBank {
            records: vec![
                record("pat_strong", &["alpha", "beta"]),
                record("pat_gold", &["alpha", "gamma", "delta"]),
            ],
            bank_version: 1,
        };
        let query = QueryCase {
            query_id: "q".to_string(),
            raw: crate::query::RawContext {
                error_text: "alpha beta".to_string(),
                session_id: "q".to_string(),
                ..Default::default()
            },
            gold_pattern_id: "pat_gold".to_string(),
            family: crate::family::FailureFamily::WrongVirtualenv,
        };
        let m = eval_retrieval(RetrievalMethod::Lexical, &[query], &bank).unwrap();
        assert_eq!(m.recall_at_1, 0.0);
        assert_eq!(m.recall_at_3, 1.0);
        assert!((m.mrr - 0.5).abs() < 1e-12);
        assert!((m.ndcg_at_3 - 1.0 / 3.0_f64.log2()).abs() < 1e-6);
        assert!((m.ndcg_at_3 - 0.6309).abs() < 1e-4);
    }

    #[test]
    fn always_abstaining_on_abstain_labeled_events_is_full_success() {
        // Restrict the events to the ambiguous ones, whose abstain outcome
        // is labeled correct_abstain; the threshold baseline abstains on
        // every such query.
        let mut ds = dataset();
        ds.replay_events.retain(|e| {
            e.outcome_per_action[&Action::Abstain].correct_abstain
        });
        assert!(!ds.replay_events.is_empty());
        let cfg = RewardConfig::default();
        let (per_seed, pooled) =
            run_replay(PolicyKind::StaticHybridWithAbstention, &ds, &[1337, 2024], &cfg)
                .unwrap();
        for (seed, m) in per_seed {
            assert_eq!(m.success_rate, 1.0, "seed {seed}");
            assert_eq!(m.abstention_rate, 1.0, "seed {seed}");
        }
        assert_eq!(pooled.success_rate, 1.0);
    }

    #[test]
    fn ablation_minus_family_features_keeps_zero_fp() {
        let ds = dataset();
        let cfg = RewardConfig::default();
        let (pooled, safety) =
            run_ablation(AblationVariant::MinusFamilyFeatures, &ds, &[1337, 2024], &cfg)
                .unwrap();
        assert_eq!(pooled.fp_rate, 0.0);
        assert_eq!(safety.false_positive_rate, 0.0);
    }

    #[test]
    fn percentile_nearest_rank_matches_definition() {
        let xs = [5.0, 1.0, 4.0, 2.0, 3.0];
        assert_eq!(percentile_nearest_rank(&xs, 0.95), 5.0);
        assert_eq!(percentile_nearest_rank(&xs, 0.5), 3.0);
        assert_eq!(percentile_nearest_rank(&[7.0], 0.95), 7.0);
    }

    #[test]
    fn hotpath_counts_and_ordering() {
        let ds = dataset();
        let cfg = RewardConfig::default();
        let results = run_hotpath(
            &[PolicyKind::FullRscbMc, PolicyKind::LinUcb],
            &ds,
            HOTPATH_DECISIONS,
            1337,
            &cfg,
        )
        .unwrap();
        let full = results.iter().find(|(k, _)| *k == PolicyKind::FullRscbMc).unwrap().1;
        let linucb = results.iter().find(|(k, _)| *k == PolicyKind::LinUcb).unwrap().1;
        assert_eq!(full.n_decisions, 200);
        assert_eq!(linucb.n_decisions, 200);
        assert!(linucb.p95_us > full.p95_us, "linucb {} vs full {}", linucb.p95_us, full.p95_us);
    }
}
