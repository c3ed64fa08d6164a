//! Python bindings: the gating controller, retrieval pipeline, reward math,
//! and the benchmark generator, exposed as the `memgate` extension module.

use memgate_core::baselines::PolicyKind;
use memgate_core::dataset::{
    generate_artifacts, validate_dataset_dir, GeneratorConfig, Scale, DEFAULT_REPLAY_SEEDS,
};
use memgate_core::memory::{load_bank, save_bank, validate_bank, MemoryBank};
use memgate_core::policy::{
    available_actions, compute_reward, decide, expected_rewards, lagrangian_score, Action,
    Outcome, PolicyState, RewardConfig,
};
use memgate_core::query::{normalize, retrieve, retrieve_lexical, Candidate, QueryProfile,
    RetrievalMode,
};
use memgate_core::report::{parse_suites, run_suites};
use memgate_core::state::{
    build_state, candidate_distribution, entropy, margin, BudgetState, StateVector, STATE_DIM,
};
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use std::collections::BTreeMap;
use std::path::PathBuf;

fn io_err<E: std::fmt::Display>(e: E) -> PyErr {
    PyIOError::new_err(e.to_string())
}

fn value_err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// A loaded memory bank.
#[pyclass(name = "Bank")]
struct PyBank {
    inner: MemoryBank,
}

#[pymethods]
impl PyBank {
    /// Load a bank from its line-delimited file.
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self { inner: load_bank(&path).map_err(io_err)? })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        save_bank(&self.inner, &path).map_err(io_err)
    }

    /// Invariant violations as strings; empty means valid.
    fn validate(&self) -> Vec<String> {
        validate_bank(&self.inner).iter().map(|v| v.to_string()).collect()
    }

    #[getter]
    fn record_count(&self) -> usize {
        self.inner.records.len()
    }

    #[getter]
    fn variant_count(&self) -> usize {
        self.inner.variant_count()
    }

    fn pattern_ids(&self) -> Vec<String> {
        self.inner
            .records
            .iter()
            .map(|r| r.pattern.pattern_id.clone())
            .collect()
    }

    fn __len__(&self) -> usize {
        self.inner.records.len()
    }
}

/// A normalized query profile.
#[pyclass(name = "Profile")]
struct PyProfile {
    inner: QueryProfile,
}

#[pymethods]
impl PyProfile {
    #[getter]
    fn tokens(&self) -> Vec<String> {
        self.inner.tokens.iter().cloned().collect()
    }

    #[getter]
    fn entities(&self) -> Vec<String> {
        self.inner.entities.iter().cloned().collect()
    }

    #[getter]
    fn family_votes(&self) -> BTreeMap<String, f64> {
        self.inner
            .family_votes
            .iter()
            .map(|(k, v)| (k.as_str().to_string(), *v))
            .collect()
    }

    #[setter]
    fn set_session_rejections(&mut self, value: u32) {
        self.inner.session_rejections = value;
    }

    #[getter]
    fn session_rejections(&self) -> u32 {
        self.inner.session_rejections
    }
}

#[pyfunction]
#[pyo3(signature = (error_text, stack_excerpt="", command="", paths=vec![], repo_scope="", env=None, prior_attempts=0, session_id="session"))]
#[allow(clippy::too_many_arguments)]
fn normalize_context(
    error_text: &str,
    stack_excerpt: &str,
    command: &str,
    paths: Vec<String>,
    repo_scope: &str,
    env: Option<BTreeMap<String, String>>,
    prior_attempts: u32,
    session_id: &str,
) -> PyProfile {
    let raw = memgate_core::query::RawContext {
        error_text: error_text.to_string(),
        stack_excerpt: stack_excerpt.to_string(),
        command: command.to_string(),
        paths,
        repo_scope: repo_scope.to_string(),
        env_metadata: env.unwrap_or_default(),
        prior_attempts,
        session_id: session_id.to_string(),
    };
    PyProfile { inner: normalize(&raw) }
}

fn candidate_to_dict<'py>(py: Python<'py>, c: &Candidate) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("pattern_id", &c.record_ref)?;
    d.set_item("variant_id", &c.variant_ref)?;
    d.set_item("score", c.score)?;
    let components = PyDict::new(py);
    components.set_item("lexical", c.component_scores.lexical)?;
    components.set_item("family", c.component_scores.family)?;
    components.set_item("entity", c.component_scores.entity)?;
    components.set_item("command", c.component_scores.command)?;
    components.set_item("path", c.component_scores.path)?;
    components.set_item("stack", c.component_scores.stack)?;
    components.set_item("history", c.component_scores.history)?;
    d.set_item("components", components)?;
    Ok(d)
}

#[pyfunction]
#[pyo3(signature = (profile, bank, mode="standard", k=3))]
fn retrieve_candidates<'py>(
    py: Python<'py>,
    profile: &PyProfile,
    bank: &PyBank,
    mode: &str,
    k: usize,
) -> PyResult<Bound<'py, PyList>> {
    let candidates = match mode {
        "standard" => retrieve(&profile.inner, &bank.inner, RetrievalMode::standard(k.max(1))),
        "high_precision" => retrieve(
            &profile.inner,
            &bank.inner,
            RetrievalMode::high_precision(k.max(1)),
        ),
        "high_recall" => retrieve(
            &profile.inner,
            &bank.inner,
            RetrievalMode::high_recall(k.max(1)),
        ),
        "lexical" => retrieve_lexical(&profile.inner, &bank.inner, k.max(1)),
        other => return Err(value_err(format!("unknown retrieval mode: {other}"))),
    };
    let items: Vec<Bound<'py, PyDict>> = candidates
        .iter()
        .map(|c| candidate_to_dict(py, c))
        .collect::<PyResult<_>>()?;
    PyList::new(py, items)
}

fn outcome_from_str(kind: &str, latency_ms: f64, token_cost: f64) -> PyResult<Outcome> {
    Ok(match kind {
        "verified" => Outcome::verified(latency_ms, token_cost),
        "accepted" => Outcome::accepted(latency_ms, token_cost),
        "correct_abstain" => Outcome::correct_abstain(latency_ms, token_cost),
        "false_positive" => Outcome::false_positive(latency_ms, token_cost),
        "rejected" => Outcome::rejected(latency_ms, token_cost),
        "none" => Outcome::none(latency_ms, token_cost),
        other => return Err(value_err(format!("unknown outcome kind: {other}"))),
    })
}

/// The risk-sensitive gating controller over a memory bank.
#[pyclass(name = "Controller")]
struct PyController {
    state: PolicyState,
}

#[pymethods]
impl PyController {
    #[new]
    fn new() -> Self {
        Self { state: PolicyState::new(RewardConfig::default()) }
    }

    /// Run the full gate on one debugging context: normalize, retrieve,
    /// build the 16-feature state, score and pick an action, and apply the
    /// safety override. Returns the decision as a dict; pass its `state`
    /// back to `feedback` together with the observed outcome.
    #[pyo3(signature = (bank, error_text, stack_excerpt="", command="", paths=vec![], env=None, prior_attempts=0, session_id="session", k=3))]
    #[allow(clippy::too_many_arguments)]
    fn gate<'py>(
        &self,
        py: Python<'py>,
        bank: &PyBank,
        error_text: &str,
        stack_excerpt: &str,
        command: &str,
        paths: Vec<String>,
        env: Option<BTreeMap<String, String>>,
        prior_attempts: u32,
        session_id: &str,
        k: usize,
    ) -> PyResult<Bound<'py, PyDict>> {
        let raw = memgate_core::query::RawContext {
            error_text: error_text.to_string(),
            stack_excerpt: stack_excerpt.to_string(),
            command: command.to_string(),
            paths,
            repo_scope: String::new(),
            env_metadata: env.unwrap_or_default(),
            prior_attempts,
            session_id: session_id.to_string(),
        };
        let mut profile = normalize(&raw);
        profile.session_rejections = self.state.session_rejection_count(session_id);
        let candidates = retrieve(&profile, &bank.inner, RetrievalMode::standard(k.max(1)));
        let z = build_state(&profile, &candidates, &bank.inner, &BudgetState::full());
        let decision = decide(&z, &candidates, &self.state);

        let d = PyDict::new(py);
        d.set_item("action", decision.chosen.as_str())?;
        d.set_item("overridden", decision.overridden)?;
        d.set_item("override_reason", decision.override_reason.clone())?;
        let scores = PyDict::new(py);
        for (action, score) in &decision.scores {
            scores.set_item(action.as_str(), *score)?;
        }
        d.set_item("scores", scores)?;
        d.set_item("state", z.as_array().to_vec())?;
        d.set_item("audit_line", decision.to_audit_line())?;
        let cands: Vec<Bound<'py, PyDict>> = candidates
            .iter()
            .map(|c| candidate_to_dict(py, c))
            .collect::<PyResult<_>>()?;
        d.set_item("candidates", PyList::new(py, cands)?)?;
        d.set_item(
            "available_actions",
            available_actions(&candidates)
                .iter()
                .map(|a| a.as_str())
                .collect::<Vec<_>>(),
        )?;
        Ok(d)
    }

    /// Fold an observed outcome back into the policy.
    #[pyo3(signature = (action, state, outcome, latency_ms=0.0, token_cost=0.0, session_id=None))]
    fn feedback(
        &mut self,
        action: &str,
        state: Vec<f64>,
        outcome: &str,
        latency_ms: f64,
        token_cost: f64,
        session_id: Option<&str>,
    ) -> PyResult<f64> {
        let action: Action = action.parse().map_err(value_err)?;
        if state.len() != STATE_DIM {
            return Err(value_err(format!(
                "state must have {STATE_DIM} features, got {}",
                state.len()
            )));
        }
        let mut z = [0.0; STATE_DIM];
        z.copy_from_slice(&state);
        let z = StateVector::from_array(z);
        let outcome = outcome_from_str(outcome, latency_ms, token_cost)?;
        let reward = compute_reward(&outcome, &self.state.reward_config);
        self.state.update(action, &z, reward, &outcome);
        if outcome.rejected {
            if let Some(session) = session_id {
                self.state.note_session_rejection(session);
            }
        }
        Ok(reward)
    }

    #[getter]
    fn total_feedback(&self) -> u64 {
        self.state.total_feedback
    }

    fn action_quality(&self, action: &str) -> PyResult<f64> {
        let action: Action = action.parse().map_err(value_err)?;
        Ok(self.state.stats_for(action).q)
    }
}

#[pyfunction]
#[pyo3(signature = (outcome, latency_ms=0.0, token_cost=0.0))]
fn reward(outcome: &str, latency_ms: f64, token_cost: f64) -> PyResult<f64> {
    let outcome = outcome_from_str(outcome, latency_ms, token_cost)?;
    Ok(compute_reward(&outcome, &RewardConfig::default()))
}

#[pyfunction]
#[pyo3(signature = (scores, epsilon=1e-6))]
fn score_distribution(scores: Vec<f64>, epsilon: f64) -> PyResult<Vec<f64>> {
    candidate_distribution(&scores, epsilon).map_err(value_err)
}

#[pyfunction]
fn score_entropy(distribution: Vec<f64>) -> f64 {
    entropy(&distribution)
}

#[pyfunction]
fn score_margin(sorted_scores: Vec<f64>) -> PyResult<f64> {
    margin(&sorted_scores).map_err(value_err)
}

#[pyfunction]
#[pyo3(signature = (expected_reward, fp_probability, cost, mu=2.0, lambda_c=0.1))]
fn risk_adjusted_score(
    expected_reward: f64,
    fp_probability: f64,
    cost: f64,
    mu: f64,
    lambda_c: f64,
) -> f64 {
    lagrangian_score(expected_reward, fp_probability, cost, mu, lambda_c)
}

/// `(expected_inject, expected_abstain, abstain_dominates)` under default
/// reward coefficients.
#[pyfunction]
fn abstention_boundary(
    p_verified: f64,
    p_accepted: f64,
    p_false_positive: f64,
    p_rejected: f64,
    p_correct_abstain: f64,
) -> PyResult<(f64, f64, bool)> {
    expected_rewards(
        p_verified,
        p_accepted,
        p_false_positive,
        p_rejected,
        p_correct_abstain,
        &RewardConfig::default(),
    )
    .map_err(value_err)
}

#[pyfunction]
#[pyo3(signature = (seed, out_dir, replay_seeds=None))]
fn generate_benchmark(
    seed: u64,
    out_dir: PathBuf,
    replay_seeds: Option<Vec<u64>>,
) -> PyResult<BTreeMap<String, u64>> {
    let cfg = GeneratorConfig {
        seed,
        scale: Scale::Smoke,
        replay_seeds: replay_seeds.unwrap_or_else(|| DEFAULT_REPLAY_SEEDS.to_vec()),
    };
    let dataset = generate_artifacts(&cfg, &out_dir).map_err(io_err)?;
    Ok(dataset.manifest.counts.clone())
}

#[pyfunction]
fn validate_benchmark(dir: PathBuf) -> Vec<String> {
    validate_dataset_dir(&dir).iter().map(|v| v.to_string()).collect()
}

#[pyfunction]
#[pyo3(signature = (data_dir, out_dir, suites=vec!["all".to_string()], seeds=None))]
fn run_benchmark(
    data_dir: PathBuf,
    out_dir: PathBuf,
    suites: Vec<String>,
    seeds: Option<Vec<u64>>,
) -> PyResult<String> {
    let suites = parse_suites(&suites).map_err(value_err)?;
    let seeds = seeds.unwrap_or_else(|| DEFAULT_REPLAY_SEEDS.to_vec());
    let dataset = memgate_core::dataset::load_dataset(&data_dir).map_err(io_err)?;
    run_suites(&dataset, &data_dir, &seeds, &suites, &out_dir).map_err(io_err)
}

/// One replay pass of a named policy over a generated dataset; returns the
/// pooled metrics as a dict.
#[pyfunction]
#[pyo3(signature = (kind, data_dir, seeds=None))]
fn replay_policy<'py>(
    py: Python<'py>,
    kind: &str,
    data_dir: PathBuf,
    seeds: Option<Vec<u64>>,
) -> PyResult<Bound<'py, PyDict>> {
    let kind: PolicyKind = kind.parse().map_err(value_err)?;
    let seeds = seeds.unwrap_or_else(|| DEFAULT_REPLAY_SEEDS.to_vec());
    let dataset = memgate_core::dataset::load_dataset(&data_dir).map_err(io_err)?;
    let (_, pooled) =
        memgate_core::harness::run_replay(kind, &dataset, &seeds, &RewardConfig::default())
            .map_err(value_err)?;
    let d = PyDict::new(py);
    d.set_item("success_rate", pooled.success_rate)?;
    d.set_item("fp_rate", pooled.fp_rate)?;
    d.set_item("abstention_rate", pooled.abstention_rate)?;
    d.set_item("verified_reuse_rate", pooled.verified_reuse_rate)?;
    d.set_item("avg_reward", pooled.avg_reward)?;
    d.set_item("cumulative_reward", pooled.cumulative_reward)?;
    d.set_item("regret_proxy", pooled.regret_proxy)?;
    d.set_item("n_events", pooled.n_events)?;
    Ok(d)
}

#[pyfunction]
fn policy_kinds() -> Vec<&'static str> {
    PolicyKind::ALL.iter().map(|k| k.as_str()).collect()
}

#[pyfunction]
fn actions() -> Vec<&'static str> {
    Action::ALL.iter().map(|a| a.as_str()).collect()
}

#[pyfunction]
fn feature_names() -> Vec<&'static str> {
    memgate_core::state::FEATURE_NAMES.to_vec()
}

#[pymodule]
fn memgate(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyBank>()?;
    m.add_class::<PyProfile>()?;
    m.add_class::<PyController>()?;
    m.add_function(wrap_pyfunction!(normalize_context, m)?)?;
    m.add_function(wrap_pyfunction!(retrieve_candidates, m)?)?;
    m.add_function(wrap_pyfunction!(reward, m)?)?;
    m.add_function(wrap_pyfunction!(score_distribution, m)?)?;
    m.add_function(wrap_pyfunction!(score_entropy, m)?)?;
    m.add_function(wrap_pyfunction!(score_margin, m)?)?;
    m.add_function(wrap_pyfunction!(risk_adjusted_score, m)?)?;
    m.add_function(wrap_pyfunction!(abstention_boundary, m)?)?;
    m.add_function(wrap_pyfunction!(generate_benchmark, m)?)?;
    m.add_function(wrap_pyfunction!(validate_benchmark, m)?)?;
    m.add_function(wrap_pyfunction!(run_benchmark, m)?)?;
    m.add_function(wrap_pyfunction!(replay_policy, m)?)?;
    m.add_function(wrap_pyfunction!(policy_kinds, m)?)?;
    m.add_function(wrap_pyfunction!(actions, m)?)?;
    m.add_function(wrap_pyfunction!(feature_names, m)?)?;
    Ok(())
}
