//! Benchmark orchestration and report rendering.
//!
//! `run_suites` executes the requested experiment families over one dataset
//! and writes one CSV per family plus `summary.json`. Every report embeds
//! the generator manifest digest; a bench run refuses to mix its output
//! into a directory that was produced from different data. Hot-path
//! timings live only in `hotpath.csv`, so byte-level determinism checks can
//! exclude exactly one file.

use crate::baselines::PolicyKind;
use crate::canon::{self, ObjWriter};
use crate::dataset::Dataset;
use crate::harness::{
    eval_retrieval, run_ablation, run_abstention, run_context_budget, run_hard_negative,
    run_hotpath, run_replay, run_reward_sweep, AblationVariant, HarnessError, RetrievalMethod,
    HOTPATH_DECISIONS,
};
use crate::policy::RewardConfig;
use sha2::{Digest, Sha256};
use std::fs;
use std::path::Path;
use std::str::FromStr;
use thiserror::Error;

/// The nine experiment families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Suite {
    Retrieval,
    Paraphrase,
    Hardneg,
    Abstention,
    Replay,
    Ablation,
    Sweep,
    Budget,
    Hotpath,
}

impl Suite {
    pub const ALL: [Suite; 9] = [
        Suite::Retrieval,
        Suite::Paraphrase,
        Suite::Hardneg,
        Suite::Abstention,
        Suite::Replay,
        Suite::Ablation,
        Suite::Sweep,
        Suite::Budget,
        Suite::Hotpath,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Suite::Retrieval => "retrieval",
            Suite::Paraphrase => "paraphrase",
            Suite::Hardneg => "hardneg",
            Suite::Abstention => "abstention",
            Suite::Replay => "replay",
            Suite::Ablation => "ablation",
            Suite::Sweep => "sweep",
            Suite::Budget => "budget",
            Suite::Hotpath => "hotpath",
        }
    }

    pub fn csv_name(&self) -> &'static str {
        match self {
            Suite::Retrieval => "retrieval.csv",
            Suite::Paraphrase => "paraphrase.csv",
            Suite::Hardneg => "hardneg.csv",
            Suite::Abstention => "abstention.csv",
            Suite::Replay => "replay.csv",
            Suite::Ablation => "ablation.csv",
            Suite::Sweep => "sweep.csv",
            Suite::Budget => "budget.csv",
            Suite::Hotpath => "hotpath.csv",
        }
    }
}

impl FromStr for Suite {
    type Err = ReportError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Suite::ALL
            .iter()
            .find(|suite| suite.as_str() == s)
            .copied()
            .ok_or_else(|| ReportError::UnknownSuite(s.to_string()))
    }
}

/// Expand a suite list, where `all` means every family.
pub fn parse_suites(names: &[String]) -> Result<Vec<Suite>, ReportError> {
    let mut suites = Vec::new();
    for name in names {
        if name == "all" {
            return Ok(Suite::ALL.to_vec());
        }
        let suite: Suite = name.parse()?;
        if !suites.contains(&suite) {
            suites.push(suite);
        }
    }
    if suites.is_empty() {
        Ok(Suite::ALL.to_vec())
    } else {
        Ok(suites)
    }
}

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("unknown suite: {0}")]
    UnknownSuite(String),
    #[error("io failure: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error("report directory {dir} was produced from different data (manifest digest {found} != {expected})")]
    MismatchedData { dir: String, expected: String, found: String },
    #[error("missing report file: {0}")]
    MissingReport(String),
    #[error("malformed summary.json: {0}")]
    MalformedSummary(String),
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

/// Digest of the dataset's manifest file content.
pub fn manifest_digest(data_dir: &Path) -> Result<String, ReportError> {
    let bytes = fs::read(data_dir.join("manifest.json"))?;
    Ok(sha256_hex(&bytes))
}

fn f(x: f64) -> String {
    canon::fmt_f64(x)
}

// ---------------------------------------------------------------------------
// Suite execution
// ---------------------------------------------------------------------------

struct CsvBuilder {
    out: String,
}

impl CsvBuilder {
    fn new(header: &str) -> Self {
        Self { out: format!("{header}\n") }
    }

    fn row(&mut self, fields: &[String]) {
        self.out.push_str(&fields.join(","));
        self.out.push('\n');
    }

    fn finish(self) -> String {
        self.out
    }
}

fn retrieval_csv(dataset: &Dataset) -> Result<String, ReportError> {
    let mut csv = CsvBuilder::new("method,recall_at_1,recall_at_3,mrr,ndcg_at_3,top1_accuracy,n_queries");
    for method in RetrievalMethod::ALL {
        let m = eval_retrieval(method, &dataset.queries, &dataset.bank)?;
        csv.row(&[
            method.as_str().to_string(),
            f(m.recall_at_1),
            f(m.recall_at_3),
            f(m.mrr),
            f(m.ndcg_at_3),
            f(m.top1_accuracy),
            m.n_queries.to_string(),
        ]);
    }
    Ok(csv.finish())
}

fn paraphrase_csv(dataset: &Dataset) -> Result<String, ReportError> {
    let mut csv = CsvBuilder::new(
        "method,original_recall_at_1,paraphrase_recall_at_1,original_mrr,paraphrase_mrr,n_original,n_paraphrase",
    );
    for method in RetrievalMethod::ALL {
        let original = eval_retrieval(method, &dataset.queries, &dataset.bank)?;
        let paraphrase = eval_retrieval(method, &dataset.paraphrases, &dataset.bank)?;
        csv.row(&[
            method.as_str().to_string(),
            f(original.recall_at_1),
            f(paraphrase.recall_at_1),
            f(original.mrr),
            f(paraphrase.mrr),
            original.n_queries.to_string(),
            paraphrase.n_queries.to_string(),
        ]);
    }
    Ok(csv.finish())
}

fn hardneg_csv(dataset: &Dataset, seed: u64, cfg: &RewardConfig) -> String {
    let mut csv = CsvBuilder::new(
        "method,false_positive_rate,unsafe_injection_rate,correct_safe_non_injection_rate,wrong_abstention_rate,n_cases",
    );
    for kind in PolicyKind::ALL {
        let m = run_hard_negative(kind, &dataset.hard_negatives, &dataset.bank, seed, cfg);
        csv.row(&[
            kind.as_str().to_string(),
            f(m.false_positive_rate),
            f(m.unsafe_injection_rate),
            f(m.correct_abstention_rate),
            f(m.wrong_abstention_rate),
            m.n_cases.to_string(),
        ]);
    }
    csv.finish()
}

fn abstention_csv(dataset: &Dataset, seed: u64, cfg: &RewardConfig) -> String {
    let mut csv = CsvBuilder::new(
        "method,false_positive_rate,unsafe_injection_rate,correct_abstention_rate,wrong_abstention_rate,n_cases",
    );
    for kind in PolicyKind::ALL {
        let m = run_abstention(
            kind,
            &dataset.hard_negatives,
            &dataset.queries,
            &dataset.bank,
            seed,
            cfg,
        );
        csv.row(&[
            kind.as_str().to_string(),
            f(m.false_positive_rate),
            f(m.unsafe_injection_rate),
            f(m.correct_abstention_rate),
            f(m.wrong_abstention_rate),
            m.n_cases.to_string(),
        ]);
    }
    csv.finish()
}

fn replay_csv(dataset: &Dataset, seeds: &[u64], cfg: &RewardConfig) -> Result<String, ReportError> {
    let mut csv = CsvBuilder::new(
        "method,seed,success_rate,fp_rate,abstention_rate,verified_reuse_rate,avg_reward,cumulative_reward,regret_proxy,n_events",
    );
    for kind in PolicyKind::ALL {
        let (per_seed, pooled) = run_replay(kind, dataset, seeds, cfg)?;
        for (seed, m) in &per_seed {
            csv.row(&[
                kind.as_str().to_string(),
                seed.to_string(),
                f(m.success_rate),
                f(m.fp_rate),
                f(m.abstention_rate),
                f(m.verified_reuse_rate),
                f(m.avg_reward),
                f(m.cumulative_reward),
                f(m.regret_proxy),
                m.n_events.to_string(),
            ]);
        }
        csv.row(&[
            kind.as_str().to_string(),
            "pooled".to_string(),
            f(pooled.success_rate),
            f(pooled.fp_rate),
            f(pooled.abstention_rate),
            f(pooled.verified_reuse_rate),
            f(pooled.avg_reward),
            f(pooled.cumulative_reward),
            f(pooled.regret_proxy),
            pooled.n_events.to_string(),
        ]);
    }
    Ok(csv.finish())
}

fn ablation_csv(dataset: &Dataset, seeds: &[u64], cfg: &RewardConfig) -> Result<String, ReportError> {
    let mut csv = CsvBuilder::new(
        "variant,success_rate,fp_rate,abstention_rate,cumulative_reward,regret_proxy,hardneg_fp_rate,hardneg_unsafe_rate,hardneg_safe_rate,n_events",
    );
    for variant in AblationVariant::ALL {
        let (replay, safety) = run_ablation(variant, dataset, seeds, cfg)?;
        csv.row(&[
            variant.as_str().to_string(),
            f(replay.success_rate),
            f(replay.fp_rate),
            f(replay.abstention_rate),
            f(replay.cumulative_reward),
            f(replay.regret_proxy),
            f(safety.false_positive_rate),
            f(safety.unsafe_injection_rate),
            f(safety.correct_abstention_rate),
            replay.n_events.to_string(),
        ]);
    }
    Ok(csv.finish())
}

fn sweep_csv(dataset: &Dataset, seeds: &[u64]) -> Result<String, ReportError> {
    let mut csv = CsvBuilder::new(
        "name,gamma,alpha,beta,kappa,lambda,scaled,success_rate,fp_rate,cumulative_reward,utility",
    );
    for result in run_reward_sweep(dataset, seeds)? {
        csv.row(&[
            result.name.clone(),
            f(result.config.gamma),
            f(result.config.alpha),
            f(result.config.beta),
            f(result.config.kappa),
            f(result.config.lambda),
            result.scaled.to_string(),
            f(result.pooled.success_rate),
            f(result.pooled.fp_rate),
            f(result.pooled.cumulative_reward),
            f(result.utility),
        ]);
    }
    Ok(csv.finish())
}

fn budget_csv(dataset: &Dataset) -> String {
    let report = run_context_budget(&dataset.context_budget);
    let mut csv = CsvBuilder::new(
        "mode,mean_tokens,mean_latency_ms,mean_success,mean_fp_influence,utility,n_cases",
    );
    for summary in &report.per_mode {
        csv.row(&[
            summary.mode.as_str().to_string(),
            f(summary.mean_tokens),
            f(summary.mean_latency_ms),
            f(summary.mean_success),
            f(summary.mean_fp_influence),
            f(summary.utility),
            summary.n_cases.to_string(),
        ]);
    }
    csv.finish()
}

fn hotpath_csv(dataset: &Dataset, seeds: &[u64], cfg: &RewardConfig) -> Result<String, ReportError> {
    let seed = seeds.first().copied().unwrap_or(1337);
    let results = run_hotpath(&PolicyKind::ALL, dataset, HOTPATH_DECISIONS, seed, cfg)?;
    let mut csv = CsvBuilder::new("method,mean_us,p95_us,n_decisions");
    for (kind, stats) in results {
        csv.row(&[
            kind.as_str().to_string(),
            format!("{:.3}", stats.mean_us),
            format!("{:.3}", stats.p95_us),
            stats.n_decisions.to_string(),
        ]);
    }
    Ok(csv.finish())
}

/// Execute the requested suites against `dataset` and write reports into
/// `out_dir`. Returns the manifest digest embedded in the summary.
pub fn run_suites(
    dataset: &Dataset,
    data_dir: &Path,
    seeds: &[u64],
    suites: &[Suite],
    out_dir: &Path,
) -> Result<String, ReportError> {
    let cfg = RewardConfig::default();
    let digest = manifest_digest(data_dir)?;

    // Refuse to mix reports generated from different data.
    let summary_path = out_dir.join("summary.json");
    if summary_path.exists() {
        let existing = fs::read_to_string(&summary_path)?;
        if let Some(found) = read_summary_digest(&existing) {
            if found != digest {
                return Err(ReportError::MismatchedData {
                    dir: out_dir.display().to_string(),
                    expected: digest,
                    found,
                });
            }
        }
    }
    fs::create_dir_all(out_dir)?;

    let policy_seed = seeds.first().copied().unwrap_or(1337);
    let mut ran: Vec<Suite> = Vec::new();
    for &suite in suites {
        let csv = match suite {
            Suite::Retrieval => retrieval_csv(dataset)?,
            Suite::Paraphrase => paraphrase_csv(dataset)?,
            Suite::Hardneg => hardneg_csv(dataset, policy_seed, &cfg),
            Suite::Abstention => abstention_csv(dataset, policy_seed, &cfg),
            Suite::Replay => replay_csv(dataset, seeds, &cfg)?,
            Suite::Ablation => ablation_csv(dataset, seeds, &cfg)?,
            Suite::Sweep => sweep_csv(dataset, seeds)?,
            Suite::Budget => budget_csv(dataset),
            Suite::Hotpath => hotpath_csv(dataset, seeds, &cfg)?,
        };
        fs::write(out_dir.join(suite.csv_name()), csv)?;
        ran.push(suite);
    }
    ran.sort();

    let mut w = ObjWriter::new();
    w.field_u64("dataset_seed", dataset.manifest.seed);
    w.field_str("manifest_digest", &digest);
    let mut seeds_json = String::from("[");
    for (i, s) in seeds.iter().enumerate() {
        if i > 0 {
            seeds_json.push(',');
        }
        seeds_json.push_str(&s.to_string());
    }
    seeds_json.push(']');
    w.field_raw("replay_seeds", &seeds_json);
    w.field_str_array("suites", ran.iter().map(|s| s.as_str()));
    let mut summary = w.finish();
    summary.push('\n');
    fs::write(&summary_path, summary)?;
    Ok(digest)
}

fn read_summary_digest(summary: &str) -> Option<String> {
    let parsed: serde_json::Value = serde_json::from_str(summary).ok()?;
    parsed["manifest_digest"].as_str().map(str::to_string)
}

// ---------------------------------------------------------------------------
// Report rendering
// ---------------------------------------------------------------------------

/// Output format for the `report` command.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
    Md,
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            "md" => Ok(ReportFormat::Md),
            other => Err(format!("unknown format: {other}")),
        }
    }
}

/// Render the report directory. Pure function of the directory content.
pub fn render_report(report_dir: &Path, format: ReportFormat) -> Result<String, ReportError> {
    let summary_path = report_dir.join("summary.json");
    if !summary_path.exists() {
        return Err(ReportError::MissingReport("summary.json".to_string()));
    }
    let summary_text = fs::read_to_string(&summary_path)?;
    let summary: serde_json::Value = serde_json::from_str(&summary_text)
        .map_err(|e| ReportError::MalformedSummary(e.to_string()))?;

    match format {
        ReportFormat::Json => Ok(summary_text),
        ReportFormat::Csv => {
            let mut out = String::new();
            for suite in Suite::ALL {
                let path = report_dir.join(suite.csv_name());
                if path.exists() {
                    out.push_str(&format!("== {} ==\n", suite.csv_name()));
                    out.push_str(&fs::read_to_string(path)?);
                    out.push('\n');
                }
            }
            Ok(out)
        }
        ReportFormat::Md => render_markdown(report_dir, &summary),
    }
}

fn parse_csv(text: &str) -> (Vec<String>, Vec<Vec<String>>) {
    let mut lines = text.lines();
    let header: Vec<String> = lines
        .next()
        .unwrap_or_default()
        .split(',')
        .map(str::to_string)
        .collect();
    let rows = lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect();
    (header, rows)
}

fn as_percent(field: &str) -> String {
    match field.parse::<f64>() {
        Ok(x) if (0.0..=1.0).contains(&x) => format!("{:.1}%", x * 100.0),
        _ => field.to_string(),
    }
}

fn md_table(header: &[String], rows: &[Vec<String>], percent_cols: &[usize]) -> String {
    let mut out = String::new();
    out.push_str(&format!("| {} |\n", header.join(" | ")));
    out.push_str(&format!("|{}\n", "---|".repeat(header.len())));
    for row in rows {
        let rendered: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(i, field)| {
                if percent_cols.contains(&i) {
                    as_percent(field)
                } else {
                    field.clone()
                }
            })
            .collect();
        out.push_str(&format!("| {} |\n", rendered.join(" | ")));
    }
    out
}

fn render_markdown(report_dir: &Path, summary: &serde_json::Value) -> Result<String, ReportError> {
    let mut out = String::new();
    out.push_str("# Benchmark report\n\n");
    if let Some(digest) = summary["manifest_digest"].as_str() {
        out.push_str(&format!(
            "Dataset seed {} | manifest digest `{}`\n\n",
            summary["dataset_seed"], digest
        ));
    }

    let sections: [(Suite, &str, &[usize]); 9] = [
        (Suite::Retrieval, "Canonical retrieval", &[1, 2, 3, 4, 5]),
        (Suite::Paraphrase, "Paraphrase robustness", &[1, 2, 3, 4]),
        (Suite::Hardneg, "Hard-negative safety", &[1, 2, 3, 4]),
        (Suite::Abstention, "Abstention set", &[1, 2, 3, 4]),
        (Suite::Replay, "Offline replay", &[2, 3, 4, 5]),
        (Suite::Ablation, "Ablations", &[1, 2, 3, 6, 7, 8]),
        (Suite::Sweep, "Reward sweep", &[7, 8]),
        (Suite::Budget, "Context budget", &[3, 4]),
        (Suite::Hotpath, "Hot-path latency (µs)", &[]),
    ];
    for (suite, title, percents) in sections {
        let path = report_dir.join(suite.csv_name());
        if !path.exists() {
            continue;
        }
        let (header, rows) = parse_csv(&fs::read_to_string(path)?);
        out.push_str(&format!("## {title}\n\n"));
        out.push_str(&md_table(&header, &rows, percents));
        out.push('\n');
    }
    Ok(out)
}
