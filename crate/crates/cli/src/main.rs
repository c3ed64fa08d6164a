//! Command-line entry point: artifact generation, benchmark execution, and
//! report rendering.
//!
//! Exit codes: 0 on success, 1 on validation or runtime failure, 2 on usage
//! errors (clap's default). No environment variables are consulted; runs
//! are fully determined by flags.

use clap::{Parser, Subcommand};
use memgate_core::dataset::{
    generate_artifacts, load_dataset, validate_dataset, GeneratorConfig,
};
use memgate_core::report::{parse_suites, render_report, run_suites, ReportFormat};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "memgate", version, about = "Risk-sensitive issue-memory gating benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the deterministic smoke-scale benchmark artifacts.
    Gen {
        /// Master generator seed.
        #[arg(long, default_value_t = 1337)]
        seed: u64,
        /// Output directory for the dataset.
        #[arg(long)]
        out: PathBuf,
        /// Replay seeds (40 events each).
        #[arg(long, value_delimiter = ',', default_values_t = [1337_u64, 2024])]
        seeds: Vec<u64>,
    },
    /// Run benchmark suites over a generated dataset.
    Bench {
        /// Comma-separated suites: retrieval, paraphrase, hardneg,
        /// abstention, replay, ablation, sweep, budget, hotpath, all.
        #[arg(long = "suite", value_delimiter = ',', default_value = "all")]
        suite: Vec<String>,
        /// Dataset directory produced by `gen`.
        #[arg(long)]
        data: PathBuf,
        /// Report output directory.
        #[arg(long)]
        out: PathBuf,
        /// Replay seeds.
        #[arg(long, value_delimiter = ',', default_values_t = [1337_u64, 2024])]
        seeds: Vec<u64>,
    },
    /// Render a human-readable view of a report directory.
    Report {
        /// Report directory produced by `bench`.
        #[arg(long = "in")]
        input: PathBuf,
        /// Output format: csv, json, or md.
        #[arg(long, default_value = "md")]
        format: String,
    },
}

fn run(cli: Cli) -> Result<(), String> {
    match cli.command {
        Command::Gen { seed, out, seeds } => {
            if seeds.is_empty() {
                return Err("at least one replay seed is required".to_string());
            }
            let cfg = GeneratorConfig {
                seed,
                scale: memgate_core::dataset::Scale::Smoke,
                replay_seeds: seeds,
            };
            let dataset = generate_artifacts(&cfg, &out).map_err(|e| e.to_string())?;
            let violations = validate_dataset(&dataset);
            if !violations.is_empty() {
                for v in &violations {
                    eprintln!("violation: {v}");
                }
                return Err(format!("{} dataset violations", violations.len()));
            }
            println!(
                "wrote smoke dataset (seed {seed}) to {}: {} records, {} queries, {} events",
                out.display(),
                dataset.bank.records.len(),
                dataset.queries.len(),
                dataset.replay_events.len(),
            );
            Ok(())
        }
        Command::Bench { suite, data, out, seeds } => {
            if seeds.is_empty() {
                return Err("at least one replay seed is required".to_string());
            }
            if !data.is_dir() {
                return Err(format!("data directory {} does not exist", data.display()));
            }
            let suites = parse_suites(&suite).map_err(|e| e.to_string())?;
            let dataset = load_dataset(&data).map_err(|e| e.to_string())?;
            let violations = validate_dataset(&dataset);
            if !violations.is_empty() {
                for v in &violations {
                    eprintln!("violation: {v}");
                }
                return Err(format!("{} dataset violations", violations.len()));
            }
            let digest = run_suites(&dataset, &data, &seeds, &suites, &out)
                .map_err(|e| e.to_string())?;
            println!(
                "ran {} suite(s) over {} (manifest {digest}) into {}",
                suites.len(),
                data.display(),
                out.display(),
            );
            Ok(())
        }
        Command::Report { input, format } => {
            if !input.is_dir() {
                return Err(format!("report directory {} does not exist", input.display()));
            }
            let format: ReportFormat = format.parse()?;
            let rendered = render_report(&input, format).map_err(|e| e.to_string())?;
            print!("{rendered}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::FAILURE
        }
    }
}
