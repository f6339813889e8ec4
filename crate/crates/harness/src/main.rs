//! `steinmatch` — deterministic particle-matching experiments.
//!
//! `steinmatch run <config.json>` expands a JSON experiment description into
//! a grid of runs and writes `results.csv` (one row per method x grid point
//! x trial) and `summary.csv` (per-group medians) into the output directory.
//! `steinmatch check` runs the built-in invariant suite.
//!
//! Exit codes: 0 success; 2 configuration or I/O error; 3 divergence or
//! rank-check failure under `--strict`, or an invariant-suite failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use steinmatch::check::run_checks;
use steinmatch::config::parse_config;
use steinmatch::experiment::run_experiment;
use steinmatch::report::{emit_csv, emit_summary};

#[derive(Parser)]
#[command(
    name = "steinmatch",
    version,
    about = "Particle-based moment-matching experiments",
    long_about = "Runs deterministic particle-matching experiments against exact \
Monte Carlo baselines and reports moment errors plus kernel diagnostics as CSV. \
Output bytes depend only on the configuration: reruns and different --threads \
values produce identical files."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment configuration and write results.csv / summary.csv.
    Run {
        /// JSON experiment configuration (strict schema; unknown keys are
        /// errors). Defaults are desk scale: d=10 Gaussians, 5-component
        /// d=2 mixtures, 20 trials.
        config: PathBuf,
        /// Output directory; overrides the config's `out` field.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Restore full figure-scale defaults (d=100 Gaussians,
        /// 15-component d=10 mixtures, RBMs with 10 hidden units).
        #[arg(long)]
        paper_scale: bool,
        /// Worker threads (0 = all cores). Falls back to the
        /// STEINMATCH_THREADS environment variable, then to 0.
        #[arg(long)]
        threads: Option<usize>,
        /// Override the config's master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Exit with code 3 if any run diverged or failed its rank check.
        #[arg(long)]
        strict: bool,
    },
    /// Run the built-in invariant suite (derivatives, Stein identity,
    /// discrepancy cross-checks, equation solver).
    Check {
        /// Seed for the randomized checks.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

const EXIT_CONFIG: u8 = 2;
const EXIT_STRICT: u8 = 3;

fn threads_from_env() -> Result<usize, String> {
    match std::env::var("STEINMATCH_THREADS") {
        Ok(raw) => raw
            .trim()
            .parse()
            .map_err(|e| format!("STEINMATCH_THREADS={raw:?} is not a thread count: {e}")),
        Err(_) => Ok(0),
    }
}

fn run_command(
    config: PathBuf,
    out: Option<PathBuf>,
    paper_scale: bool,
    threads: Option<usize>,
    seed: Option<u64>,
    strict: bool,
) -> ExitCode {
    let mut cfg = match parse_config(&config, paper_scale) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    let threads = match threads.map(Ok).unwrap_or_else(threads_from_env) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };

    let outcome = match run_experiment(&cfg, threads) {
        Ok(outcome) => outcome,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    for warning in &outcome.warnings {
        eprintln!("warning: {warning}");
    }

    let out_dir = out.unwrap_or_else(|| cfg.out.clone());
    if let Err(e) = std::fs::create_dir_all(&out_dir) {
        eprintln!("error: cannot create {}: {e}", out_dir.display());
        return ExitCode::from(EXIT_CONFIG);
    }
    let results_path = out_dir.join("results.csv");
    let summary_path = out_dir.join("summary.csv");
    if let Err(e) = emit_csv(&outcome.rows, &results_path) {
        eprintln!("error: {e}");
        return ExitCode::from(EXIT_CONFIG);
    }
    if let Err(e) = emit_summary(&outcome.rows, &summary_path) {
        eprintln!("error: {e}");
        return ExitCode::from(EXIT_CONFIG);
    }
    println!("wrote {} rows to {}", outcome.rows.len(), results_path.display());
    println!("wrote summary to {}", summary_path.display());

    let rank_failures = outcome
        .rows
        .iter()
        .filter(|r| r.rank_ok == Some(false))
        .count();
    if rank_failures > 0 {
        eprintln!("note: {rank_failures} row(s) failed the feature-rank check (rank_ok=false)");
    }
    if strict && (!outcome.warnings.is_empty() || rank_failures > 0) {
        eprintln!("strict mode: treating the above as failure");
        return ExitCode::from(EXIT_STRICT);
    }
    ExitCode::SUCCESS
}

fn check_command(seed: u64) -> ExitCode {
    let outcomes = run_checks(seed);
    let mut all_passed = true;
    for outcome in &outcomes {
        let status = if outcome.passed { "PASS" } else { "FAIL" };
        println!("{status} {} — {}", outcome.name, outcome.detail);
        all_passed &= outcome.passed;
    }
    if all_passed {
        println!("all {} checks passed", outcomes.len());
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_STRICT)
    }
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run {
            config,
            out,
            paper_scale,
            threads,
            seed,
            strict,
        } => run_command(config, out, paper_scale, threads, seed, strict),
        Command::Check { seed } => check_command(seed),
    }
}
