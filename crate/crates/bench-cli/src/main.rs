//! `bench`: seeded optimizer comparisons with reproducible artifacts.
//!
//! Exit codes: 0 on success, 1 when a run fails or an artifact cannot be
//! written, 2 on configuration or usage errors.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod config;
mod curves;
mod runner;
mod verify;

#[derive(Parser)]
#[command(name = "bench", version, about = "Finite-sum optimizer benchmark harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every (algorithm, seed) pair from a JSON experiment config.
    Run {
        /// Path to the experiment config (one JSON document).
        config: PathBuf,
        /// Output directory; overrides the config's output_dir.
        #[arg(long)]
        output: Option<PathBuf>,
        /// Worker threads; defaults to one per core.
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Write theoretical complexity curves over an (n, epsilon) grid.
    Curves {
        /// Comma-separated component counts, e.g. 1e4,1e6,1e8.
        #[arg(long = "n-grid", value_delimiter = ',', required = true)]
        n_grid: Vec<String>,
        /// Comma-separated accuracies, e.g. 1e-1,1e-2,1e-3.
        #[arg(long = "eps-grid", value_delimiter = ',', required = true)]
        eps_grid: Vec<String>,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
        /// Dominance constant; adds the suboptimality-target rows.
        #[arg(long)]
        tau: Option<f64>,
        /// Scale factor applied to every curve value.
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
    },
    /// Run the internal consistency checks and print a pass/fail table.
    Verify,
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run { config, output, jobs } => cmd_run(&config, output, jobs),
        Command::Curves { n_grid, eps_grid, out, tau, scale } => {
            cmd_curves(&n_grid, &eps_grid, tau, scale, &out)
        }
        Command::Verify => cmd_verify(),
    }
}

fn cmd_run(path: &std::path::Path, output: Option<PathBuf>, jobs: Option<usize>) -> ExitCode {
    let mut config = match config::ExperimentConfig::load(path) {
        Ok(c) => c,
        Err(e) => return config_error(&e),
    };
    if let Err(e) = config.apply_seed_override() {
        return config_error(&e);
    }
    let out_dir = match output.or_else(|| config.output_dir.clone()) {
        Some(dir) => dir,
        None => {
            eprintln!("config error: no output directory (set output_dir or pass --output)");
            return ExitCode::from(2);
        }
    };

    match runner::run_experiment(&config, &out_dir, jobs) {
        Ok(summary) => {
            for run in &summary.runs {
                let target = run
                    .evals_to_target
                    .map_or("-".to_string(), |e| e.to_string());
                println!(
                    "{:>10}  seed {:>4}  {:16}  evals {:>10}  to-target {target}",
                    run.algorithm, run.seed, run.status, run.total_evals
                );
            }
            if summary.all_runs_clean() {
                println!("wrote {}", out_dir.join("summary.json").display());
                ExitCode::SUCCESS
            } else {
                eprintln!("one or more runs diverged or errored; see the run summaries");
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("run failed: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn cmd_curves(
    n_grid: &[String],
    eps_grid: &[String],
    tau: Option<f64>,
    scale: f64,
    out: &std::path::Path,
) -> ExitCode {
    let n_grid = match parse_n_grid(n_grid) {
        Ok(v) => v,
        Err(e) => return config_error(&e),
    };
    let eps_grid = match parse_eps_grid(eps_grid) {
        Ok(v) => v,
        Err(e) => return config_error(&e),
    };
    if let Some(t) = tau {
        if !(t > 0.0 && t.is_finite()) {
            eprintln!("config error: tau must be positive and finite, got {t}");
            return ExitCode::from(2);
        }
    }
    if !(scale > 0.0 && scale.is_finite()) {
        eprintln!("config error: scale must be positive and finite, got {scale}");
        return ExitCode::from(2);
    }
    match curves::emit_curves(&n_grid, &eps_grid, tau, scale, out) {
        Ok(()) => {
            println!("wrote {}", out.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("curve emission failed: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn cmd_verify() -> ExitCode {
    let results = verify::run_all();
    if verify::print_table(&results) {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn config_error(e: &anyhow::Error) -> ExitCode {
    eprintln!("config error: {e:#}");
    ExitCode::from(2)
}

/// Component counts arrive as strings so grids can mix `1000000` and `1e6`.
fn parse_n_grid(raw: &[String]) -> anyhow::Result<Vec<u64>> {
    raw.iter()
        .map(|s| {
            let v: f64 = s
                .trim()
                .parse()
                .map_err(|_| anyhow::anyhow!("n-grid entry '{s}' is not a number"))?;
            if !(v >= 1.0 && v.is_finite() && v <= 2f64.powi(53) && v.fract() == 0.0) {
                anyhow::bail!("n-grid entry '{s}' must be a positive integer");
            }
            Ok(v as u64)
        })
        .collect()
}

fn parse_eps_grid(raw: &[String]) -> anyhow::Result<Vec<f64>> {
    raw.iter()
        .map(|s| {
            let v: f64 = s
                .trim()
                .parse()
                .map_err(|_| anyhow::anyhow!("eps-grid entry '{s}' is not a number"))?;
            if !(v > 0.0 && v.is_finite()) {
                anyhow::bail!("eps-grid entry '{s}' must be positive and finite");
            }
            Ok(v)
        })
        .collect()
}
