//! Executes an experiment config: one run per (algorithm, seed) pair,
//! optionally in parallel, each writing `trajectory.csv` + `summary.json`
//! under its own directory, plus one experiment-level `summary.json`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use ndarray::Array1;
use rayon::prelude::*;
use serde::Serialize;

use snvrg::accounting::epoch_cost_formula;
use snvrg::baselines;
use snvrg::drivers::{self, ProbePoint, RunOptions, RunRecord};
use snvrg::objectives::{make_problem, Objective, Problem, ProblemSpec};
use snvrg::sampling::RngStream;
use snvrg::schedule::{ParamSchedule, ScheduleMode};

use crate::config::{AlgorithmSpec, ExperimentConfig};

/// Constant used by the derived parameter rules when the config does not
/// override it.
const DEFAULT_RULE_CONSTANT: f64 = 600.0;

pub const TRAJECTORY_HEADER: [&str; 4] = ["evals", "iter", "f_value", "grad_norm_sq"];

/// Cost prediction attached to nested-VR runs: the closed-form per-epoch
/// total, its cubed-log upper bound, and the counter census of every epoch
/// actually run.
#[derive(Clone, Debug, Serialize)]
pub struct ComplexitySummary {
    pub predicted_total: u64,
    pub upper_bound: u64,
    pub per_epoch_measured: Vec<u64>,
}

/// Per-run outcome, written as `<label>/<seed>/summary.json`.
#[derive(Clone, Debug, Serialize)]
pub struct RunSummary {
    pub algorithm: String,
    pub seed: u64,
    /// One of `converged`, `completed`, `budget-exhausted`, `diverged`,
    /// `error`. Only the first three leave a trajectory behind.
    pub status: String,
    /// Counted evaluations at the first probe that met the target, if any.
    pub evals_to_target: Option<u64>,
    pub total_evals: u64,
    pub iters: u64,
    pub settings: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_probe: Option<ProbePoint>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub complexity: Option<ComplexitySummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Experiment-level index, written once as `<output>/summary.json`.
#[derive(Clone, Debug, Serialize)]
pub struct ExperimentSummary {
    pub problem: ProblemSpec,
    pub epsilon: f64,
    pub seeds: Vec<u64>,
    pub runs: Vec<RunIndexEntry>,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunIndexEntry {
    pub algorithm: String,
    pub seed: u64,
    pub status: String,
    pub evals_to_target: Option<u64>,
    pub total_evals: u64,
    /// Run directory relative to the experiment root.
    pub path: String,
}

impl ExperimentSummary {
    pub fn all_runs_clean(&self) -> bool {
        self.runs.iter().all(|r| r.status != "diverged" && r.status != "error")
    }
}

enum RunOutcome {
    Finished { record: RunRecord, complexity: Option<ComplexitySummary> },
    Diverged { step: u64 },
}

/// Runs every (algorithm, seed) pair and writes all artifacts under
/// `output_dir`. Divergence is recorded in the run's summary, not returned
/// as an error; only I/O and setup failures abort.
pub fn run_experiment(
    config: &ExperimentConfig,
    output_dir: &Path,
    jobs: Option<usize>,
) -> Result<ExperimentSummary> {
    let problem = make_problem(&config.problem)
        .map_err(|e| anyhow::anyhow!("building problem: {e}"))?;
    fs::create_dir_all(output_dir)
        .with_context(|| format!("creating output directory {}", output_dir.display()))?;

    let pairs: Vec<(&AlgorithmSpec, u64)> = config
        .algorithms
        .iter()
        .flat_map(|alg| config.seeds.iter().map(move |&seed| (alg, seed)))
        .collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .context("building worker pool")?;

    let mut summaries: Vec<RunSummary> = pool.install(|| {
        pairs
            .par_iter()
            .map(|(alg, seed)| {
                let summary = execute_one(&problem, config, alg, *seed);
                let dir = output_dir.join(alg.label()).join(seed.to_string());
                write_run_artifacts(&dir, &summary)?;
                Ok(summary.1)
            })
            .collect::<Result<Vec<_>>>()
    })?;

    summaries.sort_by(|a, b| (&a.algorithm, a.seed).cmp(&(&b.algorithm, b.seed)));
    let runs = summaries
        .iter()
        .map(|s| RunIndexEntry {
            algorithm: s.algorithm.clone(),
            seed: s.seed,
            status: s.status.clone(),
            evals_to_target: s.evals_to_target,
            total_evals: s.total_evals,
            path: format!("{}/{}", s.algorithm, s.seed),
        })
        .collect();

    let experiment = ExperimentSummary {
        problem: config.problem.clone(),
        epsilon: config.epsilon,
        seeds: config.seeds.clone(),
        runs,
    };
    let text = serde_json::to_string_pretty(&experiment).context("encoding experiment summary")?;
    fs::write(output_dir.join("summary.json"), text + "\n")
        .with_context(|| format!("writing {}/summary.json", output_dir.display()))?;
    Ok(experiment)
}

/// Runs one (algorithm, seed) pair. Never fails: algorithm-level errors
/// become `status: error` summaries so the rest of the experiment still
/// runs.
fn execute_one(
    problem: &Problem,
    config: &ExperimentConfig,
    alg: &AlgorithmSpec,
    seed: u64,
) -> (Vec<ProbePoint>, RunSummary) {
    let outcome = dispatch(problem, config, alg, seed);
    let label = alg.label().to_string();
    match outcome {
        Ok(RunOutcome::Finished { record, complexity }) => {
            let pl_target = alg.name == "snvrg-pl";
            let target =
                evals_to_target(&record, config.epsilon, problem.optimum_value(), pl_target);
            let status = if target.is_some() {
                "converged"
            } else if record.budget_exhausted {
                "budget-exhausted"
            } else {
                "completed"
            };
            let summary = RunSummary {
                algorithm: label,
                seed,
                status: status.into(),
                evals_to_target: target,
                total_evals: record.total_evals,
                iters: record.iters,
                settings: record.settings.iter().cloned().collect(),
                final_probe: record.trajectory.last().copied(),
                complexity,
                error: None,
            };
            (record.trajectory, summary)
        }
        Ok(RunOutcome::Diverged { step }) => {
            let summary = RunSummary {
                algorithm: label,
                seed,
                status: "diverged".into(),
                evals_to_target: None,
                total_evals: 0,
                iters: step,
                settings: BTreeMap::new(),
                final_probe: None,
                complexity: None,
                error: Some(format!("iterate left the finite range at step {step}")),
            };
            (Vec::new(), summary)
        }
        Err(e) => {
            let summary = RunSummary {
                algorithm: label,
                seed,
                status: "error".into(),
                evals_to_target: None,
                total_evals: 0,
                iters: 0,
                settings: BTreeMap::new(),
                final_probe: None,
                complexity: None,
                error: Some(format!("{e:#}")),
            };
            (Vec::new(), summary)
        }
    }
}

/// First probe meeting the target: squared gradient norm at most epsilon
/// squared, or, for restarted runs with a known optimum, suboptimality at
/// most epsilon.
fn evals_to_target(
    record: &RunRecord,
    epsilon: f64,
    optimum: Option<f64>,
    pl_target: bool,
) -> Option<u64> {
    record
        .trajectory
        .iter()
        .find(|p| {
            if pl_target {
                match optimum {
                    Some(fstar) => p.f_value - fstar <= epsilon,
                    None => false,
                }
            } else {
                p.grad_norm_sq <= epsilon * epsilon
            }
        })
        .map(|p| p.evals)
}

fn dispatch(
    problem: &Problem,
    config: &ExperimentConfig,
    alg: &AlgorithmSpec,
    seed: u64,
) -> Result<RunOutcome> {
    let n = problem.n_components() as u64;
    let d = problem.dim();
    let z0 = Array1::<f64>::zeros(d);
    let stream = RngStream::new(seed);
    let opts = RunOptions { max_evals: config.eval_budget, log_every: config.log_every };
    let budget = config.eval_budget;

    let finished = |record: snvrg::Result<RunRecord>| -> Result<RunOutcome> {
        match record {
            Ok(record) => Ok(RunOutcome::Finished { record, complexity: None }),
            Err(snvrg::Error::Diverged { step }) => Ok(RunOutcome::Diverged { step }),
            Err(e) => Err(e.into()),
        }
    };

    match alg.name.as_str() {
        "gd" => {
            let steps = alg
                .count_hyper("steps")?
                .or(budget.map(|b| (b / n.max(1)).max(1)))
                .unwrap_or(200);
            let eta = alg.hyper("step").unwrap_or_else(|| baselines::gd_default_step(problem));
            finished(baselines::gd(&z0, problem, steps, eta, &opts))
        }
        "sgd" => {
            let batch = alg.count_hyper("batch")?.unwrap_or(1).max(1);
            let steps = alg
                .count_hyper("steps")?
                .or(budget.map(|b| (b / batch).max(1)))
                .unwrap_or(1000);
            let eta = alg
                .hyper("step")
                .unwrap_or(1.0 / (problem.smoothness_bound() * (steps.max(1) as f64).sqrt()));
            finished(baselines::sgd(&z0, problem, steps, eta, batch, &stream, &opts))
        }
        "svrg" => {
            let epochs = alg.count_hyper("epochs")?.unwrap_or(10);
            let inner_len = alg.count_hyper("inner_len")?.unwrap_or(n).max(1);
            let batch = alg.count_hyper("batch")?.unwrap_or(1).max(1);
            let eta = alg.hyper("step").unwrap_or_else(|| baselines::svrg_default_step(problem));
            finished(baselines::svrg(&z0, problem, epochs, inner_len, eta, batch, &stream, &opts))
        }
        "scsg" => {
            let epochs = alg.count_hyper("epochs")?.unwrap_or(10);
            let default_base =
                (2.0 * DEFAULT_RULE_CONSTANT / (config.epsilon * config.epsilon)).ceil();
            let base = alg
                .count_hyper("base_batch")?
                .unwrap_or((default_base.min(n as f64)) as u64)
                .clamp(2, n.max(2));
            let mini = alg.count_hyper("mini_batch")?.unwrap_or(1).max(1);
            let inner = match alg.count_hyper("inner_len")? {
                None | Some(0) => baselines::InnerLen::Geometric,
                Some(len) => baselines::InnerLen::Fixed(len),
            };
            let eta = alg
                .hyper("step")
                .unwrap_or_else(|| baselines::scsg_default_step(problem, base));
            finished(baselines::scsg(&z0, problem, epochs, base, mini, inner, eta, &stream, &opts))
        }
        "snvrg" => {
            let (schedule, s_epochs) = nested_schedule(problem, config, alg, &z0, false)?;
            let complexity = complexity_for(&schedule)?;
            match drivers::snvrg(&z0, problem, &schedule, s_epochs, &stream, &opts) {
                Ok(out) => Ok(RunOutcome::Finished {
                    complexity: Some(complexity.with_epochs(&out.record)),
                    record: out.record,
                }),
                Err(snvrg::Error::Diverged { step }) => Ok(RunOutcome::Diverged { step }),
                Err(e) => Err(e.into()),
            }
        }
        "snvrg-pl" => {
            let (schedule, s_epochs) = nested_schedule(problem, config, alg, &z0, true)?;
            let u_stages = match alg.count_hyper("stages")? {
                Some(u) => u.max(1),
                None => derived_stage_count(problem, config, alg, &z0)?,
            };
            let complexity = complexity_for(&schedule)?;
            match drivers::snvrg_pl(&z0, problem, &schedule, s_epochs, u_stages, &stream, &opts) {
                Ok(out) => Ok(RunOutcome::Finished {
                    complexity: Some(complexity.with_epochs(&out.record)),
                    record: out.record,
                }),
                Err(snvrg::Error::Diverged { step }) => Ok(RunOutcome::Diverged { step }),
                Err(e) => Err(e.into()),
            }
        }
        other => bail!("unknown algorithm '{other}'"),
    }
}

struct PredictedCost {
    predicted_total: u64,
    upper_bound: u64,
}

impl PredictedCost {
    fn with_epochs(self, record: &RunRecord) -> ComplexitySummary {
        ComplexitySummary {
            predicted_total: self.predicted_total,
            upper_bound: self.upper_bound,
            per_epoch_measured: record.epoch_evals.clone(),
        }
    }
}

fn complexity_for(schedule: &ParamSchedule) -> Result<PredictedCost> {
    let report = epoch_cost_formula(schedule).map_err(anyhow::Error::from)?;
    Ok(PredictedCost {
        predicted_total: report.predicted_total,
        upper_bound: report.upper_bound,
    })
}

/// Builds the epoch schedule and epoch count for a nested-VR entry. Paper
/// mode derives both from the problem via the accuracy-driven parameter
/// rules (overridable); practical mode reads them from the hyperparameters.
fn nested_schedule(
    problem: &Problem,
    config: &ExperimentConfig,
    alg: &AlgorithmSpec,
    z0: &Array1<f64>,
    restarted: bool,
) -> Result<(ParamSchedule, u64)> {
    let n = problem.n_components() as u64;
    let smoothness = problem.smoothness_bound();
    if alg.paper_mode() {
        let c = alg.hyper("c").unwrap_or(DEFAULT_RULE_CONSTANT);
        let sigma_sq = alg.hyper("sigma_sq");
        let f_lower = alg.hyper("f_lower_bound").unwrap_or(0.0);
        let (derived_b, derived_s) = if restarted {
            let (b, s, _) =
                drivers::restart_params(problem, z0, config.epsilon, sigma_sq, f_lower, c)?;
            (b, s)
        } else {
            drivers::stationarity_params(problem, z0, config.epsilon, sigma_sq, f_lower, c)?
        };
        let base = alg.count_hyper("base_batch")?.unwrap_or(derived_b).max(2);
        let s_epochs = alg.count_hyper("epochs")?.unwrap_or(derived_s).max(1);
        let schedule = ParamSchedule::from_base_batch(base, smoothness, ScheduleMode::Paper)?;
        Ok((schedule, s_epochs))
    } else {
        let base = alg.count_hyper("base_batch")?.unwrap_or(n).max(2);
        let s_epochs = alg.count_hyper("epochs")?.unwrap_or(10).max(1);
        let step_scale = alg.hyper("step_scale").unwrap_or(1.0);
        let batch_scale = alg.hyper("batch_scale").unwrap_or(1.0);
        let schedule = ParamSchedule::from_base_batch(
            base,
            smoothness,
            ScheduleMode::Practical { step_scale, batch_scale },
        )?;
        Ok((schedule, s_epochs))
    }
}

fn derived_stage_count(
    problem: &Problem,
    config: &ExperimentConfig,
    alg: &AlgorithmSpec,
    z0: &Array1<f64>,
) -> Result<u64> {
    if alg.paper_mode() {
        let c = alg.hyper("c").unwrap_or(DEFAULT_RULE_CONSTANT);
        let sigma_sq = alg.hyper("sigma_sq");
        let f_lower = alg.hyper("f_lower_bound").unwrap_or(0.0);
        let (_, _, u) =
            drivers::restart_params(problem, z0, config.epsilon, sigma_sq, f_lower, c)?;
        Ok(u)
    } else {
        Ok(5)
    }
}

/// Writes `trajectory.csv` (fixed header, one row per probe) and
/// `summary.json` into the run directory.
fn write_run_artifacts(dir: &Path, run: &(Vec<ProbePoint>, RunSummary)) -> Result<()> {
    let (trajectory, summary) = run;
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;

    let csv_path = dir.join("trajectory.csv");
    let mut writer = csv::Writer::from_path(&csv_path)
        .with_context(|| format!("opening {}", csv_path.display()))?;
    writer.write_record(TRAJECTORY_HEADER)?;
    for p in trajectory {
        writer.write_record(&[
            p.evals.to_string(),
            p.iter.to_string(),
            p.f_value.to_string(),
            p.grad_norm_sq.to_string(),
        ])?;
    }
    writer.flush().with_context(|| format!("writing {}", csv_path.display()))?;

    let json = serde_json::to_string_pretty(summary).context("encoding run summary")?;
    fs::write(dir.join("summary.json"), json + "\n")
        .with_context(|| format!("writing {}/summary.json", dir.display()))?;
    Ok(())
}
