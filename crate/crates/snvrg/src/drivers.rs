//! Multi-epoch drivers: chained nested-VR epochs, the restart variant for
//! gradient-dominated objectives, and the closed-form parameter choices
//! that size batches, epoch counts, and restart counts from a target
//! accuracy.
//!
//! Every driver owns its evaluation counter and consumes randomness only
//! through child streams of the one it is handed, so a run is a pure
//! function of `(problem, parameters, master seed)`. Trajectory probes
//! (objective value and full gradient norm) are measurement only and are
//! exempt from counting.

use ndarray::Array1;
use rand::Rng;

use crate::epoch::one_epoch_snvrg;
use crate::error::{Error, Result};
use crate::objectives::{GradOracle, Objective};
use crate::sampling::RngStream;
use crate::schedule::ParamSchedule;

/// Driver-level knobs shared by every optimizer.
#[derive(Clone, Copy, Debug)]
pub struct RunOptions {
    /// Stop starting new epochs (or steps) once this many counted
    /// evaluations have been spent. `None` means unbounded.
    pub max_evals: Option<u64>,
    /// Probe the trajectory every this many epochs (or steps, for the
    /// single-loop methods). The start and the final point are always
    /// probed.
    pub log_every: u64,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            max_evals: None,
            log_every: 1,
        }
    }
}

/// Accuracy-driven configuration bundle used by the benchmark harness.
#[derive(Clone, Debug)]
pub struct DriverConfig {
    /// Target accuracy for the stationarity or suboptimality guarantee.
    pub epsilon: f64,
    /// Epochs per nested-VR call.
    pub s_epochs: u64,
    /// Restart stages for the gradient-dominated variant.
    pub u_stages: u64,
    /// Lower bound on the objective, used to form the initial gap
    /// `F(z0) - F_lower_bound`.
    pub f_lower_bound: f64,
    /// Gradient variance bound; estimated at the start point when absent.
    pub sigma_sq: Option<f64>,
    /// The analysis constant scaling batch and epoch counts.
    pub c: f64,
    /// Evaluation budget.
    pub max_evals: Option<u64>,
}

impl Default for DriverConfig {
    fn default() -> Self {
        DriverConfig {
            epsilon: 1e-2,
            s_epochs: 1,
            u_stages: 1,
            f_lower_bound: 0.0,
            sigma_sq: None,
            c: 600.0,
            max_evals: None,
        }
    }
}

impl DriverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "epsilon must be positive and finite, got {}",
                self.epsilon
            )));
        }
        if self.s_epochs < 1 || self.u_stages < 1 {
            return Err(Error::InvalidParameter(
                "epoch and stage counts must be at least 1".into(),
            ));
        }
        if let Some(s) = self.sigma_sq {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "sigma_sq must be nonnegative and finite, got {s}"
                )));
            }
        }
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "c must be positive and finite, got {}",
                self.c
            )));
        }
        Ok(())
    }

    pub fn run_options(&self) -> RunOptions {
        RunOptions {
            max_evals: self.max_evals,
            log_every: 1,
        }
    }
}

/// One measurement along a trajectory. Probes are taken with counting
/// suspended, so they never perturb the reported complexity.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct ProbePoint {
    /// Counted component-gradient evaluations spent so far.
    pub evals: u64,
    /// Optimizer steps taken so far.
    pub iter: u64,
    pub f_value: f64,
    pub grad_norm_sq: f64,
}

/// What every driver hands back.
#[derive(Clone, Debug)]
pub struct RunRecord {
    pub algorithm: String,
    /// Scalar settings snapshot, for reporting.
    pub settings: Vec<(String, f64)>,
    pub trajectory: Vec<ProbePoint>,
    pub output_point: Array1<f64>,
    /// Final counter reading.
    pub total_evals: u64,
    /// Steps taken.
    pub iters: u64,
    /// Counted evaluations per epoch (per step-chunk for single-loop
    /// methods).
    pub epoch_evals: Vec<u64>,
    /// Whether `max_evals` stopped the run before its nominal length.
    pub budget_exhausted: bool,
}

pub(crate) fn probe_point<P: Objective + ?Sized>(
    oracle: &mut GradOracle<'_, P>,
    x: &Array1<f64>,
    iter: u64,
) -> Result<ProbePoint> {
    let evals = oracle.counted();
    let (f_value, grad_norm_sq) = oracle.exempt(|o| -> Result<(f64, f64)> {
        let f = o.value(x)?;
        let g = o.full_gradient(x)?;
        Ok((f, g.dot(&g)))
    })?;
    Ok(ProbePoint {
        evals,
        iter,
        f_value,
        grad_norm_sq,
    })
}

pub(crate) fn budget_left(oracle_counted: u64, max_evals: Option<u64>) -> bool {
    match max_evals {
        Some(cap) => oracle_counted < cap,
        None => true,
    }
}

/// Output of a chained multi-epoch run.
#[derive(Clone, Debug)]
pub struct SnvrgOutput {
    /// Uniformly chosen epoch output, the point the guarantees speak about.
    pub y_out: Array1<f64>,
    /// Final iterate of the last epoch, the chaining point.
    pub z_end: Array1<f64>,
    /// 1-based index of the epoch whose output was chosen; 0 if no epoch
    /// ran.
    pub chosen_epoch: u64,
    pub record: RunRecord,
}

/// Runs `s_epochs` nested-VR epochs chained through each epoch's final
/// iterate, then returns one epoch output chosen uniformly at random.
///
/// Epoch `s` draws from `stream.child(s)`; the uniform choice draws from
/// `stream.child(0)`.
pub fn snvrg<P: Objective>(
    z0: &Array1<f64>,
    problem: &P,
    schedule: &ParamSchedule,
    s_epochs: u64,
    stream: &RngStream,
    opts: &RunOptions,
) -> Result<SnvrgOutput> {
    if s_epochs < 1 {
        return Err(Error::InvalidParameter(
            "epoch count must be at least 1".into(),
        ));
    }
    let mut oracle = GradOracle::new(problem);
    let mut trajectory = vec![probe_point(&mut oracle, z0, 0)?];
    let mut epoch_outputs: Vec<Array1<f64>> = Vec::new();
    let mut epoch_evals = Vec::new();
    let mut z = z0.clone();
    let mut iters = 0u64;
    let mut budget_exhausted = false;

    for s in 1..=s_epochs {
        if !budget_left(oracle.counted(), opts.max_evals) {
            budget_exhausted = true;
            break;
        }
        let out = one_epoch_snvrg(&z, &mut oracle, schedule, &stream.child(s))?;
        z = out.x_end;
        iters += schedule.t_total();
        epoch_evals.push(out.stats.counted_evals);
        epoch_outputs.push(out.x_out);
        if s == s_epochs || s % opts.log_every.max(1) == 0 {
            trajectory.push(probe_point(&mut oracle, &z, iters)?);
        }
    }
    if trajectory.last().map(|p| p.iter) != Some(iters) {
        trajectory.push(probe_point(&mut oracle, &z, iters)?);
    }

    let completed = epoch_outputs.len() as u64;
    let (chosen_epoch, y_out) = if completed == 0 {
        (0, z0.clone())
    } else {
        let pick = stream.child(0).rng().random_range(1..=completed);
        (pick, epoch_outputs[(pick - 1) as usize].clone())
    };

    let record = RunRecord {
        algorithm: "snvrg".into(),
        settings: vec![
            ("s_epochs".into(), s_epochs as f64),
            ("base_batch".into(), schedule.base_batch() as f64),
            ("m".into(), schedule.m()),
            ("t_total".into(), schedule.t_total() as f64),
        ],
        trajectory,
        output_point: y_out.clone(),
        total_evals: oracle.counted(),
        iters,
        epoch_evals,
        budget_exhausted,
    };
    Ok(SnvrgOutput {
        y_out,
        z_end: z,
        chosen_epoch,
        record,
    })
}

/// Output of the restarted variant for gradient-dominated objectives.
#[derive(Clone, Debug)]
pub struct PlOutput {
    pub z_out: Array1<f64>,
    /// `z_0..z_U`: the start point followed by each stage's output.
    pub stage_points: Vec<Array1<f64>>,
    pub record: RunRecord,
}

/// Restarted driver: `u_stages` sequential multi-epoch calls, each started
/// from the previous stage's chosen output. Requires the problem to carry a
/// gradient-dominance constant.
///
/// Stage `u` draws from `stream.child(u)`.
pub fn snvrg_pl<P: Objective>(
    z0: &Array1<f64>,
    problem: &P,
    schedule: &ParamSchedule,
    s_epochs: u64,
    u_stages: u64,
    stream: &RngStream,
    opts: &RunOptions,
) -> Result<PlOutput> {
    if problem.gradient_dominance().is_none() {
        return Err(Error::InvalidProblem(
            "restarted driver needs a gradient-dominance constant".into(),
        ));
    }
    if u_stages < 1 {
        return Err(Error::InvalidParameter(
            "stage count must be at least 1".into(),
        ));
    }

    let mut z = z0.clone();
    let mut stage_points = vec![z0.clone()];
    let mut trajectory: Vec<ProbePoint> = Vec::new();
    let mut epoch_evals = Vec::new();
    let mut evals_spent = 0u64;
    let mut iters = 0u64;
    let mut budget_exhausted = false;

    for u in 1..=u_stages {
        let remaining = opts.max_evals.map(|cap| cap.saturating_sub(evals_spent));
        if remaining == Some(0) {
            budget_exhausted = true;
            break;
        }
        let stage_opts = RunOptions {
            max_evals: remaining,
            log_every: opts.log_every,
        };
        let stage = snvrg(&z, problem, schedule, s_epochs, &stream.child(u), &stage_opts)?;
        for (i, p) in stage.record.trajectory.iter().enumerate() {
            if u > 1 && i == 0 {
                continue;
            }
            trajectory.push(ProbePoint {
                evals: p.evals + evals_spent,
                iter: p.iter + iters,
                ..*p
            });
        }
        evals_spent += stage.record.total_evals;
        iters += stage.record.iters;
        epoch_evals.extend(stage.record.epoch_evals);
        budget_exhausted |= stage.record.budget_exhausted;
        z = stage.y_out;
        stage_points.push(z.clone());
    }

    let record = RunRecord {
        algorithm: "snvrg-pl".into(),
        settings: vec![
            ("s_epochs".into(), s_epochs as f64),
            ("u_stages".into(), u_stages as f64),
            ("base_batch".into(), schedule.base_batch() as f64),
            ("m".into(), schedule.m()),
        ],
        trajectory,
        output_point: z.clone(),
        total_evals: evals_spent,
        iters,
        epoch_evals,
        budget_exhausted,
    };
    Ok(PlOutput {
        z_out: z,
        stage_points,
        record,
    })
}

fn initial_gap<P: Objective>(
    problem: &P,
    z0: &Array1<f64>,
    f_lower_bound: f64,
) -> Result<f64> {
    let mut oracle = GradOracle::new(problem);
    let f0 = oracle.exempt(|o| o.value(z0))?;
    Ok((f0 - f_lower_bound).max(0.0))
}

fn sigma_sq_or_estimate<P: Objective>(
    problem: &P,
    z0: &Array1<f64>,
    sigma_sq: Option<f64>,
) -> Result<f64> {
    match sigma_sq {
        Some(s) => Ok(s),
        None => {
            let mut oracle = GradOracle::new(problem);
            oracle.variance_at(z0)
        }
    }
}

fn ceil_clamped(value: f64, cap: u64) -> u64 {
    if !value.is_finite() || value >= cap as f64 {
        cap
    } else if value <= 0.0 {
        0
    } else {
        value.ceil() as u64
    }
}

/// Batch size and epoch count delivering `E[snorm(grad F)] <= epsilon^2`
/// on a smooth finite sum: `B = min(n, ceil(2 C sigma^2 / eps^2))` floored
/// at 2, `S = max(1, ceil(2 C L gap / (sqrt(B) eps^2)))`.
pub fn stationarity_params<P: Objective>(
    problem: &P,
    z0: &Array1<f64>,
    epsilon: f64,
    sigma_sq: Option<f64>,
    f_lower_bound: f64,
    c: f64,
) -> Result<(u64, u64)> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "epsilon must be positive and finite, got {epsilon}"
        )));
    }
    let n = problem.n_components() as u64;
    let sigma = sigma_sq_or_estimate(problem, z0, sigma_sq)?;
    let b = ceil_clamped(2.0 * c * sigma / (epsilon * epsilon), n).max(2);

    let gap = initial_gap(problem, z0, f_lower_bound)?;
    let l = problem.smoothness_bound();
    let s_raw = 2.0 * c * l * gap / ((b as f64).sqrt() * epsilon * epsilon);
    let s = ceil_clamped(s_raw, u64::MAX).max(1);
    Ok((b, s))
}

/// Batch size, epoch count, and restart count delivering
/// `E[F(z_out) - F*] <= epsilon` under gradient dominance:
/// `B = min(n, ceil(4 C tau sigma^2 / eps))` floored at 2,
/// `S = max(1, ceil(2 C tau L / sqrt(B)))`,
/// `U = max(1, ceil(log2(2 gap / eps)))`.
pub fn restart_params<P: Objective>(
    problem: &P,
    z0: &Array1<f64>,
    epsilon: f64,
    sigma_sq: Option<f64>,
    f_lower_bound: f64,
    c: f64,
) -> Result<(u64, u64, u64)> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "epsilon must be positive and finite, got {epsilon}"
        )));
    }
    let tau = problem.gradient_dominance().ok_or_else(|| {
        Error::InvalidProblem("parameter rule needs a gradient-dominance constant".into())
    })?;
    let n = problem.n_components() as u64;
    let sigma = sigma_sq_or_estimate(problem, z0, sigma_sq)?;
    let b = ceil_clamped(4.0 * c * tau * sigma / epsilon, n).max(2);

    let l = problem.smoothness_bound();
    let s = ceil_clamped(2.0 * c * tau * l / (b as f64).sqrt(), u64::MAX).max(1);

    let gap = initial_gap(problem, z0, f_lower_bound)?;
    let u_raw = (2.0 * gap / epsilon).log2();
    let u = ceil_clamped(u_raw, u64::MAX).max(1);
    Ok((b, s, u))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::{make_problem, Problem, ProblemSpec, ScalarToy};
    use crate::schedule::{ParamSchedule, ScheduleMode};
    use ndarray::arr1;

    fn toy(n: usize, seed: u64) -> Problem {
        make_problem(&ProblemSpec {
            family: "scalar-toy".into(),
            n,
            d: 1,
            seed,
            alpha: None,
        })
        .unwrap()
    }

    #[test]
    fn single_epoch_run_returns_that_epochs_output() {
        let p = toy(30, 1);
        let schedule = ParamSchedule::from_base_batch(4, 1.0, ScheduleMode::Paper).unwrap();
        let out = snvrg(
            &arr1(&[0.9]),
            &p,
            &schedule,
            1,
            &RngStream::new(3),
            &RunOptions::default(),
        )
        .unwrap();
        assert_eq!(out.chosen_epoch, 1);
        assert_eq!(out.record.epoch_evals.len(), 1);
        assert_eq!(out.record.total_evals, 52);
    }

    #[test]
    fn epoch_outputs_are_chosen_uniformly() {
        // S = 4: each epoch should be picked ~1000 times out of 4000;
        // 3σ = 3·√(4000·(1/4)·(3/4)) ≈ 82.
        let p = toy(30, 1);
        let schedule = ParamSchedule::from_base_batch(4, 1.0, ScheduleMode::Paper).unwrap();
        let mut counts = [0u64; 4];
        for seed in 0..4000u64 {
            let out = snvrg(
                &arr1(&[0.9]),
                &p,
                &schedule,
                4,
                &RngStream::new(seed),
                &RunOptions::default(),
            )
            .unwrap();
            counts[(out.chosen_epoch - 1) as usize] += 1;
        }
        for (s, &c) in counts.iter().enumerate() {
            assert!(
                (c as f64 - 1000.0).abs() <= 82.0,
                "epoch {} chosen {c} times",
                s + 1
            );
        }
    }

    #[test]
    fn budget_stops_new_epochs_and_flags_the_record() {
        // Each epoch costs 52; cap 150 admits epochs starting at 0, 52, 104.
        let p = toy(30, 1);
        let schedule = ParamSchedule::from_base_batch(4, 1.0, ScheduleMode::Paper).unwrap();
        let opts = RunOptions {
            max_evals: Some(150),
            log_every: 1,
        };
        let out = snvrg(&arr1(&[0.9]), &p, &schedule, 10, &RngStream::new(5), &opts).unwrap();
        assert_eq!(out.record.epoch_evals, vec![52, 52, 52]);
        assert_eq!(out.record.total_evals, 156);
        assert!(out.record.budget_exhausted);
        assert!(out.chosen_epoch >= 1 && out.chosen_epoch <= 3);
    }

    #[test]
    fn restart_stages_chain_through_epoch_outputs() {
        let p = make_problem(&ProblemSpec {
            family: "pl-quadratic".into(),
            n: 12,
            d: 3,
            seed: 4,
            alpha: None,
        })
        .unwrap();
        let schedule = ParamSchedule::from_base_batch(4, 1.0, ScheduleMode::Paper).unwrap();
        let z0 = arr1(&[0.5, -0.2, 1.0]);
        let out = snvrg_pl(
            &z0,
            &p,
            &schedule,
            2,
            3,
            &RngStream::new(8),
            &RunOptions::default(),
        )
        .unwrap();
        assert_eq!(out.stage_points.len(), 4);
        assert_eq!(out.stage_points[0], z0);
        assert_eq!(out.z_out, *out.stage_points.last().unwrap());
        for w in out.record.trajectory.windows(2) {
            assert!(w[1].evals > w[0].evals, "probe evals must increase");
        }
        assert_eq!(out.record.epoch_evals.len(), 6);
    }

    #[test]
    fn restart_requires_gradient_dominance() {
        let p = make_problem(&ProblemSpec {
            family: "nonconvex-logistic".into(),
            n: 10,
            d: 2,
            seed: 1,
            alpha: None,
        })
        .unwrap();
        let schedule = ParamSchedule::from_base_batch(4, 1.0, ScheduleMode::Paper).unwrap();
        let err = snvrg_pl(
            &arr1(&[0.0, 0.0]),
            &p,
            &schedule,
            1,
            2,
            &RngStream::new(1),
            &RunOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::InvalidProblem(_)));
    }

    #[test]
    fn accuracy_params_match_hand_plugins() {
        // B = min(n, ceil(2·600·σ²/ε²)): σ² = 1, ε = 1 gives min(1000, 1200).
        let p = toy(1000, 2);
        let z0 = arr1(&[0.5]);
        let (b, _) = stationarity_params(&p, &z0, 1.0, Some(1.0), 0.0, 600.0).unwrap();
        assert_eq!(b, 1000);

        // Force B = 1024 via σ² = 1024·ε²/1200, then with the gap pinned to
        // exactly 1 the epoch count is ceil(1200·L/(32·0.01)) = 3750·L.
        let p = toy(2000, 2);
        let eps = 0.1;
        let sigma = 1024.0 * eps * eps / 1200.0;
        let mut oracle = GradOracle::new(&p);
        let f0 = oracle.exempt(|o| o.value(&z0)).unwrap();
        let (b, s) = stationarity_params(&p, &z0, eps, Some(sigma), f0 - 1.0, 600.0).unwrap();
        assert_eq!(b, 1024);
        let l = p.smoothness_bound();
        assert_eq!(s, (3750.0 * l).ceil() as u64);

        // Zero variance floors the batch at 2.
        let (b, _) = stationarity_params(&p, &z0, 1.0, Some(0.0), 0.0, 600.0).unwrap();
        assert_eq!(b, 2);
    }

    #[test]
    fn dominance_params_match_hand_plugins() {
        // All-equal components make a clean τ = 1/(2·q̄) toy.
        let p = ScalarToy::new(&[(1.0, 0.0); 100]).unwrap();
        let z0 = arr1(&[2.0]);
        let tau = p.gradient_dominance().unwrap();

        // σ² = 0: B floors at 2; S = max(1, ceil(2·600·τ·L/√2)).
        let (b, s, _) = restart_params(&p, &z0, 0.5, Some(0.0), 0.0, 600.0).unwrap();
        assert_eq!(b, 2);
        let expect_s = (2.0 * 600.0 * tau * p.smoothness_bound() / 2f64.sqrt()).ceil() as u64;
        assert_eq!(s, expect_s);

        // Gap already below ε/2 clamps the stage count at 1.
        let mut oracle = GradOracle::new(&p);
        let f0 = oracle.exempt(|o| o.value(&z0)).unwrap();
        let (_, _, u) = restart_params(&p, &z0, 0.5, Some(0.0), f0 - 0.1, 600.0).unwrap();
        assert_eq!(u, 1);

        // Gap = 4, ε = 0.5: U = ceil(log2(16)) = 4.
        let (_, _, u) = restart_params(&p, &z0, 0.5, Some(0.0), f0 - 4.0, 600.0).unwrap();
        assert_eq!(u, 4);

        // τσ²/ε huge clamps B at n.
        let (b, _, _) = restart_params(&p, &z0, 1e-9, Some(10.0), 0.0, 600.0).unwrap();
        assert_eq!(b, 100);
    }

    #[test]
    fn config_validation_rejects_bad_values() {
        let mut cfg = DriverConfig::default();
        cfg.validate().unwrap();
        cfg.epsilon = 0.0;
        assert!(cfg.validate().is_err());
        cfg.epsilon = 0.1;
        cfg.s_epochs = 0;
        assert!(cfg.validate().is_err());
        cfg.s_epochs = 1;
        cfg.sigma_sq = Some(-1.0);
        assert!(cfg.validate().is_err());
    }
}
