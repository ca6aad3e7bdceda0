//! Baseline optimizers sharing the driver interface: full gradient descent,
//! minibatch SGD, SVRG, and SCSG.
//!
//! All four count evaluations through the same oracle as the nested method
//! and draw batches through keyed streams, so any pair of methods that
//! degenerate into each other under extreme settings (SGD at full batch,
//! SCSG at full anchor and fixed inner length) produce bitwise-identical
//! trajectories, not merely statistically similar ones.

use ndarray::Array1;
use rand::Rng;

use crate::drivers::{budget_left, probe_point, ProbePoint, RunOptions, RunRecord};
use crate::epoch::draw_batch;
use crate::error::{Error, Result};
use crate::objectives::{GradOracle, Objective};
use crate::sampling::{sample_without_replacement, RngStream};

/// Step size `1/L`, the classical full-gradient default.
pub fn gd_default_step<P: Objective>(problem: &P) -> f64 {
    1.0 / problem.smoothness_bound()
}

/// Step size `1/(3 L n^(2/3))`, the nonconvex SVRG regime for unit
/// minibatches with inner length `n`.
pub fn svrg_default_step<P: Objective>(problem: &P) -> f64 {
    let n = problem.n_components() as f64;
    1.0 / (3.0 * problem.smoothness_bound() * n.powf(2.0 / 3.0))
}

/// Step size `1/(3 L B^(2/3))` for an SCSG anchor batch of size `B`.
pub fn scsg_default_step<P: Objective>(problem: &P, base_batch: u64) -> f64 {
    1.0 / (3.0 * problem.smoothness_bound() * (base_batch as f64).powf(2.0 / 3.0))
}

fn check_step(eta: f64) -> Result<()> {
    if eta > 0.0 && eta.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "step size must be positive and finite, got {eta}"
        )))
    }
}

fn check_finite(x: &Array1<f64>, step: u64) -> Result<()> {
    if x.iter().all(|c| c.is_finite()) {
        Ok(())
    } else {
        Err(Error::Diverged { step })
    }
}

#[allow(clippy::too_many_arguments)]
fn make_record(
    algorithm: &str,
    settings: Vec<(String, f64)>,
    trajectory: Vec<ProbePoint>,
    output_point: Array1<f64>,
    total_evals: u64,
    iters: u64,
    epoch_evals: Vec<u64>,
    budget_exhausted: bool,
) -> RunRecord {
    RunRecord {
        algorithm: algorithm.into(),
        settings,
        trajectory,
        output_point,
        total_evals,
        iters,
        epoch_evals,
        budget_exhausted,
    }
}

/// Full gradient descent: `x ← x − η·∇F(x)`, costing `n` per step.
pub fn gd<P: Objective>(
    z0: &Array1<f64>,
    problem: &P,
    steps: u64,
    eta: f64,
    opts: &RunOptions,
) -> Result<RunRecord> {
    check_step(eta)?;
    let mut oracle = GradOracle::new(problem);
    let mut x = z0.clone();
    let mut trajectory = vec![probe_point(&mut oracle, &x, 0)?];
    let mut iters = 0u64;
    let mut budget_exhausted = false;

    for t in 0..steps {
        if !budget_left(oracle.counted(), opts.max_evals) {
            budget_exhausted = true;
            break;
        }
        let g = oracle.full_gradient(&x)?;
        x.zip_mut_with(&g, |xc, &gc| *xc -= eta * gc);
        check_finite(&x, t + 1)?;
        iters = t + 1;
        if iters.is_multiple_of(opts.log_every.max(1)) {
            trajectory.push(probe_point(&mut oracle, &x, iters)?);
        }
    }
    if trajectory.last().map(|p| p.iter) != Some(iters) {
        trajectory.push(probe_point(&mut oracle, &x, iters)?);
    }
    Ok(make_record(
        "gd",
        vec![("eta".into(), eta), ("steps".into(), steps as f64)],
        trajectory,
        x,
        oracle.counted(),
        iters,
        Vec::new(),
        budget_exhausted,
    ))
}

/// Minibatch SGD: `x ← x − η·(1/|I_t|)Σ_{i∈I_t}∇f_i(x)` with `I_t` drawn
/// without replacement, costing `batch` per step. The step-`t` draw comes
/// from `stream.child(t)`.
pub fn sgd<P: Objective>(
    z0: &Array1<f64>,
    problem: &P,
    steps: u64,
    eta: f64,
    batch: u64,
    stream: &RngStream,
    opts: &RunOptions,
) -> Result<RunRecord> {
    check_step(eta)?;
    let n = problem.n_components();
    if batch < 1 || batch > n as u64 {
        return Err(Error::InvalidParameter(format!(
            "batch must be in 1..={n}, got {batch}"
        )));
    }
    let mut oracle = GradOracle::new(problem);
    let mut x = z0.clone();
    let mut trajectory = vec![probe_point(&mut oracle, &x, 0)?];
    let mut iters = 0u64;
    let mut budget_exhausted = false;

    for t in 0..steps {
        if !budget_left(oracle.counted(), opts.max_evals) {
            budget_exhausted = true;
            break;
        }
        let idx = sample_without_replacement(&stream.child(t), n, batch as usize)?;
        let g = oracle.batch_gradient(&idx, &x)?;
        x.zip_mut_with(&g, |xc, &gc| *xc -= eta * gc);
        check_finite(&x, t + 1)?;
        iters = t + 1;
        if iters.is_multiple_of(opts.log_every.max(1)) {
            trajectory.push(probe_point(&mut oracle, &x, iters)?);
        }
    }
    if trajectory.last().map(|p| p.iter) != Some(iters) {
        trajectory.push(probe_point(&mut oracle, &x, iters)?);
    }
    Ok(make_record(
        "sgd",
        vec![
            ("eta".into(), eta),
            ("steps".into(), steps as f64),
            ("batch".into(), batch as f64),
        ],
        trajectory,
        x,
        oracle.counted(),
        iters,
        Vec::new(),
        budget_exhausted,
    ))
}

/// SVRG: per epoch, a full snapshot gradient (cost `n`) followed by
/// `inner_len` corrected steps
/// `x ← x − η·[∇F(x̃) + (1/|I|)Σ_{i∈I}(∇f_i(x) − ∇f_i(x̃))]`,
/// each costing `2·batch`. Epoch cost is exactly `n + 2·inner_len·batch`.
///
/// Epoch `s` draws its step-`t` batch from
/// `stream.child(s).child(0).child(t).child(1)`, the same key a one-level
/// nested schedule uses, so the two methods can be compared draw for draw.
#[allow(clippy::too_many_arguments)]
pub fn svrg<P: Objective>(
    z0: &Array1<f64>,
    problem: &P,
    epochs: u64,
    inner_len: u64,
    eta: f64,
    batch: u64,
    stream: &RngStream,
    opts: &RunOptions,
) -> Result<RunRecord> {
    check_step(eta)?;
    let n = problem.n_components();
    if inner_len < 1 {
        return Err(Error::InvalidParameter(
            "inner length must be at least 1".into(),
        ));
    }
    if batch < 1 || batch > n as u64 {
        return Err(Error::InvalidParameter(format!(
            "batch must be in 1..={n}, got {batch}"
        )));
    }
    let mut oracle = GradOracle::new(problem);
    let mut x = z0.clone();
    let mut trajectory = vec![probe_point(&mut oracle, &x, 0)?];
    let mut epoch_evals = Vec::new();
    let mut iters = 0u64;
    let mut budget_exhausted = false;

    for s in 1..=epochs {
        if !budget_left(oracle.counted(), opts.max_evals) {
            budget_exhausted = true;
            break;
        }
        let before = oracle.counted();
        let epoch_stream = stream.child(s);
        let snapshot = x.clone();
        let g_snap = oracle.full_gradient(&snapshot)?;
        for t in 0..inner_len {
            let idx = draw_batch(&epoch_stream, t, 1, n, batch as usize)?;
            let corr = oracle.batch_gradient_difference(&idx, &x, &snapshot)?;
            x.zip_mut_with(&(&g_snap + &corr), |xc, &vc| *xc -= eta * vc);
            check_finite(&x, iters + 1)?;
            iters += 1;
        }
        epoch_evals.push(oracle.counted() - before);
        if s == epochs || s % opts.log_every.max(1) == 0 {
            trajectory.push(probe_point(&mut oracle, &x, iters)?);
        }
    }
    if trajectory.last().map(|p| p.iter) != Some(iters) {
        trajectory.push(probe_point(&mut oracle, &x, iters)?);
    }
    Ok(make_record(
        "svrg",
        vec![
            ("eta".into(), eta),
            ("epochs".into(), epochs as f64),
            ("inner_len".into(), inner_len as f64),
            ("batch".into(), batch as f64),
        ],
        trajectory,
        x,
        oracle.counted(),
        iters,
        epoch_evals,
        budget_exhausted,
    ))
}

/// Inner-loop length rule for SCSG epochs.
#[derive(Clone, Copy, Debug)]
pub enum InnerLen {
    /// Geometric with success probability `mini/(mini + base)`, so the mean
    /// length is `base/mini`.
    Geometric,
    /// Deterministic length; with a full anchor batch this reduces SCSG to
    /// SVRG exactly.
    Fixed(u64),
}

/// SCSG: per epoch, an anchor gradient over a sampled batch of
/// `min(base_batch, n)` components, then a random number of SVRG-style
/// corrected steps with minibatch `mini_batch`.
///
/// The epoch-`j` anchor set comes from `stream.child(j).child(0).child(0)
/// .child(0)`, inner batches from the same keys SVRG uses, and the
/// geometric length from `stream.child(j).child(2)`.
#[allow(clippy::too_many_arguments)]
pub fn scsg<P: Objective>(
    z0: &Array1<f64>,
    problem: &P,
    epochs: u64,
    base_batch: u64,
    mini_batch: u64,
    inner: InnerLen,
    eta: f64,
    stream: &RngStream,
    opts: &RunOptions,
) -> Result<RunRecord> {
    check_step(eta)?;
    let n = problem.n_components();
    if base_batch < 1 || base_batch > n as u64 {
        return Err(Error::InvalidParameter(format!(
            "base batch must be in 1..={n}, got {base_batch}"
        )));
    }
    if mini_batch < 1 || mini_batch > n as u64 {
        return Err(Error::InvalidParameter(format!(
            "mini batch must be in 1..={n}, got {mini_batch}"
        )));
    }
    let mut oracle = GradOracle::new(problem);
    let mut x = z0.clone();
    let mut trajectory = vec![probe_point(&mut oracle, &x, 0)?];
    let mut epoch_evals = Vec::new();
    let mut iters = 0u64;
    let mut budget_exhausted = false;

    for j in 1..=epochs {
        if !budget_left(oracle.counted(), opts.max_evals) {
            budget_exhausted = true;
            break;
        }
        let before = oracle.counted();
        let epoch_stream = stream.child(j);
        let anchor_idx = draw_batch(&epoch_stream, 0, 0, n, base_batch as usize)?;
        let snapshot = x.clone();
        let g_snap = oracle.batch_gradient(&anchor_idx, &snapshot)?;
        let inner_len = match inner {
            InnerLen::Fixed(l) => l,
            InnerLen::Geometric => {
                let p = mini_batch as f64 / (mini_batch as f64 + base_batch as f64);
                let dist = rand_distr::Geometric::new(p).map_err(|e| {
                    Error::InvalidParameter(format!("bad geometric parameter {p}: {e}"))
                })?;
                epoch_stream.child(2).rng().sample(dist)
            }
        };
        for t in 0..inner_len {
            let idx = draw_batch(&epoch_stream, t, 1, n, mini_batch as usize)?;
            let corr = oracle.batch_gradient_difference(&idx, &x, &snapshot)?;
            x.zip_mut_with(&(&g_snap + &corr), |xc, &vc| *xc -= eta * vc);
            check_finite(&x, iters + 1)?;
            iters += 1;
        }
        epoch_evals.push(oracle.counted() - before);
        if j == epochs || j % opts.log_every.max(1) == 0 {
            trajectory.push(probe_point(&mut oracle, &x, iters)?);
        }
    }
    if trajectory.last().map(|p| p.iter) != Some(iters) {
        trajectory.push(probe_point(&mut oracle, &x, iters)?);
    }
    Ok(make_record(
        "scsg",
        vec![
            ("eta".into(), eta),
            ("epochs".into(), epochs as f64),
            ("base_batch".into(), base_batch as f64),
            ("mini_batch".into(), mini_batch as f64),
        ],
        trajectory,
        x,
        oracle.counted(),
        iters,
        epoch_evals,
        budget_exhausted,
    ))
}
