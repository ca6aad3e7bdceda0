//! One epoch of nested variance-reduced gradient descent.
//!
//! An epoch holds `K+1` reference points `x_ref[0..=K]` and reference
//! gradients `g_ref[0..=K]`. Level 0 is anchored at the epoch start with a
//! size-`B` batch gradient; level `l ≥ 1` stores a batch-mean gradient
//! difference between its two neighboring reference points and refreshes
//! every `Π_{j>l} T_j` steps. The update direction is the telescoping sum
//! `v_t = Σ_l g_ref[l]` and the step is `x_{t+1} = x_t − v_t/(10M)`.
//!
//! Two implementations of the identical procedure are provided: a flat loop
//! driven by [`ParamSchedule::update_level`], and an explicitly nested loop.
//! Both consume randomness through streams keyed by `(step, level)`, so they
//! produce bitwise-identical trajectories; the pair acts as a structural
//! cross-check on the refresh arithmetic.

use ndarray::Array1;
use rand::Rng;

use crate::error::{Error, Result};
use crate::objectives::{GradOracle, Objective};
use crate::sampling::{sample_without_replacement, IndexSet, RngStream};
use crate::schedule::ParamSchedule;

/// Epoch-stream labels: batch draws live under `(DRAW, t, level)`, the
/// output-iterate pick under `PICK_OUT`.
const DRAW: u64 = 0;
const PICK_OUT: u64 = 1;

/// Draws the index set for a refresh of `level` at step `t`. Keyed purely by
/// `(stream, t, level)` so independent loop structures agree on every draw.
pub(crate) fn draw_batch(
    epoch_stream: &RngStream,
    t: u64,
    level: usize,
    n: usize,
    m: usize,
) -> Result<IndexSet> {
    sample_without_replacement(&epoch_stream.child(DRAW).child(t).child(level as u64), n, m)
}

/// The within-epoch state: current iterate plus the reference hierarchy.
#[derive(Clone, Debug)]
pub struct NestedState {
    /// Steps taken so far in this epoch.
    pub t: u64,
    /// Current iterate `x_t`.
    pub x: Array1<f64>,
    /// Reference points `x_ref[0..=K]`; `x_ref[0]` stays at the epoch start,
    /// `x_ref[K]` tracks the current iterate.
    pub x_ref: Vec<Array1<f64>>,
    /// Reference gradients `g_ref[0..=K]`.
    pub g_ref: Vec<Array1<f64>>,
}

impl NestedState {
    /// Epoch-start state: every reference point at `x0`, every reference
    /// gradient zero (the zero initialization costs no evaluations).
    pub fn new(x0: &Array1<f64>, k: usize) -> Self {
        NestedState {
            t: 0,
            x: x0.clone(),
            x_ref: vec![x0.clone(); k + 1],
            g_ref: vec![Array1::zeros(x0.len()); k + 1],
        }
    }

    /// Sets `x_ref[l] = x_t` for `r ≤ l ≤ K`; lower levels keep their points.
    pub fn update_reference_points(&mut self, r: usize) {
        for l in r..self.x_ref.len() {
            self.x_ref[l].assign(&self.x);
        }
    }

    /// Redraws `g_ref[l]` for `r ≤ l ≤ K` as batch-mean gradient differences
    /// between neighboring reference points. Costs `2·Σ min(B_l, n)` counted
    /// evaluations. Levels whose two reference points coincide produce an
    /// exact zero (while still paying for the draw, matching the procedure
    /// as written).
    pub fn update_reference_gradients<P: Objective + ?Sized>(
        &mut self,
        oracle: &mut GradOracle<'_, P>,
        schedule: &ParamSchedule,
        epoch_stream: &RngStream,
        t: u64,
        r: usize,
        stats: &mut EpochStats,
    ) -> Result<()> {
        for l in r..=schedule.k() {
            self.refresh_one_level(oracle, schedule, epoch_stream, t, l, stats)?;
        }
        Ok(())
    }

    fn refresh_one_level<P: Objective + ?Sized>(
        &mut self,
        oracle: &mut GradOracle<'_, P>,
        schedule: &ParamSchedule,
        epoch_stream: &RngStream,
        t: u64,
        l: usize,
        stats: &mut EpochStats,
    ) -> Result<()> {
        let n = oracle.problem().n_components();
        let m = schedule.batch_sizes()[l - 1].min(n as u64) as usize;
        let idx = draw_batch(epoch_stream, t, l, n, m)?;
        self.g_ref[l] =
            oracle.batch_gradient_difference(&idx, &self.x_ref[l], &self.x_ref[l - 1])?;
        stats.level_refreshes[l - 1] += 1;
        stats.level_evals[l - 1] += 2 * m as u64;
        Ok(())
    }

    /// The update direction `v_t = Σ_{l=0..K} g_ref[l]`, summed in level
    /// order.
    pub fn semi_stochastic_gradient(&self) -> Array1<f64> {
        let mut v = self.g_ref[0].clone();
        for g in &self.g_ref[1..] {
            v += g;
        }
        v
    }
}

/// Exact evaluation accounting and the recorded trajectory of one epoch.
#[derive(Clone, Debug)]
pub struct EpochStats {
    /// Anchor batch size actually used, `min(B, n)`.
    pub anchor_batch: u64,
    /// Batch size per level actually used, `min(B_l, n)`.
    pub level_batches: Vec<u64>,
    /// Refresh count per level (levels `1..=K`).
    pub level_refreshes: Vec<u64>,
    /// Counted evaluations per level, `2·batch·refreshes`.
    pub level_evals: Vec<u64>,
    /// Counter delta over the whole epoch.
    pub counted_evals: u64,
    /// `x_0..x_T` inclusive.
    pub iterates: Vec<Array1<f64>>,
    /// Which iterate was returned as `x_out`.
    pub x_out_index: u64,
}

impl EpochStats {
    fn new(schedule: &ParamSchedule, n: usize) -> Self {
        let k = schedule.k();
        EpochStats {
            anchor_batch: schedule.base_batch().min(n as u64),
            level_batches: schedule
                .batch_sizes()
                .iter()
                .map(|&b| b.min(n as u64))
                .collect(),
            level_refreshes: vec![0; k],
            level_evals: vec![0; k],
            counted_evals: 0,
            iterates: Vec::new(),
            x_out_index: 0,
        }
    }
}

/// The two points an epoch hands back: a uniformly chosen iterate (the
/// analysis object) and the final iterate (the chaining point).
#[derive(Clone, Debug)]
pub struct EpochOutput {
    pub x_out: Array1<f64>,
    pub x_end: Array1<f64>,
    pub stats: EpochStats,
}

fn check_finite(x: &Array1<f64>, step: u64) -> Result<()> {
    if x.iter().all(|c| c.is_finite()) {
        Ok(())
    } else {
        Err(Error::Diverged { step })
    }
}

fn check_start<P: Objective + ?Sized>(x0: &Array1<f64>, oracle: &GradOracle<'_, P>) -> Result<()> {
    if x0.len() != oracle.problem().dim() {
        return Err(Error::DimensionMismatch {
            expected: oracle.problem().dim(),
            got: x0.len(),
        });
    }
    Ok(())
}

/// One epoch, flat-loop form: a single loop over `t = 0..T_total` that asks
/// the schedule which levels to refresh.
pub fn one_epoch_snvrg<P: Objective + ?Sized>(
    x0: &Array1<f64>,
    oracle: &mut GradOracle<'_, P>,
    schedule: &ParamSchedule,
    stream: &RngStream,
) -> Result<EpochOutput> {
    check_start(x0, oracle)?;
    let n = oracle.problem().n_components();
    let counted_before = oracle.counted();
    let mut state = NestedState::new(x0, schedule.k());
    let mut stats = EpochStats::new(schedule, n);

    let anchor = draw_batch(stream, 0, 0, n, stats.anchor_batch as usize)?;
    state.g_ref[0] = oracle.batch_gradient(&anchor, x0)?;

    let t_total = schedule.t_total();
    let step = schedule.step_size();
    let mut iterates = Vec::with_capacity(t_total as usize + 1);
    iterates.push(x0.clone());

    for t in 0..t_total {
        state.t = t;
        if t > 0 {
            let r = schedule.update_level(t)?;
            state.update_reference_points(r);
            state.update_reference_gradients(oracle, schedule, stream, t, r, &mut stats)?;
        }
        let v = state.semi_stochastic_gradient();
        state.x.zip_mut_with(&v, |xc, &vc| *xc -= step * vc);
        check_finite(&state.x, t + 1)?;
        iterates.push(state.x.clone());
    }
    state.t = t_total;

    finish_epoch(stream, t_total, iterates, stats, counted_before, oracle.counted())
}

/// One epoch, nested-loop form: `K` explicit loops (realized by recursion
/// over the level), each of which refreshes its own reference pair at the
/// top of every iteration. Produces bitwise-identical output to
/// [`one_epoch_snvrg`].
pub fn one_epoch_snvrg_nested<P: Objective + ?Sized>(
    x0: &Array1<f64>,
    oracle: &mut GradOracle<'_, P>,
    schedule: &ParamSchedule,
    stream: &RngStream,
) -> Result<EpochOutput> {
    check_start(x0, oracle)?;
    let n = oracle.problem().n_components();
    let counted_before = oracle.counted();
    let mut state = NestedState::new(x0, schedule.k());
    let mut stats = EpochStats::new(schedule, n);

    let anchor = draw_batch(stream, 0, 0, n, stats.anchor_batch as usize)?;
    state.g_ref[0] = oracle.batch_gradient(&anchor, x0)?;

    let t_total = schedule.t_total();
    let mut iterates = Vec::with_capacity(t_total as usize + 1);
    iterates.push(x0.clone());

    let mut run = NestedLoops {
        oracle,
        schedule,
        stream,
        state: &mut state,
        stats: &mut stats,
        iterates: &mut iterates,
    };
    run.descend(1)?;

    finish_epoch(stream, t_total, iterates, stats, counted_before, oracle.counted())
}

struct NestedLoops<'r, 'a, P: Objective + ?Sized> {
    oracle: &'r mut GradOracle<'a, P>,
    schedule: &'r ParamSchedule,
    stream: &'r RngStream,
    state: &'r mut NestedState,
    stats: &'r mut EpochStats,
    iterates: &'r mut Vec<Array1<f64>>,
}

impl<P: Objective + ?Sized> NestedLoops<'_, '_, P> {
    fn descend(&mut self, level: usize) -> Result<()> {
        let reps = self.schedule.loop_lens()[level - 1];
        for _ in 0..reps {
            let t = self.state.t;
            // The very first pass through every loop keeps the epoch-start
            // references and zero gradients; they cost nothing. Afterwards a
            // loop refreshes its own level at the top of each iteration.
            if t > 0 {
                self.state.x_ref[level].assign(&self.state.x);
                self.state.refresh_one_level(
                    self.oracle,
                    self.schedule,
                    self.stream,
                    t,
                    level,
                    self.stats,
                )?;
            }
            if level == self.schedule.k() {
                let v = self.state.semi_stochastic_gradient();
                let step = self.schedule.step_size();
                self.state.x.zip_mut_with(&v, |xc, &vc| *xc -= step * vc);
                check_finite(&self.state.x, t + 1)?;
                self.state.t = t + 1;
                self.iterates.push(self.state.x.clone());
            } else {
                self.descend(level + 1)?;
            }
        }
        Ok(())
    }
}

fn finish_epoch(
    stream: &RngStream,
    t_total: u64,
    iterates: Vec<Array1<f64>>,
    mut stats: EpochStats,
    counted_before: u64,
    counted_after: u64,
) -> Result<EpochOutput> {
    let pick = stream.child(PICK_OUT).rng().random_range(0..t_total);
    stats.x_out_index = pick;
    stats.counted_evals = counted_after - counted_before;
    let x_out = iterates[pick as usize].clone();
    let x_end = iterates[t_total as usize].clone();
    stats.iterates = iterates;
    Ok(EpochOutput { x_out, x_end, stats })
}
