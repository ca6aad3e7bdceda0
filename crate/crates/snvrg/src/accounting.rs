//! Closed-form gradient-complexity formulas, exact evaluation-count
//! cross-checks against running epochs, the per-level constant series used
//! by the convergence analysis, and theoretical complexity curves for
//! comparing algorithms.
//!
//! Three routes to the cost of an epoch are kept deliberately separate: the
//! counter census of a real run, the closed-form per-level sum, and the
//! cubed-log upper bound. Equality and ordering between them are checked,
//! never assumed.

use crate::epoch::EpochStats;
use crate::error::{Error, Result};
use crate::schedule::ParamSchedule;

/// Cost attribution for one reference level.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LevelCost {
    /// Level index, `1..=K`.
    pub level: usize,
    /// How many refreshes the entry accounts for.
    pub refreshes: u64,
    /// Components drawn per refresh.
    pub batch: u64,
    /// Counted evaluations, `2·batch·refreshes`.
    pub cost: u64,
}

/// An epoch's gradient-evaluation cost seen from up to three angles.
#[derive(Clone, Debug)]
pub struct ComplexityReport {
    /// Counter census of an actual run; absent for purely analytic reports.
    pub measured: Option<u64>,
    /// Closed-form per-level total `B + 2·Σ_l B_l·Π_{j≤l}T_j`. Counts every
    /// level interval including the zero-cost first one, so it upper-bounds
    /// any census.
    pub predicted_total: u64,
    /// `7·B·(log₂B)³`, rounded down.
    pub upper_bound: u64,
    pub per_level: Vec<LevelCost>,
}

fn cube_log_bound(base_batch: u64) -> u64 {
    let lg = (base_batch as f64).log2();
    let value = 7.0 * base_batch as f64 * lg * lg * lg;
    if value >= u64::MAX as f64 {
        u64::MAX
    } else {
        value.floor() as u64
    }
}

/// The closed-form cost of one epoch: each level `l` contributes
/// `Π_{j=1..l}T_j` samplings of `2·B_l` evaluations, on top of the size-`B`
/// anchor.
pub fn epoch_cost_formula(schedule: &ParamSchedule) -> Result<ComplexityReport> {
    let mut per_level = Vec::with_capacity(schedule.k());
    let mut total = schedule.base_batch() as u128;
    for l in 1..=schedule.k() {
        let refreshes = schedule.head_product(l);
        let batch = schedule.batch_sizes()[l - 1];
        let cost = 2u128 * batch as u128 * refreshes as u128;
        let cost = u64::try_from(cost).map_err(|_| {
            Error::InvalidSchedule(format!("level {l} cost overflows the evaluation counter"))
        })?;
        total += cost as u128;
        per_level.push(LevelCost {
            level: l,
            refreshes,
            batch,
            cost,
        });
    }
    let predicted_total = u64::try_from(total).map_err(|_| {
        Error::InvalidSchedule("epoch cost overflows the evaluation counter".into())
    })?;
    Ok(ComplexityReport {
        measured: None,
        predicted_total,
        upper_bound: cube_log_bound(schedule.base_batch()),
        per_level,
    })
}

/// Audits a finished epoch against the expected census
/// `min(B,n) + 2·Σ_l min(B_l,n)·(Π_{j≤l}T_j − 1)` level by level, then
/// against the closed-form total and the cubed-log bound.
///
/// The ordering chain `measured ≤ predicted ≤ bound` is asserted only for
/// analysis-grade schedules running uncapped (`n ≥ max_l B_l`) with a base
/// batch of at least 4, the regime in which the bound's derivation applies.
pub fn census_check(
    stats: &EpochStats,
    schedule: &ParamSchedule,
    n: usize,
) -> Result<ComplexityReport> {
    let n = n as u64;
    let anchor = schedule.base_batch().min(n);
    if stats.anchor_batch != anchor {
        return Err(Error::AccountingMismatch(format!(
            "anchor batch: expected {anchor}, recorded {}",
            stats.anchor_batch
        )));
    }
    let mut per_level = Vec::with_capacity(schedule.k());
    let mut expected_total = anchor;
    for l in 1..=schedule.k() {
        let refreshes = schedule.head_product(l) - 1;
        let batch = schedule.batch_sizes()[l - 1].min(n);
        let cost = 2 * batch * refreshes;
        if stats.level_refreshes[l - 1] != refreshes || stats.level_evals[l - 1] != cost {
            return Err(Error::AccountingMismatch(format!(
                "level {l}: expected {refreshes} refreshes costing {cost}, \
                 measured {} refreshes costing {}",
                stats.level_refreshes[l - 1],
                stats.level_evals[l - 1]
            )));
        }
        expected_total += cost;
        per_level.push(LevelCost {
            level: l,
            refreshes,
            batch,
            cost,
        });
    }
    if stats.counted_evals != expected_total {
        return Err(Error::AccountingMismatch(format!(
            "epoch total: census predicts {expected_total}, counter recorded {}",
            stats.counted_evals
        )));
    }

    let formula = epoch_cost_formula(schedule)?;
    let uncapped = schedule.batch_sizes().iter().all(|&b| b <= n) && schedule.base_batch() <= n;
    if schedule.is_paper() && uncapped && schedule.base_batch() >= 4 {
        if expected_total > formula.predicted_total {
            return Err(Error::AccountingMismatch(format!(
                "measured {expected_total} exceeds closed-form total {}",
                formula.predicted_total
            )));
        }
        if formula.predicted_total > formula.upper_bound {
            return Err(Error::AccountingMismatch(format!(
                "closed-form total {} exceeds cubed-log bound {}",
                formula.predicted_total, formula.upper_bound
            )));
        }
    }
    Ok(ComplexityReport {
        measured: Some(expected_total),
        predicted_total: formula.predicted_total,
        upper_bound: formula.upper_bound,
        per_level,
    })
}

/// The per-level constant series of the convergence analysis.
///
/// For level `s`, the series starts from the terminal value
/// `c_{T_s} = M/(6^(K−s+1)·Π_{l=s..K}T_l)` and runs backward through
/// `c_j = (1 + 1/T_s)·c_{j+1} + (3L²/M)·Π_{l=s+1..K}T_l / B_s`.
#[derive(Clone, Debug)]
pub struct AnalysisConstants {
    /// Step denominator the table is expressed against.
    pub m: f64,
    /// `table[s-1][j]` holds `c_j` for level `s`, `0 ≤ j ≤ T_s`.
    pub table: Vec<Vec<f64>>,
}

impl AnalysisConstants {
    /// `c_j` for level `s` (1-based).
    pub fn c(&self, s: usize, j: usize) -> f64 {
        self.table[s - 1][j]
    }
}

/// Builds the constant series for an analysis-grade schedule.
///
/// Refuses schedules whose step denominator is below `6L` or whose batch
/// sizes sit under the floors `6^(K−l+1)·(Π_{s=l..K}T_s)²`, naming the
/// failing bound; outside that regime the series says nothing.
pub fn analysis_constants(
    schedule: &ParamSchedule,
    smoothness: f64,
) -> Result<AnalysisConstants> {
    if !(smoothness > 0.0 && smoothness.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "smoothness bound must be positive and finite, got {smoothness}"
        )));
    }
    let m = schedule.m();
    let needed = 6.0 * smoothness;
    if m < needed * (1.0 - 1e-12) {
        return Err(Error::SchedulePrecondition(format!(
            "step denominator M = {m} is below 6L = {needed}"
        )));
    }
    for (i, (&b, floor)) in schedule
        .batch_sizes()
        .iter()
        .zip(schedule.analysis_batch_floors())
        .enumerate()
    {
        if b < floor {
            return Err(Error::SchedulePrecondition(format!(
                "level {} batch {b} is below the required floor {floor}",
                i + 1
            )));
        }
    }

    let k = schedule.k();
    let mut table = Vec::with_capacity(k);
    for s in 1..=k {
        let t_s = schedule.loop_lens()[s - 1];
        let span = schedule.tail_product(s - 1) as f64; // T_s·…·T_K
        let six = 6f64.powi((k - s + 1) as i32);
        let terminal = m / (six * span);
        let extra =
            (3.0 * smoothness * smoothness / m) * schedule.tail_product(s) as f64
                / schedule.batch_sizes()[s - 1] as f64;
        let a = 1.0 + 1.0 / t_s as f64;

        let len = t_s as usize + 1;
        let mut series = vec![0.0; len];
        series[len - 1] = terminal;
        for j in (0..len - 1).rev() {
            series[j] = a * series[j + 1] + extra;
        }
        table.push(series);
    }
    Ok(AnalysisConstants { m, table })
}

/// One cross-level inequality `(1 + T_s)·c_j ≤ next level's terminal
/// constant` (or `≤ M` at the deepest level), with its slack.
#[derive(Clone, Copy, Debug)]
pub struct MarginEntry {
    /// Level whose series is weighted, 1-based.
    pub s: usize,
    pub j: usize,
    pub lhs: f64,
    pub rhs: f64,
}

impl MarginEntry {
    pub fn margin(&self) -> f64 {
        self.rhs - self.lhs
    }
}

/// The domination inequalities that let the analysis telescope across
/// levels: for `s < K`, `(1+T_s)·c_j^{(s)}` must stay strictly below level
/// `s+1`'s terminal constant for every `j`; at the deepest level the cap is
/// `M` itself.
pub fn series_domination_margins(
    constants: &AnalysisConstants,
    schedule: &ParamSchedule,
) -> Vec<MarginEntry> {
    let k = schedule.k();
    let mut entries = Vec::new();
    for s in 1..=k {
        let weight = 1.0 + schedule.loop_lens()[s - 1] as f64;
        let rhs = if s < k {
            *constants.table[s].last().unwrap()
        } else {
            constants.m
        };
        for (j, &c) in constants.table[s - 1].iter().enumerate() {
            entries.push(MarginEntry {
                s,
                j,
                lhs: weight * c,
                rhs,
            });
        }
    }
    entries
}

/// Errors if any domination inequality fails, listing every violated
/// `(level, j)` pair.
pub fn check_series_domination(
    constants: &AnalysisConstants,
    schedule: &ParamSchedule,
) -> Result<Vec<MarginEntry>> {
    let entries = series_domination_margins(constants, schedule);
    let violations: Vec<String> = entries
        .iter()
        .filter(|e| e.margin() <= 0.0)
        .map(|e| format!("(s={}, j={})", e.s, e.j))
        .collect();
    if violations.is_empty() {
        Ok(entries)
    } else {
        Err(Error::InvariantViolation(format!(
            "constant series domination fails at {}",
            violations.join(", ")
        )))
    }
}

/// One theoretical complexity value.
#[derive(Clone, Debug)]
pub struct CurvePoint {
    pub algorithm: String,
    /// The asymptotic expression evaluated at `(n, epsilon)`, times
    /// `constants_scale`.
    pub complexity: f64,
    /// Poly-log factors the expression suppresses; `"1"` when none.
    pub log_factors: String,
}

/// Evaluates each method's asymptotic gradient complexity at `(n, epsilon)`:
/// stationarity-target rows always, suboptimality-target rows (suffixed
/// `-pl`) when a dominance constant `tau` is supplied. Constants and log
/// factors are dropped from the values and reported as annotations, so
/// curves are comparable only within one scaling convention.
pub fn complexity_curves(
    n: u64,
    epsilon: f64,
    tau: Option<f64>,
    constants_scale: f64,
) -> Result<Vec<CurvePoint>> {
    if n < 1 {
        return Err(Error::InvalidParameter("n must be at least 1".into()));
    }
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "epsilon must be positive and finite, got {epsilon}"
        )));
    }
    if !(constants_scale > 0.0 && constants_scale.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "constants scale must be positive and finite, got {constants_scale}"
        )));
    }
    let nf = n as f64;
    let inv_eps2 = epsilon.powi(-2);
    let point = |algorithm: &str, complexity: f64, log_factors: &str| CurvePoint {
        algorithm: algorithm.into(),
        complexity: constants_scale * complexity,
        log_factors: log_factors.into(),
    };

    let mut curves = vec![
        point("gd", nf * inv_eps2, "1"),
        point("sgd", epsilon.powi(-4), "1"),
        point("svrg", nf.powf(2.0 / 3.0) * inv_eps2, "1"),
        point(
            "scsg",
            (epsilon.powf(-10.0 / 3.0)).min(nf.powf(2.0 / 3.0) * inv_eps2),
            "1",
        ),
        point(
            "snvrg",
            (epsilon.powi(-3)).min(nf.sqrt() * inv_eps2),
            "log^3 of the anchor batch",
        ),
    ];

    if let Some(tau) = tau {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "tau must be positive and finite, got {tau}"
            )));
        }
        let q = nf.min(tau / epsilon);
        curves.push(point("gd-pl", tau * nf, "log(1/eps)"));
        curves.push(point("sgd-pl", epsilon.powi(-4), "1"));
        curves.push(point(
            "svrg-pl",
            nf + tau * nf.powf(2.0 / 3.0),
            "log(1/eps)",
        ));
        curves.push(point(
            "scsg-pl",
            q + tau * q.powf(2.0 / 3.0),
            "log(1/eps)",
        ));
        curves.push(point(
            "snvrg-pl",
            q + tau * q.sqrt(),
            "log^3 of the anchor batch, log of the initial gap over eps",
        ));
    }
    Ok(curves)
}
