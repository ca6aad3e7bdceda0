//! Self-verification suite behind `bench verify`: re-derives the library's
//! exactly checkable quantities through independent routes and prints one
//! pass/fail row per check.

use ndarray::Array1;
use rand::Rng;

use snvrg::accounting::{
    analysis_constants, census_check, check_series_domination, epoch_cost_formula,
};
use snvrg::epoch::{one_epoch_snvrg, one_epoch_snvrg_nested};
use snvrg::objectives::{fd_component_gradient, make_problem, GradOracle, Objective, ProblemSpec};
use snvrg::sampling::{subset_mean_sqnorm_exact, RngStream};
use snvrg::schedule::{ParamSchedule, ScheduleMode};

pub struct CheckResult {
    pub name: &'static str,
    pub outcome: Result<(), String>,
}

impl CheckResult {
    fn of(name: &'static str, outcome: Result<(), String>) -> Self {
        CheckResult { name, outcome }
    }
}

/// Runs every check; each returns instead of panicking so the whole table
/// always prints.
pub fn run_all() -> Vec<CheckResult> {
    vec![
        CheckResult::of("schedule values from base batch", check_schedule_values()),
        CheckResult::of("epoch census vs closed-form count", check_census()),
        CheckResult::of("flat vs nested epoch forms", check_loop_forms()),
        CheckResult::of("constant series vs closed form", check_constant_series()),
        CheckResult::of("constant series domination margins", check_domination()),
        CheckResult::of("subset mean identity vs enumeration", check_subset_identity()),
        CheckResult::of("finite-difference gradient agreement", check_gradients()),
    ]
}

/// Prints the table; true when every row passed.
pub fn print_table(results: &[CheckResult]) -> bool {
    let width = results.iter().map(|r| r.name.len()).max().unwrap_or(0);
    let mut all_ok = true;
    for r in results {
        match &r.outcome {
            Ok(()) => println!("{:w$}  pass", r.name, w = width),
            Err(msg) => {
                all_ok = false;
                println!("{:w$}  FAIL  {msg}", r.name, w = width);
            }
        }
    }
    all_ok
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn check_schedule_values() -> Result<(), String> {
    let cases: [(u64, &[u64], &[u64]); 3] = [
        (4, &[2], &[24]),
        (16, &[2, 2], &[576, 24]),
        (256, &[2, 2, 4], &[55_296, 2_304, 96]),
    ];
    for (b, loops, batches) in cases {
        let s = ParamSchedule::from_base_batch(b, 1.0, ScheduleMode::Paper)
            .map_err(|e| format!("B={b}: {e}"))?;
        ensure(s.loop_lens() == loops, || {
            format!("B={b}: loop lengths {:?}, expected {loops:?}", s.loop_lens())
        })?;
        ensure(s.batch_sizes() == batches, || {
            format!("B={b}: batch sizes {:?}, expected {batches:?}", s.batch_sizes())
        })?;
        ensure(s.t_total() * s.t_total() == b, || {
            format!("B={b}: loop product {} is not the square root", s.t_total())
        })?;
        ensure(s.m() == 6.0, || format!("B={b}: step denominator {} != 6L", s.m()))?;
    }
    Ok(())
}

fn check_census() -> Result<(), String> {
    // Hand-counted totals for the two smallest analysis-grade schedules on
    // problems large enough that no batch is capped.
    let cases = [(4u64, 30usize, 52u64, 100u64, 224u64), (16, 600, 1312, 2512, 7168)];
    for (b, n, measured, predicted, bound) in cases {
        let spec = ProblemSpec { family: "pl-quadratic".into(), n, d: 3, seed: 7, alpha: None };
        let problem = make_problem(&spec).map_err(|e| e.to_string())?;
        let schedule = ParamSchedule::from_base_batch(b, problem.smoothness_bound(), ScheduleMode::Paper)
            .map_err(|e| e.to_string())?;
        let mut oracle = GradOracle::new(&problem);
        let x0 = Array1::zeros(3);
        let out = one_epoch_snvrg(&x0, &mut oracle, &schedule, &RngStream::new(1))
            .map_err(|e| e.to_string())?;
        let report = census_check(&out.stats, &schedule, n).map_err(|e| e.to_string())?;
        ensure(oracle.counted() == measured, || {
            format!("B={b}: counter {} != hand count {measured}", oracle.counted())
        })?;
        ensure(report.measured == Some(measured), || {
            format!("B={b}: census {:?} != hand count {measured}", report.measured)
        })?;
        let formula = epoch_cost_formula(&schedule).map_err(|e| e.to_string())?;
        ensure(formula.predicted_total == predicted, || {
            format!("B={b}: closed form {} != hand value {predicted}", formula.predicted_total)
        })?;
        ensure(formula.upper_bound == bound, || {
            format!("B={b}: upper bound {} != hand value {bound}", formula.upper_bound)
        })?;
        ensure(measured <= predicted && predicted <= bound, || {
            format!("B={b}: counting chain {measured} <= {predicted} <= {bound} broken")
        })?;
    }
    Ok(())
}

fn check_loop_forms() -> Result<(), String> {
    let spec =
        ProblemSpec { family: "nonconvex-logistic".into(), n: 600, d: 4, seed: 3, alpha: None };
    let problem = make_problem(&spec).map_err(|e| e.to_string())?;
    let schedule = ParamSchedule::from_base_batch(16, problem.smoothness_bound(), ScheduleMode::Paper)
        .map_err(|e| e.to_string())?;
    let x0 = Array1::from_elem(4, 0.5);
    let stream = RngStream::new(99);

    let mut oracle_a = GradOracle::new(&problem);
    let flat = one_epoch_snvrg(&x0, &mut oracle_a, &schedule, &stream).map_err(|e| e.to_string())?;
    let mut oracle_b = GradOracle::new(&problem);
    let nested =
        one_epoch_snvrg_nested(&x0, &mut oracle_b, &schedule, &stream).map_err(|e| e.to_string())?;

    ensure(oracle_a.counted() == oracle_b.counted(), || {
        format!("counters differ: {} vs {}", oracle_a.counted(), oracle_b.counted())
    })?;
    ensure(flat.stats.iterates.len() == nested.stats.iterates.len(), || {
        "iterate counts differ".into()
    })?;
    for (t, (a, b)) in flat.stats.iterates.iter().zip(&nested.stats.iterates).enumerate() {
        for (x, y) in a.iter().zip(b) {
            ensure(x.to_bits() == y.to_bits(), || format!("iterate {t} differs bitwise"))?;
        }
    }
    for (x, y) in flat.x_out.iter().zip(&nested.x_out) {
        ensure(x.to_bits() == y.to_bits(), || "chosen outputs differ bitwise".into())?;
    }
    Ok(())
}

fn check_constant_series() -> Result<(), String> {
    for b in [16u64, 256] {
        let schedule = ParamSchedule::from_base_batch(b, 1.0, ScheduleMode::Paper)
            .map_err(|e| e.to_string())?;
        let constants = analysis_constants(&schedule, 1.0).map_err(|e| e.to_string())?;
        for s in 1..=schedule.k() {
            let t_s = schedule.loop_lens()[s - 1];
            let a = 1.0 + 1.0 / t_s as f64;
            let terminal = constants.c(s, t_s as usize);
            let extra = (3.0 / constants.m) * schedule.tail_product(s) as f64
                / schedule.batch_sizes()[s - 1] as f64;
            for j in 0..=t_s as usize {
                let pow = a.powi((t_s as usize - j) as i32);
                let closed = pow * terminal + extra * t_s as f64 * (pow - 1.0);
                let got = constants.c(s, j);
                ensure((got - closed).abs() <= 1e-10 * closed.abs().max(1.0), || {
                    format!("B={b}, level {s}, j={j}: recurrence {got} vs closed form {closed}")
                })?;
            }
        }
    }
    Ok(())
}

fn check_domination() -> Result<(), String> {
    for b in [16u64, 256, 1024] {
        let schedule = ParamSchedule::from_base_batch(b, 1.0, ScheduleMode::Paper)
            .map_err(|e| e.to_string())?;
        let constants = analysis_constants(&schedule, 1.0).map_err(|e| e.to_string())?;
        let entries =
            check_series_domination(&constants, &schedule).map_err(|e| format!("B={b}: {e}"))?;
        for e in entries {
            ensure(e.margin() > 0.0, || {
                format!("B={b}: margin at (s={}, j={}) is {}", e.s, e.j, e.margin())
            })?;
        }
    }
    Ok(())
}

fn check_subset_identity() -> Result<(), String> {
    let mut rng = RngStream::new(2024).rng();
    for case in 0..20 {
        let n = rng.random_range(2..=8usize);
        let dim = rng.random_range(1..=3usize);
        let mut vectors: Vec<Array1<f64>> = (0..n)
            .map(|_| Array1::from_iter((0..dim).map(|_| rng.random_range(-1.0..1.0))))
            .collect();
        let mean = vectors.iter().fold(Array1::<f64>::zeros(dim), |acc, v| acc + v) / n as f64;
        for v in &mut vectors {
            *v -= &mean;
        }
        let sum_sq: f64 = vectors.iter().map(|v| v.dot(v)).sum();
        for m in 1..=n {
            let exact = subset_mean_sqnorm_exact(&vectors, m).map_err(|e| e.to_string())?;
            let closed = (n - m) as f64 / (m * n * (n - 1)) as f64 * sum_sq;
            ensure((exact - closed).abs() <= 1e-12, || {
                format!("case {case}, m={m}: enumeration {exact} vs closed form {closed}")
            })?;
            let cap = if m < n { sum_sq / (m * n) as f64 } else { 0.0 };
            ensure(exact <= cap + 1e-12, || {
                format!("case {case}, m={m}: enumeration {exact} exceeds bound {cap}")
            })?;
        }
    }
    Ok(())
}

fn check_gradients() -> Result<(), String> {
    let specs = [
        ProblemSpec { family: "pl-quadratic".into(), n: 20, d: 4, seed: 31, alpha: None },
        ProblemSpec {
            family: "nonconvex-logistic".into(),
            n: 20,
            d: 4,
            seed: 32,
            alpha: Some(0.3),
        },
        ProblemSpec { family: "scalar-toy".into(), n: 7, d: 1, seed: 33, alpha: None },
    ];
    let mut rng = RngStream::new(5150).rng();
    for spec in &specs {
        let problem = make_problem(spec).map_err(|e| e.to_string())?;
        for trial in 0..10 {
            let x: Array1<f64> =
                (0..problem.dim()).map(|_| rng.random_range(-2.0..2.0)).collect();
            let i = rng.random_range(0..problem.n_components());
            let h = 1e-6 * (1.0 + x.dot(&x).sqrt());
            let fd = fd_component_gradient(&problem, i, &x, h);
            let g = problem.component_gradient(i, &x);
            let err = (&fd - &g).mapv(f64::abs).sum();
            ensure(err <= 1e-5 * (1.0 + g.mapv(f64::abs).sum()), || {
                format!("{} trial {trial}: finite-difference error {err}", spec.family)
            })?;
        }
    }
    Ok(())
}
