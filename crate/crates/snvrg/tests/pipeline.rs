//! End-to-end runs through the public API: accuracy-driven configuration,
//! budget handling, restart chaining, and cross-run reproducibility.

use ndarray::Array1;

use snvrg::baselines::{self, InnerLen};
use snvrg::drivers::{snvrg, snvrg_pl, stationarity_params, restart_params, RunOptions};
use snvrg::objectives::{make_problem, GradOracle, Objective, ProblemSpec};
use snvrg::sampling::RngStream;
use snvrg::schedule::{ParamSchedule, ScheduleMode};

fn quadratic(n: usize, d: usize, seed: u64) -> snvrg::objectives::Problem {
    let spec = ProblemSpec { family: "pl-quadratic".into(), n, d, seed, alpha: None };
    make_problem(&spec).unwrap()
}

fn f_gap<P: Objective>(problem: &P, x: &Array1<f64>) -> f64 {
    let n = problem.n_components();
    let f = (0..n).map(|i| problem.component_value(i, x)).sum::<f64>() / n as f64;
    f - problem.optimum_value().unwrap()
}

#[test]
fn accuracy_driven_run_reaches_target_neighborhood() {
    let problem = quadratic(128, 6, 41);
    let z0 = Array1::zeros(6);
    let epsilon = 0.1;
    let (b, s_epochs) = stationarity_params(&problem, &z0, epsilon, None, 0.0, 600.0).unwrap();
    assert_eq!(b, 128, "variance term should saturate the batch at n");
    assert!(s_epochs >= 1);

    let schedule =
        ParamSchedule::from_base_batch(b, problem.smoothness_bound(), ScheduleMode::Paper)
            .unwrap();
    let out = snvrg(
        &z0,
        &problem,
        &schedule,
        s_epochs,
        &RngStream::new(7),
        &RunOptions { max_evals: None, log_every: s_epochs },
    )
    .unwrap();

    let mut oracle = GradOracle::new(&problem);
    let g = oracle.full_gradient(&out.y_out).unwrap();
    assert!(
        g.dot(&g) <= 50.0 * epsilon * epsilon,
        "squared gradient norm {} far above the target scale",
        g.dot(&g)
    );

    let record = &out.record;
    assert_eq!(record.iters, s_epochs * schedule.t_total());
    assert_eq!(record.epoch_evals.len() as u64, s_epochs);
    assert_eq!(record.epoch_evals.iter().sum::<u64>(), record.total_evals);
    assert!(!record.budget_exhausted);
    assert!(out.chosen_epoch >= 1 && out.chosen_epoch <= s_epochs);
}

#[test]
fn eval_budget_stops_epochs_early() {
    let problem = quadratic(128, 6, 41);
    let schedule = ParamSchedule::from_base_batch(128, problem.smoothness_bound(), ScheduleMode::Paper)
        .unwrap();
    let full = snvrg(
        &Array1::zeros(6),
        &problem,
        &schedule,
        20,
        &RngStream::new(3),
        &RunOptions::default(),
    )
    .unwrap();
    let one_epoch = full.record.epoch_evals[0];

    let capped = snvrg(
        &Array1::zeros(6),
        &problem,
        &schedule,
        20,
        &RngStream::new(3),
        &RunOptions { max_evals: Some(3 * one_epoch), log_every: 1 },
    )
    .unwrap();
    assert!(capped.record.budget_exhausted);
    assert!(capped.record.epoch_evals.len() < 20);
    assert!(capped.record.total_evals <= 4 * one_epoch);
}

#[test]
fn baselines_count_evals_and_probe_consistently() {
    let problem = quadratic(32, 3, 9);
    let z0 = Array1::zeros(3);
    let opts = RunOptions::default();
    let stream = RngStream::new(17);

    let gd = baselines::gd(&z0, &problem, 60, baselines::gd_default_step(&problem), &opts)
        .unwrap();
    assert_eq!(gd.total_evals, 60 * 32, "full gradient costs n per step");

    let sgd = baselines::sgd(&z0, &problem, 100, 1e-2, 4, &stream.child(1), &opts).unwrap();
    assert_eq!(sgd.total_evals, 100 * 4);

    let svrg = baselines::svrg(
        &z0,
        &problem,
        3,
        32,
        baselines::svrg_default_step(&problem),
        1,
        &stream.child(2),
        &opts,
    )
    .unwrap();
    assert_eq!(svrg.total_evals, 3 * (32 + 2 * 32));

    let scsg = baselines::scsg(
        &z0,
        &problem,
        3,
        16,
        1,
        InnerLen::Fixed(8),
        baselines::scsg_default_step(&problem, 16),
        &stream.child(3),
        &opts,
    )
    .unwrap();
    assert_eq!(scsg.total_evals, 3 * (16 + 2 * 8));

    for record in [&gd, &sgd, &svrg, &scsg] {
        let first = record.trajectory.first().unwrap();
        assert_eq!((first.evals, first.iter), (0, 0));
        for pair in record.trajectory.windows(2) {
            assert!(pair[1].evals >= pair[0].evals);
            assert!(pair[1].iter > pair[0].iter);
        }
        assert!(record.trajectory.iter().all(|p| p.f_value.is_finite()));
    }
}

#[test]
fn restart_driver_contracts_the_gap() {
    let problem = quadratic(128, 4, 23);
    let z0 = Array1::from_elem(4, 2.0);
    let epsilon = 1e-3;
    let (b, s_epochs, u_stages) =
        restart_params(&problem, &z0, epsilon, None, problem.optimum_value().unwrap(), 600.0)
            .unwrap();
    let schedule =
        ParamSchedule::from_base_batch(b, problem.smoothness_bound(), ScheduleMode::Paper)
            .unwrap();

    let out = snvrg_pl(
        &z0,
        &problem,
        &schedule,
        s_epochs,
        u_stages,
        &RngStream::new(5),
        &RunOptions { max_evals: None, log_every: s_epochs },
    )
    .unwrap();

    assert_eq!(out.stage_points.len() as u64, u_stages + 1);
    let start_gap = f_gap(&problem, &out.stage_points[0]);
    let final_gap = f_gap(&problem, &out.z_out);
    assert!(final_gap < 0.5 * start_gap);
    assert!(final_gap <= epsilon, "final gap {final_gap} above target {epsilon}");
}

#[test]
fn identical_seeds_reproduce_runs_bitwise() {
    let problem = quadratic(64, 4, 31);
    let schedule = ParamSchedule::from_base_batch(64, problem.smoothness_bound(), ScheduleMode::Paper)
        .unwrap();
    let run = |seed: u64| {
        snvrg(
            &Array1::zeros(4),
            &problem,
            &schedule,
            5,
            &RngStream::new(seed),
            &RunOptions::default(),
        )
        .unwrap()
    };

    let (a, b) = (run(11), run(11));
    assert_eq!(a.chosen_epoch, b.chosen_epoch);
    for (p, q) in a.record.trajectory.iter().zip(&b.record.trajectory) {
        assert_eq!(p.f_value.to_bits(), q.f_value.to_bits());
        assert_eq!(p.grad_norm_sq.to_bits(), q.grad_norm_sq.to_bits());
    }
    for (u, v) in a.y_out.iter().zip(&b.y_out) {
        assert_eq!(u.to_bits(), v.to_bits());
    }

    let c = run(12);
    let same = a.y_out.iter().zip(&c.y_out).all(|(u, v)| u.to_bits() == v.to_bits());
    assert!(!same, "different seeds should draw different batches");
}
