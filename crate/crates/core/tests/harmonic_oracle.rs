//! The window solver against closed-form hitting probabilities and the
//! Monte Carlo estimator.

use rdsline::fixtures;
use rdsline::harmonic::solve_phi_window;
use rdsline::walk::{estimate_phi_batch, SimParams};

/// Hitting probability of +edge before -edge for the (2/3, 1/3) drift walk
/// on integers in [-10, 10]: ratio r = 1/2 gambler's ruin.
fn drift_walk_closed_form(x: f64) -> f64 {
    (1.0 - 0.5f64.powf(x + 10.0)) / (1.0 - 0.5f64.powi(20))
}

#[test]
fn drift_walk_matches_gamblers_ruin_closed_form() {
    let sol = solve_phi_window(&fixtures::drift_walk(), (-10.0, 10.0), 21, 1e-12, 100_000).unwrap();
    let mut worst = 0.0f64;
    for (j, v) in sol.phi.values().iter().enumerate() {
        let x = sol.phi.grid_point(j);
        worst = worst.max((v - drift_walk_closed_form(x)).abs());
    }
    assert!(worst <= 1e-6, "sup error {worst:.3e}");
}

#[test]
fn doubling_the_window_barely_moves_central_values() {
    let narrow =
        solve_phi_window(&fixtures::split_walk(), (-50.0, 50.0), 2001, 1e-9, 200_000).unwrap();
    let wide =
        solve_phi_window(&fixtures::split_walk(), (-100.0, 100.0), 4001, 1e-9, 200_000).unwrap();
    for x in [-5.0, -2.0, 0.0, 2.0, 5.0] {
        let d = (narrow.phi.eval(x) - wide.phi.eval(x)).abs();
        assert!(d <= 0.01, "window sensitivity {d:.4} at x = {x}");
    }
}

#[test]
fn monte_carlo_and_solver_agree_on_the_split_walk() {
    let probes = [-5.0, -2.0, 0.0, 2.0, 5.0];
    let sol = solve_phi_window(&fixtures::split_walk(), (-50.0, 50.0), 2001, 1e-9, 200_000).unwrap();
    let params = SimParams {
        horizon: 10_000,
        escape_threshold: 1_000.0,
        confine_fraction: 0.5,
        trials: 1_000,
        master_seed: 31,
        workers: 4,
    };
    let estimates = estimate_phi_batch(&fixtures::split_walk(), &probes, &params).unwrap();
    for est in estimates {
        let diff = (est.phi_plus() - sol.phi.eval(est.x)).abs();
        let allowed = est.ci_halfwidth() + 0.02;
        assert!(diff <= allowed, "at {}: |MC - solve| = {diff:.4} > {allowed:.4}", est.x);
    }
}
