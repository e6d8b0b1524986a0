use hjb_core::evaluation::{
    compute_phi, exact_linear_value, linear_quadratic_solutions, linear_reference, median, median_over_runs,
    mse_on_grid, nonlinear2d_sdre_gradient, residual_on_grid, residuals_on_grid, rollout_nn_policy,
    sdre_discrepancy_curve, EvalGrid, DISCREPANCY_EPSILONS, PHI_STEP,
};
use hjb_core::linalg::Matrix;
use hjb_core::network::{Architecture, NetParams, QuadraticValue, ValueModel};
use hjb_core::problems::{ControlProblem, Domain};
use hjb_core::sdre::{closed_form_p_nonlinear2d, rollout_sdre};
use hjb_core::training::{Phase, TrainConfig, TrainMode};

fn constant_net(c: f64) -> NetParams {
    let mut p = NetParams::zeros(Architecture::new(2, vec![2]).unwrap());
    p.bias_mut(1)[0] = c;
    p
}

fn small_grid() -> EvalGrid {
    EvalGrid::new(vec![21, 21], &Domain::cube(2, -1.0, 1.0).unwrap()).unwrap()
}

#[test]
fn exact_linear_value_examples() {
    let lin = ControlProblem::linear2d();
    assert_eq!(exact_linear_value(&lin, &[0.0, 0.0]).unwrap(), 0.0);
    assert!((exact_linear_value(&lin, &[1.0, 0.0]).unwrap() - 0.344_948_974_278_317_8).abs() < 1e-15);
    assert!(exact_linear_value(&ControlProblem::nonlinear2d(1.0).unwrap(), &[1.0, 0.0]).is_err());
}

#[test]
fn all_four_sign_quadratics_solve_the_linear_hjb() {
    let lin = ControlProblem::linear2d();
    let grid = EvalGrid::default_for(&lin);
    let solutions = linear_quadratic_solutions(&lin).unwrap();
    assert_eq!(solutions.len(), 4);
    let reference = linear_reference(&lin).unwrap();
    let mut spurious_mse = Vec::new();
    for q in &solutions {
        let res = residuals_on_grid(q, &lin, &grid).unwrap();
        assert!(res.iter().all(|r| r.abs() < 1e-12));
        let mse = mse_on_grid(q, &reference, &grid).unwrap();
        if mse > 0.0 {
            spurious_mse.push(mse);
        }
    }
    // Exactly one of the four is the valid solution.
    assert_eq!(spurious_mse.len(), 3);
    assert!(spurious_mse.iter().all(|&m| m > 1e-2));
}

#[test]
fn mse_of_constant_models() {
    let grid = small_grid();
    assert!((mse_on_grid(&constant_net(0.5), &constant_net(-1.5), &grid).unwrap() - 4.0).abs() < 1e-14);
    assert_eq!(mse_on_grid(&constant_net(0.5), &constant_net(0.5), &grid).unwrap(), 0.0);
}

#[test]
fn zero_model_residual_is_the_state_cost() {
    let lin = ControlProblem::linear2d();
    let grid = small_grid();
    let pts = grid.points();
    let expected = pts
        .chunks(2)
        .map(|x| (0.5 * (x[0] * x[0] + x[1] * x[1])).powi(2))
        .sum::<f64>()
        / grid.len() as f64;
    let stats = residual_on_grid(&constant_net(0.0), &lin, &grid).unwrap();
    assert!((stats.mean - expected).abs() < 1e-14);
    assert!((stats.max - 1.0).abs() < 1e-14);
}

#[test]
fn phi_vanishes_for_constant_riccati_solutions() {
    let lin = ControlProblem::linear2d();
    for x in [[0.3, -0.8], [1.0, 1.0]] {
        let phi = compute_phi(&lin, &x, PHI_STEP).unwrap();
        assert!(phi.iter().all(|v| v.abs() < 1e-8));
    }
    let tiny = ControlProblem::nonlinear2d(1e-9).unwrap();
    let phi = compute_phi(&tiny, &[0.9, -0.4], PHI_STEP).unwrap();
    assert!(phi.iter().all(|v| v.abs() < 1e-7));
}

#[test]
fn phi_matches_the_closed_form_derivative() {
    let nl = ControlProblem::nonlinear2d(1.0).unwrap();
    let x = [1.0, 1.0];
    let fine = compute_phi(&nl, &x, 1e-5).unwrap();
    let coarse = compute_phi(&nl, &x, 1e-4).unwrap();
    assert!((0..2).all(|k| (fine[k] - coarse[k]).abs() < 1e-6));
    let px = closed_form_p_nonlinear2d(1.0, 1.0).matvec(&x);
    let exact = nonlinear2d_sdre_gradient(&x, 1.0);
    assert!((0..2).all(|k| (fine[k] - (exact[k] - px[k])).abs() < 1e-6));
    assert!(fine[0].abs() > 0.1);
}

#[test]
fn discrepancy_curve_starts_at_zero_for_the_linear_limit() {
    let grid = small_grid();
    let at_zero = sdre_discrepancy_curve(&[0.0], &grid).unwrap();
    assert!(at_zero[0].residual_stat < 1e-10);
    let curve = sdre_discrepancy_curve(&DISCREPANCY_EPSILONS, &grid).unwrap();
    assert!(curve.windows(2).all(|w| w[1].residual_stat >= w[0].residual_stat));
    assert_eq!(
        curve.iter().map(|p| p.epsilon).collect::<Vec<_>>(),
        DISCREPANCY_EPSILONS.to_vec()
    );
}

#[test]
fn exact_model_rollout_matches_the_sdre_rollout() {
    let lin = ControlProblem::linear2d();
    let exact = linear_reference(&lin).unwrap();
    let x0 = [0.8, -0.6];
    let nn = rollout_nn_policy(&lin, &exact, &x0, 0.01, 4.0).unwrap();
    let sdre = rollout_sdre(&lin, &x0, 0.01, 4.0).unwrap();
    assert_eq!(nn.len(), sdre.len());
    for (a, b) in nn.states.iter().zip(&sdre.states) {
        assert!((0..2).all(|k| (a[k] - b[k]).abs() < 1e-5));
    }
    // Accumulated cost approaches V(x₀).
    let v0 = exact.value(&x0).unwrap();
    assert!((nn.total_cost() - v0).abs() < 0.02 * v0);
}

#[test]
fn rollout_from_origin_stays_at_origin() {
    let lin = ControlProblem::linear2d();
    let traj = rollout_nn_policy(&lin, &linear_reference(&lin).unwrap(), &[0.0, 0.0], 0.01, 1.0).unwrap();
    assert!(traj.states.iter().flatten().all(|&v| v == 0.0));
}

#[test]
fn spurious_policy_does_not_stabilize() {
    let lin = ControlProblem::linear2d();
    let beta = (1.0 - 6f64.sqrt()) / 5.0;
    let wrong = QuadraticValue::new(Matrix::from_diag(&[beta, beta])).unwrap();
    // Closed loop 1 − 5β = √6 > 0.
    let traj = rollout_nn_policy(&lin, &wrong, &[0.1, 0.1], 0.01, 2.0).unwrap();
    let xf = traj.final_state().unwrap();
    assert!(xf[0] > 10.0 * 0.1);
}

#[test]
fn medians() {
    assert_eq!(median(&[]), None);
    assert_eq!(median(&[3.0]), Some(3.0));
    assert_eq!(median(&[4.0, 1.0, 3.0, 2.0]), Some(2.5));
    assert_eq!(median(&[5.0, 1.0, 3.0]), Some(3.0));
}

#[test]
fn median_over_runs_is_deterministic_and_single_run_is_its_own_median() {
    let lin = ControlProblem::linear2d();
    let mut c = TrainConfig::defaults_for(&lin);
    c.hidden_widths = vec![6, 6];
    c.supervised_phases = vec![Phase::new(30, 1e-2)];
    c.residual_phases = vec![Phase::new(30, 1e-2)];
    c.n1 = 6;
    c.n2 = 12;
    let grid = small_grid();
    let reference = linear_reference(&lin).unwrap();
    let one = median_over_runs(&lin, &c, TrainMode::TwoStep, 1, &grid, Some(&reference)).unwrap();
    assert_eq!(one.runs.len(), 1);
    assert_eq!(one.median_mse, one.runs[0].mse);
    let three = median_over_runs(&lin, &c, TrainMode::TwoStep, 3, &grid, Some(&reference)).unwrap();
    assert_eq!(three, median_over_runs(&lin, &c, TrainMode::TwoStep, 3, &grid, Some(&reference)).unwrap());
    assert_eq!(three.runs[0], one.runs[0]);
    assert!(three.runs.iter().all(|r| r.residual_supervised.is_some()));
    assert!(median_over_runs(&lin, &c, TrainMode::TwoStep, 0, &grid, None).is_err());
}
