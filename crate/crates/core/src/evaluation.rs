//! Reference solutions, grid metrics, the SDRE discrepancy study, network
//! feedback rollouts and multi-seed summaries.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::linalg::Matrix;
use crate::network::{QuadraticValue, ValueModel};
use crate::problems::{ControlProblem, Domain, ProblemKind};
use crate::rollout::{simulate, Controller, RolloutFailure, Trajectory};
use crate::sdre::{closed_form_dp_nonlinear2d, closed_form_p_nonlinear2d, sdre_value_at};
use crate::training::{hjb_residual, run_mode, TrainConfig, TrainMode};

/// Tensor-product grid over a box; points are listed row-major (the first
/// axis varies slowest).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalGrid {
    pub counts: Vec<usize>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

/// Points per axis used by default for 2D problems.
pub const DEFAULT_2D_GRID: usize = 100;
/// Points per axis used by default above two dimensions.
pub const DEFAULT_HIGH_DIM_GRID: usize = 3;

impl EvalGrid {
    pub fn new(counts: Vec<usize>, domain: &Domain) -> Result<Self> {
        check_len("grid axes", domain.dim(), counts.len())?;
        if counts.iter().any(|&c| c == 0) {
            return Err(Error::InvalidConfig("grid axes need at least one point".into()));
        }
        Ok(Self {
            counts,
            lower: domain.lower().to_vec(),
            upper: domain.upper().to_vec(),
        })
    }

    pub fn uniform(domain: &Domain, per_axis: usize) -> Result<Self> {
        Self::new(vec![per_axis; domain.dim()], domain)
    }

    /// 100 points per axis in 2D, 3 per axis otherwise.
    pub fn default_for(problem: &ControlProblem) -> Self {
        let per_axis = if problem.dim() <= 2 { DEFAULT_2D_GRID } else { DEFAULT_HIGH_DIM_GRID };
        Self::uniform(problem.domain(), per_axis).expect("positive count")
    }

    pub fn dim(&self) -> usize {
        self.counts.len()
    }

    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn axis(&self, k: usize, i: usize) -> f64 {
        let (lo, hi, c) = (self.lower[k], self.upper[k], self.counts[k]);
        if c == 1 {
            0.5 * (lo + hi)
        } else {
            lo + (hi - lo) * i as f64 / (c - 1) as f64
        }
    }

    /// Flattened points, `len() × dim()`.
    pub fn points(&self) -> Vec<f64> {
        let n = self.dim();
        let mut out = Vec::with_capacity(self.len() * n);
        let mut idx = vec![0usize; n];
        for _ in 0..self.len() {
            out.extend((0..n).map(|k| self.axis(k, idx[k])));
            for k in (0..n).rev() {
                idx[k] += 1;
                if idx[k] < self.counts[k] {
                    break;
                }
                idx[k] = 0;
            }
        }
        out
    }
}

fn require_linear(problem: &ControlProblem) -> Result<()> {
    match problem.kind() {
        ProblemKind::Linear2d => Ok(()),
        k => Err(Error::NotApplicable(format!("no exact solution is known for {}", k.name()))),
    }
}

/// Per-axis roots `p = r(a ± √(a² + q/r))` of the decoupled scalar Riccati
/// equations of the linear benchmark; `sign = +1` gives the stabilizing root.
fn linear_root(problem: &ControlProblem, axis: usize, sign: f64) -> f64 {
    let a = problem.eval_a(&[0.0; 2]).expect("2D state")[(axis, axis)];
    let q = problem.q()[(axis, axis)];
    let r = problem.r()[(axis, axis)];
    r * (a + sign * (a * a + q / r).sqrt())
}

/// Exact value function of the linear benchmark, `½α‖x‖²` with
/// `α = (1+√6)/5` for the default costs.
pub fn exact_linear_value(problem: &ControlProblem, x: &[f64]) -> Result<f64> {
    Ok(linear_reference(problem)?.value(x)?)
}

/// The exact linear value function as a model.
pub fn linear_reference(problem: &ControlProblem) -> Result<QuadraticValue> {
    require_linear(problem)?;
    let p = Matrix::from_diag(&[linear_root(problem, 0, 1.0), linear_root(problem, 1, 1.0)]);
    QuadraticValue::new(p)
}

/// All diagonal quadratics `½xᵀdiag(±…)x` that solve the linear HJB
/// equation exactly; the first entry is the valid (stabilizing) one.
pub fn linear_quadratic_solutions(problem: &ControlProblem) -> Result<Vec<QuadraticValue>> {
    require_linear(problem)?;
    let signs = [1.0, -1.0];
    let mut out = Vec::with_capacity(4);
    for s0 in signs {
        for s1 in signs {
            let p = Matrix::from_diag(&[linear_root(problem, 0, s0), linear_root(problem, 1, s1)]);
            out.push(QuadraticValue::new(p)?);
        }
    }
    Ok(out)
}

fn check_grid(model_dim: usize, grid: &EvalGrid) -> Result<Vec<f64>> {
    if grid.is_empty() {
        return Err(Error::Empty("evaluation grid"));
    }
    check_len("grid dimension", model_dim, grid.dim())?;
    Ok(grid.points())
}

/// Mean of `(V̂ − V_ref)²` over the grid.
pub fn mse_on_grid(model: &dyn ValueModel, reference: &dyn ValueModel, grid: &EvalGrid) -> Result<f64> {
    let pts = check_grid(model.input_dim(), grid)?;
    check_len("reference dimension", model.input_dim(), reference.input_dim())?;
    let (v, _) = model.eval_batch(&pts)?;
    let (r, _) = reference.eval_batch(&pts)?;
    Ok(v.iter().zip(&r).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / v.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualStats {
    /// Mean of `N(x, V̂)²`.
    pub mean: f64,
    /// Max of `N(x, V̂)²`.
    pub max: f64,
}

/// Pointwise HJB residuals `N(x, V̂)` in grid order.
pub fn residuals_on_grid(model: &dyn ValueModel, problem: &ControlProblem, grid: &EvalGrid) -> Result<Vec<f64>> {
    let n = problem.dim();
    let pts = check_grid(model.input_dim(), grid)?;
    check_len("model dimension", n, model.input_dim())?;
    let (_, grads) = model.eval_batch(&pts)?;
    pts.par_chunks(n)
        .zip(grads.par_chunks(n))
        .map(|(x, p)| hjb_residual(problem, x, p))
        .collect()
}

pub fn residual_on_grid(model: &dyn ValueModel, problem: &ControlProblem, grid: &EvalGrid) -> Result<ResidualStats> {
    let res = residuals_on_grid(model, problem, grid)?;
    let sq = res.iter().map(|r| r * r);
    let max = sq.clone().fold(0.0, f64::max);
    Ok(ResidualStats {
        mean: sq.sum::<f64>() / res.len() as f64,
        max,
    })
}

/// Default finite-difference step for [`compute_phi`].
pub const PHI_STEP: f64 = 1e-5;

/// `φ(x) = ∇v(x) − P(x)x` for `v(x) = ½xᵀP(x)x`, where `∇v` is a central
/// difference with one Richardson extrapolation (steps `h` and `h/2`).
pub fn compute_phi(problem: &ControlProblem, x: &[f64], h: f64) -> Result<Vec<f64>> {
    check_len("state", problem.dim(), x.len())?;
    if !(h > 0.0) {
        return Err(Error::InvalidConfig(format!("finite-difference step must be positive, got {h}")));
    }
    let center = sdre_value_at(problem, x)?;
    let v = |y: &[f64]| -> Result<f64> { Ok(sdre_value_at(problem, y)?.v) };
    let mut phi = Vec::with_capacity(x.len());
    for k in 0..x.len() {
        let diff = |step: f64| -> Result<f64> {
            let mut plus = x.to_vec();
            let mut minus = x.to_vec();
            plus[k] += step;
            minus[k] -= step;
            Ok((v(&plus)? - v(&minus)?) / (2.0 * step))
        };
        let coarse = diff(h)?;
        let fine = diff(0.5 * h)?;
        let grad = (4.0 * fine - coarse) / 3.0;
        phi.push(grad - center.dv[k]);
    }
    Ok(phi)
}

/// Exact gradient of `½xᵀP(x)x` for the nonlinear benchmark, from the
/// closed-form `P` and its derivative.
pub fn nonlinear2d_sdre_gradient(x: &[f64], epsilon: f64) -> Vec<f64> {
    let p = closed_form_p_nonlinear2d(x[0], epsilon);
    let dp = closed_form_dp_nonlinear2d(x[0], epsilon);
    let mut g = p.matvec(x);
    g[0] += 0.5 * dp.quadratic_form(x);
    g
}

/// Fig. 5 epsilon ladder.
pub const DISCREPANCY_EPSILONS: [f64; 6] = [1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscrepancyPoint {
    pub epsilon: f64,
    /// Mean of `|N(x, v_ε)|` over the grid.
    pub residual_stat: f64,
}

/// For each ε, the mean absolute HJB residual of the SDRE value function
/// `½xᵀP_ε(x)x` (with its true gradient) on the nonlinear benchmark.
pub fn sdre_discrepancy_curve(epsilons: &[f64], grid: &EvalGrid) -> Result<Vec<DiscrepancyPoint>> {
    let pts = check_grid(2, grid)?;
    epsilons
        .iter()
        .map(|&epsilon| {
            let problem = ControlProblem::nonlinear2d(epsilon)?;
            let res: Vec<f64> = pts
                .par_chunks(2)
                .map(|x| hjb_residual(&problem, x, &nonlinear2d_sdre_gradient(x, epsilon)).map(f64::abs))
                .collect::<Result<_>>()?;
            Ok(DiscrepancyPoint {
                epsilon,
                residual_stat: res.iter().sum::<f64>() / res.len() as f64,
            })
        })
        .collect()
}

/// `u = −R⁻¹g(x)ᵀ∇V̂(x)`.
pub fn value_feedback(problem: &ControlProblem, model: &dyn ValueModel, x: &[f64]) -> Result<Vec<f64>> {
    let dv = model.gradient(x)?;
    let gt = problem.eval_g(x)?.tr_matvec(&dv);
    Ok(problem.r_inv().matvec(&gt).into_iter().map(|u| -u).collect())
}

struct ValueController<'a> {
    problem: &'a ControlProblem,
    model: &'a dyn ValueModel,
}

impl Controller for ValueController<'_> {
    fn begin_step(&mut self, _x: &[f64]) -> Result<()> {
        Ok(())
    }

    fn control(&self, x: &[f64]) -> Result<Vec<f64>> {
        value_feedback(self.problem, self.model, x)
    }
}

/// Closed-loop rollout under the feedback law induced by `model`.
pub fn rollout_nn_policy(
    problem: &ControlProblem,
    model: &dyn ValueModel,
    x0: &[f64],
    dt: f64,
    horizon: f64,
) -> std::result::Result<Trajectory, RolloutFailure> {
    if let Err(error) = check_len("model dimension", problem.dim(), model.input_dim()) {
        return Err(RolloutFailure {
            partial: Trajectory::default(),
            error,
        });
    }
    let mut ctrl = ValueController { problem, model };
    simulate(problem, &mut ctrl, x0, dt, horizon)
}

/// Metrics of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    /// Index of the run; seeds are the base seeds shifted by this value.
    pub run: u64,
    /// Initialization seed (`None` for analytic models).
    pub seed: Option<u64>,
    /// Grid MSE against the reference, when one exists.
    pub mse: Option<f64>,
    /// Grid residual mean after the supervised step, when there was one.
    pub residual_supervised: Option<f64>,
    /// Grid residual mean of the final parameters.
    pub residual_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunFailure {
    pub run: u64,
    pub seed: u64,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub runs: Vec<RunMetrics>,
    pub failures: Vec<RunFailure>,
    pub median_mse: Option<f64>,
    pub median_residual_supervised: Option<f64>,
    pub median_residual: Option<f64>,
}

/// Median of a nonempty sample (mean of the two middle values when even).
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { 0.5 * (v[m - 1] + v[m]) })
}

fn evaluate_run(
    problem: &ControlProblem,
    config: &TrainConfig,
    mode: TrainMode,
    run: u64,
    grid: &EvalGrid,
    reference: Option<&dyn ValueModel>,
) -> Result<RunMetrics> {
    let mut cfg = config.clone();
    cfg.seeds = config.seeds.offset(run);
    let out = run_mode(problem, &cfg, mode, None, None)?;
    let residual_supervised = match (&out.theta_dat, mode) {
        (Some(theta), TrainMode::TwoStep) => Some(residual_on_grid(theta, problem, grid)?.mean),
        _ => None,
    };
    let mse = reference.map(|r| mse_on_grid(&out.params, r, grid)).transpose()?;
    Ok(RunMetrics {
        run,
        seed: Some(cfg.seeds.init),
        mse,
        residual_supervised,
        residual_mean: residual_on_grid(&out.params, problem, grid)?.mean,
    })
}

/// Trains `n_runs` times with seeds shifted by `0..n_runs` and summarizes
/// the grid metrics. Failed runs are recorded; medians use successes only.
pub fn median_over_runs(
    problem: &ControlProblem,
    config: &TrainConfig,
    mode: TrainMode,
    n_runs: usize,
    grid: &EvalGrid,
    reference: Option<&dyn ValueModel>,
) -> Result<RunSummary> {
    if n_runs == 0 {
        return Err(Error::InvalidConfig("n_runs must be at least 1".into()));
    }
    config.validate()?;
    let outcomes: Vec<(u64, Result<RunMetrics>)> = (0..n_runs as u64)
        .into_par_iter()
        .map(|run| (run, evaluate_run(problem, config, mode, run, grid, reference)))
        .collect();
    let mut runs = Vec::new();
    let mut failures = Vec::new();
    for (run, outcome) in outcomes {
        match outcome {
            Ok(m) => runs.push(m),
            Err(e) => failures.push(RunFailure {
                run,
                seed: config.seeds.offset(run).init,
                message: e.to_string(),
            }),
        }
    }
    let collect = |f: fn(&RunMetrics) -> Option<f64>| -> Vec<f64> { runs.iter().filter_map(f).collect() };
    Ok(RunSummary {
        median_mse: median(&collect(|m| m.mse)),
        median_residual_supervised: median(&collect(|m| m.residual_supervised)),
        median_residual: median(&collect(|m| Some(m.residual_mean))),
        runs,
        failures,
    })
}
