//! State-dependent Riccati equation (SDRE) layer: pointwise value/gradient
//! surrogates `V(x) ≈ ½xᵀP(x)x`, `∇V(x) ≈ P(x)x`, the gradient-augmented
//! dataset built from them, and SDRE closed-loop rollouts.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::linalg::{solve_care, Matrix};
use crate::problems::ControlProblem;
use crate::rollout::{simulate, Controller, RolloutFailure, Trajectory};
use crate::sampling::uniform_point;

/// Default rollout step.
pub const DEFAULT_DT: f64 = 0.01;

/// SDRE solution at a single state.
#[derive(Debug, Clone)]
pub struct SdreValue {
    pub p: Matrix,
    pub v: f64,
    pub dv: Vec<f64>,
}

/// Solves the Riccati equation with all operators frozen at `x`.
pub fn sdre_value_at(problem: &ControlProblem, x: &[f64]) -> Result<SdreValue> {
    let a = problem.eval_a(x)?;
    let g = problem.eval_g(x)?;
    let sol = solve_care(&a, &g, problem.q(), problem.r()).map_err(|source| Error::Care {
        state: x.to_vec(),
        source,
    })?;
    let dv = sol.p.matvec(x);
    let v = 0.5 * x.iter().zip(&dv).map(|(a, b)| a * b).sum::<f64>();
    Ok(SdreValue { p: sol.p, v, dv })
}

/// Closed-form SDRE solution of the 2D nonlinear benchmark.
pub fn closed_form_p_nonlinear2d(x1: f64, epsilon: f64) -> Matrix {
    let s = epsilon * x1 * x1;
    let root = (s * s + 1.0).sqrt();
    let p12 = s + root;
    let p22 = (1.0 + 2.0 * p12).sqrt();
    let p11 = root * p22;
    Matrix::from_rows(&[&[p11, p12], &[p12, p22]])
}

/// `dP/dx₁` of [`closed_form_p_nonlinear2d`] (P does not depend on x₂).
pub fn closed_form_dp_nonlinear2d(x1: f64, epsilon: f64) -> Matrix {
    let s = epsilon * x1 * x1;
    let ds = 2.0 * epsilon * x1;
    let root = (s * s + 1.0).sqrt();
    let droot = s * ds / root;
    let p12 = s + root;
    let dp12 = ds + droot;
    let p22 = (1.0 + 2.0 * p12).sqrt();
    let dp22 = dp12 / p22;
    let dp11 = droot * p22 + root * dp22;
    Matrix::from_rows(&[&[dp11, dp12], &[dp12, dp22]])
}

/// How dataset states are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataMode {
    /// Uniform samples over the problem domain.
    Pointwise,
    /// States visited by SDRE rollouts from uniformly sampled initial states.
    Trajectory,
}

impl DataMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            DataMode::Pointwise => "pointwise",
            DataMode::Trajectory => "trajectory",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataPoint {
    pub x: Vec<f64>,
    pub v: f64,
    pub dv: Vec<f64>,
}

/// Gradient-augmented supervised data `{xⁱ, V(xⁱ), ∇V(xⁱ)}`.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientDataset {
    pub points: Vec<DataPoint>,
    pub problem_tag: String,
    pub seed: u64,
    pub mode: DataMode,
}

impl GradientDataset {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.first().map_or(0, |p| p.x.len())
    }
}

/// Rollout horizon and sampling stride used in trajectory mode.
const TRAJECTORY_HORIZON: f64 = 8.0;
const TRAJECTORY_STRIDE: usize = 20;

pub fn generate_dataset(problem: &ControlProblem, n1: usize, seed: u64, mode: DataMode) -> Result<GradientDataset> {
    if n1 == 0 {
        return Err(Error::InvalidConfig("dataset size N1 must be at least 1".into()));
    }
    let points = match mode {
        DataMode::Pointwise => (0..n1)
            .into_par_iter()
            .map(|i| {
                let x = uniform_point(problem.domain(), seed, i as u64);
                let s = sdre_value_at(problem, &x).map_err(|e| Error::Sample {
                    index: i,
                    source: Box::new(e),
                })?;
                Ok(DataPoint { x, v: s.v, dv: s.dv })
            })
            .collect::<Result<Vec<_>>>()?,
        DataMode::Trajectory => {
            let mut points = Vec::with_capacity(n1);
            let mut traj_index = 0u64;
            while points.len() < n1 {
                let x0 = uniform_point(problem.domain(), seed, traj_index);
                let traj = rollout_sdre(problem, &x0, DEFAULT_DT, TRAJECTORY_HORIZON).map_err(|f| Error::Sample {
                    index: points.len(),
                    source: Box::new(f.error),
                })?;
                for x in traj.states.iter().step_by(TRAJECTORY_STRIDE) {
                    if points.len() == n1 {
                        break;
                    }
                    let s = sdre_value_at(problem, x).map_err(|e| Error::Sample {
                        index: points.len(),
                        source: Box::new(e),
                    })?;
                    points.push(DataPoint {
                        x: x.clone(),
                        v: s.v,
                        dv: s.dv,
                    });
                }
                traj_index += 1;
            }
            points
        }
    };
    Ok(GradientDataset {
        points,
        problem_tag: problem.name().to_string(),
        seed,
        mode,
    })
}

/// `u = −R⁻¹ g(x̄)ᵀ P x`, with `P` solved at `x_bar`.
pub fn sdre_feedback(problem: &ControlProblem, p: &Matrix, x_bar: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    check_len("state", problem.dim(), x.len())?;
    if p.rows() != problem.dim() || p.cols() != problem.dim() {
        return Err(Error::Dimension {
            what: "Riccati matrix order",
            expected: problem.dim(),
            got: p.rows(),
        });
    }
    let g = problem.eval_g(x_bar)?;
    let gt_px = g.tr_matvec(&p.matvec(x));
    Ok(problem.r_inv().matvec(&gt_px).into_iter().map(|v| -v).collect())
}

/// SDRE controller: re-solves `P(x̄)` at every step and holds the resulting
/// linear gain fixed over that step.
struct SdreController<'a> {
    problem: &'a ControlProblem,
    gain: Matrix,
}

impl Controller for SdreController<'_> {
    fn begin_step(&mut self, x: &[f64]) -> Result<()> {
        let s = sdre_value_at(self.problem, x)?;
        let g = self.problem.eval_g(x)?;
        self.gain = self.problem.r_inv().matmul(&g.transpose()).matmul(&s.p);
        Ok(())
    }

    fn control(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.gain.matvec(x).into_iter().map(|v| -v).collect())
    }
}

pub fn rollout_sdre(
    problem: &ControlProblem,
    x0: &[f64],
    dt: f64,
    horizon: f64,
) -> std::result::Result<Trajectory, RolloutFailure> {
    let mut ctrl = SdreController {
        problem,
        gain: Matrix::zeros(problem.control_dim(), problem.dim()),
    };
    simulate(problem, &mut ctrl, x0, dt, horizon)
}
