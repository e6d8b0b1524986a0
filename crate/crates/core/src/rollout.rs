//! Closed-loop simulation with RK4 and trapezoidal cost accumulation.

use std::fmt;

use crate::error::{check_len, Error, Result};
use crate::problems::ControlProblem;

/// Time-stamped closed-loop trajectory.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub controls: Vec<Vec<f64>>,
    /// Running cost accumulated up to each recorded time.
    pub costs: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_state(&self) -> Option<&[f64]> {
        self.states.last().map(Vec::as_slice)
    }

    pub fn total_cost(&self) -> f64 {
        self.costs.last().copied().unwrap_or(0.0)
    }

    fn push(&mut self, t: f64, x: Vec<f64>, u: Vec<f64>, cost: f64) {
        self.times.push(t);
        self.states.push(x);
        self.controls.push(u);
        self.costs.push(cost);
    }
}

/// A rollout that stopped early; `partial` holds everything recorded before
/// the failure.
#[derive(Debug)]
pub struct RolloutFailure {
    pub partial: Trajectory,
    pub error: Error,
}

impl fmt::Display for RolloutFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "rollout aborted after {} samples: {}", self.partial.len(), self.error)
    }
}

impl std::error::Error for RolloutFailure {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

impl From<RolloutFailure> for Error {
    fn from(f: RolloutFailure) -> Self {
        f.error
    }
}

/// A feedback law that may freeze some data at the start of every step.
pub trait Controller {
    /// Called once at each recorded state before the step is integrated.
    fn begin_step(&mut self, x: &[f64]) -> Result<()>;
    fn control(&self, x: &[f64]) -> Result<Vec<f64>>;
}

fn rk4_step(problem: &ControlProblem, ctrl: &dyn Controller, x: &[f64], dt: f64) -> Result<Vec<f64>> {
    let field = |y: &[f64]| -> Result<Vec<f64>> { problem.vector_field(y, &ctrl.control(y)?) };
    let axpy = |a: f64, k: &[f64]| -> Vec<f64> { x.iter().zip(k).map(|(xi, ki)| xi + a * ki).collect() };
    let k1 = field(x)?;
    let k2 = field(&axpy(0.5 * dt, &k1))?;
    let k3 = field(&axpy(0.5 * dt, &k2))?;
    let k4 = field(&axpy(dt, &k3))?;
    Ok((0..x.len())
        .map(|i| x[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect())
}

/// Integrates `ẋ = f(x) + g(x)u(x)` from `x0` for `round(horizon/dt)` steps.
pub fn simulate(
    problem: &ControlProblem,
    ctrl: &mut dyn Controller,
    x0: &[f64],
    dt: f64,
    horizon: f64,
) -> std::result::Result<Trajectory, RolloutFailure> {
    let mut traj = Trajectory::default();
    let fail = |traj: Trajectory, error: Error| RolloutFailure { partial: traj, error };
    if !(dt > 0.0) || !(horizon > 0.0) {
        return Err(fail(
            traj,
            Error::InvalidConfig(format!("need dt > 0 and horizon > 0, got dt={dt}, T={horizon}")),
        ));
    }
    if let Err(e) = check_len("initial state", problem.dim(), x0.len()) {
        return Err(fail(traj, e));
    }
    let steps = (horizon / dt).round() as usize;

    let start = |ctrl: &mut dyn Controller, x: &[f64]| -> Result<(Vec<f64>, f64)> {
        ctrl.begin_step(x)?;
        let u = ctrl.control(x)?;
        let l = problem.running_cost(x, &u)?;
        Ok((u, l))
    };

    let mut x = x0.to_vec();
    let (u, mut stage_cost) = match start(ctrl, &x) {
        Ok(v) => v,
        Err(e) => return Err(fail(traj, e)),
    };
    let mut acc = 0.0;
    traj.push(0.0, x.clone(), u, acc);

    for k in 0..steps {
        let next = match rk4_step(problem, ctrl, &x, dt) {
            Ok(v) => v,
            Err(e) => return Err(fail(traj, e)),
        };
        let t = (k + 1) as f64 * dt;
        if next.iter().any(|v| !v.is_finite()) {
            return Err(fail(traj, Error::NonFiniteState { time: t }));
        }
        x = next;
        let (u, l) = match start(ctrl, &x) {
            Ok(v) => v,
            Err(e) => return Err(fail(traj, e)),
        };
        acc += 0.5 * dt * (stage_cost + l);
        stage_cost = l;
        traj.push(t, x.clone(), u, acc);
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Gain(f64);

    impl Controller for Gain {
        fn begin_step(&mut self, _x: &[f64]) -> Result<()> {
            Ok(())
        }
        fn control(&self, x: &[f64]) -> Result<Vec<f64>> {
            Ok(x.iter().map(|v| -self.0 * v).collect())
        }
    }

    #[test]
    fn linear_decay_matches_exponential() {
        // ẋ = x − 3x = −2x
        let p = ControlProblem::linear2d();
        let traj = simulate(&p, &mut Gain(3.0), &[1.0, -2.0], 0.01, 1.0).unwrap();
        assert_eq!(traj.len(), 101);
        let want = (-2.0f64).exp();
        let xf = traj.final_state().unwrap();
        assert!((xf[0] - want).abs() < 1e-9 && (xf[1] + 2.0 * want).abs() < 1e-9);
        assert!(traj.costs.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn blow_up_returns_partial() {
        let p = ControlProblem::linear2d();
        let err = simulate(&p, &mut Gain(-1e150), &[1.0, 1.0], 0.1, 10.0).unwrap_err();
        assert!(matches!(err.error, Error::NonFiniteState { .. }));
        assert!(!err.partial.is_empty());
    }

    #[test]
    fn rejects_bad_step() {
        let p = ControlProblem::linear2d();
        assert!(simulate(&p, &mut Gain(1.0), &[1.0, 1.0], 0.0, 1.0).is_err());
    }
}
