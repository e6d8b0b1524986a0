//! Data loss and HJB residual loss with exact parameter gradients.

use crate::error::{check_len, Error, Result};
use crate::linalg::Matrix;
use crate::network::{fused_value_and_pullback, NetParams, ValueModel};
use crate::problems::ControlProblem;
use crate::sdre::GradientDataset;

/// Loss value and its gradient with respect to the flat parameter vector.
#[derive(Debug, Clone)]
pub struct LossValue {
    pub value: f64,
    pub grad: Vec<f64>,
}

/// HJB residual `−½pᵀ g R⁻¹ gᵀ p + pᵀf(x) + ½xᵀQx` for a candidate gradient
/// `p = ∇V(x)`.
pub fn hjb_residual(problem: &ControlProblem, x: &[f64], v_grad: &[f64]) -> Result<f64> {
    check_len("value gradient", problem.dim(), v_grad.len())?;
    let weight = problem.control_weight(x)?;
    let f = problem.eval_f(x)?;
    Ok(residual_from_parts(&weight, &f, 0.5 * problem.q().quadratic_form(x), v_grad))
}

fn residual_from_parts(weight: &Matrix, f: &[f64], state_cost: f64, p: &[f64]) -> f64 {
    let gp = weight.matvec(p);
    let quad: f64 = p.iter().zip(&gp).map(|(a, b)| a * b).sum();
    let drift: f64 = p.iter().zip(f).map(|(a, b)| a * b).sum();
    -0.5 * quad + drift + state_cost
}

/// `λ₁·mean(V−V̂)² + λ₂·mean‖∇V−∇V̂‖²` and its gradient.
pub fn data_loss(params: &NetParams, dataset: &GradientDataset, lambda1: f64, lambda2: f64) -> Result<LossValue> {
    if dataset.is_empty() {
        return Err(Error::Empty("dataset"));
    }
    let n = params.input_dim();
    check_len("dataset state", n, dataset.dim())?;
    let xs: Vec<f64> = dataset.points.iter().flat_map(|p| p.x.iter().copied()).collect();
    let inv = 1.0 / dataset.len() as f64;
    let rule = |first: usize, values: &[f64], grads: &[f64], w_v: &mut [f64], w_g: &mut [f64]| -> f64 {
        let mut loss = 0.0;
        for (r, (&vh, gh)) in values.iter().zip(grads.chunks_exact(n)).enumerate() {
            let target = &dataset.points[first + r];
            let dv = target.v - vh;
            loss += lambda1 * inv * dv * dv;
            w_v[r] = -2.0 * lambda1 * inv * dv;
            for k in 0..n {
                let dg = target.dv[k] - gh[k];
                loss += lambda2 * inv * dg * dg;
                w_g[r * n + k] = -2.0 * lambda2 * inv * dg;
            }
        }
        loss
    };
    let (value, grad) = fused_value_and_pullback(params, &xs, &rule);
    Ok(LossValue { value, grad })
}

/// Collocation points with the problem data the residual needs at each of
/// them, precomputed once.
#[derive(Debug, Clone)]
pub struct CollocationSet {
    n: usize,
    m: usize,
    xs: Vec<f64>,
    drift: Vec<f64>,
    /// `g(xⁱ)` row-major, n×m per point.
    actuation: Vec<f64>,
    r_inv: Matrix,
    state_cost: Vec<f64>,
}

impl CollocationSet {
    pub fn new(problem: &ControlProblem, points: &[Vec<f64>]) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Empty("collocation point set"));
        }
        let (n, m) = (problem.dim(), problem.control_dim());
        let mut set = Self {
            n,
            m,
            xs: Vec::with_capacity(points.len() * n),
            drift: Vec::with_capacity(points.len() * n),
            actuation: Vec::with_capacity(points.len() * n * m),
            r_inv: problem.r_inv().clone(),
            state_cost: Vec::with_capacity(points.len()),
        };
        for x in points {
            check_len("collocation point", n, x.len())?;
            set.xs.extend_from_slice(x);
            set.drift.extend(problem.eval_f(x)?);
            set.actuation.extend_from_slice(problem.eval_g(x)?.as_slice());
            set.state_cost.push(0.5 * problem.q().quadratic_form(x));
        }
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.state_cost.len()
    }

    pub fn is_empty(&self) -> bool {
        self.state_cost.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn points_flat(&self) -> &[f64] {
        &self.xs
    }

    fn drift(&self, i: usize) -> &[f64] {
        &self.drift[i * self.n..(i + 1) * self.n]
    }

    /// Residual at point `i` and, if `dn_dp` is given, `∂N/∂p = f − g R⁻¹ gᵀ p`.
    fn residual(&self, i: usize, p: &[f64], dn_dp: Option<&mut [f64]>) -> f64 {
        let (n, m) = (self.n, self.m);
        let g = &self.actuation[i * n * m..(i + 1) * n * m];
        let mut gtp = vec![0.0; m];
        for (row, pk) in g.chunks_exact(m).zip(p) {
            for (acc, gkj) in gtp.iter_mut().zip(row) {
                *acc += gkj * pk;
            }
        }
        let u = self.r_inv.matvec(&gtp);
        let quad: f64 = gtp.iter().zip(&u).map(|(a, b)| a * b).sum();
        let f = self.drift(i);
        let drift: f64 = p.iter().zip(f).map(|(a, b)| a * b).sum();
        if let Some(out) = dn_dp {
            for (k, row) in g.chunks_exact(m).enumerate() {
                out[k] = f[k] - row.iter().zip(&u).map(|(a, b)| a * b).sum::<f64>();
            }
        }
        -0.5 * quad + drift + self.state_cost[i]
    }
}

/// `mean N(xⁱ, V̂)²` over the collocation set, and its gradient.
pub fn residual_loss(params: &NetParams, set: &CollocationSet) -> Result<LossValue> {
    check_len("collocation point", params.input_dim(), set.dim())?;
    let n = set.n;
    let inv = 1.0 / set.len() as f64;
    let rule = |first: usize, _values: &[f64], grads: &[f64], w_v: &mut [f64], w_g: &mut [f64]| -> f64 {
        let mut loss = 0.0;
        for (r, (p, wg)) in grads.chunks_exact(n).zip(w_g.chunks_exact_mut(n)).enumerate() {
            let res = set.residual(first + r, p, Some(wg));
            loss += inv * res * res;
            w_v[r] = 0.0;
            for w in wg.iter_mut() {
                *w *= 2.0 * res * inv;
            }
        }
        loss
    };
    let (value, grad) = fused_value_and_pullback(params, &set.xs, &rule);
    Ok(LossValue { value, grad })
}

/// Residual loss of any value model (no gradient).
pub fn residual_value(model: &dyn ValueModel, set: &CollocationSet) -> Result<f64> {
    check_len("collocation point", model.input_dim(), set.dim())?;
    let (_, grads) = model.eval_batch(&set.xs)?;
    let total: f64 = grads
        .chunks_exact(set.n)
        .enumerate()
        .map(|(i, p)| set.residual(i, p, None).powi(2))
        .sum();
    Ok(total / set.len() as f64)
}

/// `μ·V̂(0)²` and its gradient.
pub fn origin_anchor(params: &NetParams, weight: f64) -> Result<LossValue> {
    let zero = vec![0.0; params.input_dim()];
    let v0 = crate::network::forward(params, &zero)?;
    let grad = crate::network::pullback_params(params, &zero, 2.0 * weight * v0, &zero)?;
    Ok(LossValue {
        value: weight * v0 * v0,
        grad,
    })
}
