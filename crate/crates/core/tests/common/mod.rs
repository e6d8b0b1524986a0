//! Generators and independent oracles shared by the integration tests.
#![allow(dead_code)]

use rand::distributions::{Distribution, Uniform};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use hjb_core::linalg::eigen::{min_symmetric_eigenvalue, spectral_abscissa};
use hjb_core::linalg::{inverse, CareSolution, Matrix};
use hjb_core::network::{forward, grad_x, init_xavier, Architecture};
use hjb_core::NetParams;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Matrix {
    let d = Uniform::new_inclusive(-scale, scale);
    Matrix::from_row_major(rows, cols, (0..rows * cols).map(|_| d.sample(rng)).collect()).unwrap()
}

/// Random `(A, B, Q, R)` with `n ≤ max_n`. A random `B` makes `(A, B)`
/// controllable with probability one; `Q` and `R` are shifted to be
/// positive definite.
pub fn random_system(rng: &mut ChaCha8Rng, max_n: usize) -> (Matrix, Matrix, Matrix, Matrix) {
    let n = rng.gen_range(1..=max_n);
    let m = rng.gen_range(1..=n);
    let a = random_matrix(rng, n, n, 1.0);
    let b = random_matrix(rng, n, m, 1.0).add(&Matrix::identity(n).block(0, 0, n, m));
    let c = random_matrix(rng, n, n, 1.0);
    let d = random_matrix(rng, m, m, 1.0);
    let q = c.transpose().matmul(&c).add(&Matrix::identity(n).scale(0.1));
    let r = d.transpose().matmul(&d).add(&Matrix::identity(m).scale(0.5));
    (a, b, q, r)
}

/// Checks the solution invariants by recomputation, independent of the
/// diagnostics the solver reports.
pub fn check_care_invariants(a: &Matrix, b: &Matrix, q: &Matrix, r: &Matrix, sol: &CareSolution) -> Result<(), String> {
    let p = &sol.p;
    let s = b.matmul(&inverse(r).unwrap()).matmul(&b.transpose());
    let res = a
        .transpose()
        .matmul(p)
        .add(&p.matmul(a))
        .sub(&p.matmul(&s).matmul(p))
        .add(q)
        .norm_inf();
    if !(res < 1e-8 * (1.0 + p.norm_inf())) {
        return Err(format!("CARE residual {res:e} with |P| {:e}", p.norm_inf()));
    }
    let asym = p.sub(&p.transpose()).norm_inf();
    if asym > 1e-10 {
        return Err(format!("P asymmetric by {asym:e}"));
    }
    let min_eig = min_symmetric_eigenvalue(p).unwrap();
    if min_eig < -1e-10 {
        return Err(format!("P has eigenvalue {min_eig:e}"));
    }
    let closed = a.sub(&s.matmul(p));
    let abscissa = spectral_abscissa(&closed).unwrap();
    if !(abscissa < 0.0) {
        return Err(format!("closed loop not Hurwitz: max Re λ = {abscissa:e}"));
    }
    Ok(())
}

/// A small random sigmoid network and an input point.
pub fn random_net(rng: &mut ChaCha8Rng) -> (NetParams, Vec<f64>) {
    let n = rng.gen_range(1..=4);
    let depth = rng.gen_range(1..=3);
    let widths: Vec<usize> = (0..depth).map(|_| rng.gen_range(1..=6)).collect();
    let arch = Architecture::new(n, widths).unwrap();
    let mut params = init_xavier(&arch, rng.gen());
    // Nonzero biases so every code path is exercised.
    let d = Uniform::new_inclusive(-0.5, 0.5);
    for v in params.as_mut_slice() {
        *v += d.sample(rng);
    }
    let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
    (params, x)
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// `‖a − b‖ / max(‖a‖, ‖b‖, floor)`.
pub fn rel_err(a: &[f64], b: &[f64], floor: f64) -> f64 {
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm(&diff) / norm(a).max(norm(b)).max(floor)
}

/// Central difference of `f` along every coordinate of `at`.
pub fn central_diff(at: &[f64], h: f64, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    (0..at.len())
        .map(|k| {
            let mut p = at.to_vec();
            let mut m = at.to_vec();
            p[k] += h;
            m[k] -= h;
            (f(&p) - f(&m)) / (2.0 * h)
        })
        .collect()
}

/// Finite-difference oracle for `∂/∂θ [w_v·V̂ + w_gᵀ∇ₓV̂]`. The inner
/// `∇ₓV̂` comes from `grad_x`, which is checked against [`fd_grad_x`].
pub fn fd_pullback(params: &NetParams, x: &[f64], w_v: f64, w_g: &[f64], h: f64) -> Vec<f64> {
    let arch = params.architecture().clone();
    central_diff(params.as_slice(), h, |theta| {
        let p = NetParams::from_flat(arch.clone(), theta.to_vec()).unwrap();
        let g = grad_x(&p, x).unwrap();
        w_v * forward(&p, x).unwrap() + w_g.iter().zip(&g).map(|(a, b)| a * b).sum::<f64>()
    })
}

/// `∇ₓV̂` by central differences of the forward pass.
pub fn fd_grad_x(params: &NetParams, x: &[f64], h: f64) -> Vec<f64> {
    central_diff(x, h, |y| forward(params, y).unwrap())
}
