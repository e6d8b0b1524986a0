//! Continuous algebraic Riccati equation
//! `AᵀP + PA − PBR⁻¹BᵀP + Q = 0`.
//!
//! The stabilizing solution is read off the stable invariant subspace
//! `[X₁; X₂]` of the Hamiltonian `[[A, −BR⁻¹Bᵀ], [−Q, −Aᵀ]]` as
//! `P = X₂X₁⁻¹`, symmetrized, and polished by one Newton (Kleinman) step.

use num_complex::Complex64;

use super::eigen::{cluster_eigenvalues, cluster_subspace, eigenvalues, min_symmetric_eigenvalue, spectral_abscissa};
use super::lu::{condition_inf, inverse, Lu};
use super::lyapunov::solve_lyapunov;
use super::{LinalgError, Matrix};

/// Eigenvalues with |Re λ| below this (relative to ‖H‖) count as lying on
/// the imaginary axis.
const IMAG_AXIS_TOL: f64 = 1e-9;
/// Eigenvalues closer than this (relative to ‖H‖) are grouped into one
/// cluster before basis extraction.
const CLUSTER_TOL: f64 = 1e-6;
const MAX_CONDITION: f64 = 1e12;
/// Accepted residual, relative to `1 + ‖P‖∞`.
const RESIDUAL_TOL: f64 = 1e-8;

/// Stabilizing solution of the CARE together with diagnostics.
#[derive(Debug, Clone)]
pub struct CareSolution {
    pub p: Matrix,
    /// ∞-norm of `AᵀP + PA − PBR⁻¹BᵀP + Q`.
    pub residual_norm: f64,
    /// Largest real part of the spectrum of `A − BR⁻¹BᵀP`.
    pub closed_loop_spectrum_max_real: f64,
}

/// Residual matrix `AᵀP + PA − P S P + Q` with `S = BR⁻¹Bᵀ`.
pub fn care_residual(a: &Matrix, s: &Matrix, q: &Matrix, p: &Matrix) -> Matrix {
    a.transpose()
        .matmul(p)
        .add(&p.matmul(a))
        .sub(&p.matmul(s).matmul(p))
        .add(q)
}

pub fn solve_care(a: &Matrix, b: &Matrix, q: &Matrix, r: &Matrix) -> Result<CareSolution, LinalgError> {
    let n = a.rows();
    let m = b.cols();
    if !a.is_square() || b.rows() != n || q.rows() != n || q.cols() != n || r.rows() != m || r.cols() != m {
        return Err(LinalgError::DimensionMismatch {
            expected: format!("A {n}x{n}, B {n}xm, Q {n}x{n}, R mxm"),
            got: format!(
                "A {}x{}, B {}x{}, Q {}x{}, R {}x{}",
                a.rows(),
                a.cols(),
                b.rows(),
                b.cols(),
                q.rows(),
                q.cols(),
                r.rows(),
                r.cols()
            ),
        });
    }
    for mat in [a, b, q, r] {
        if !mat.is_finite() {
            return Err(LinalgError::NonFinite);
        }
    }
    let r_inv = inverse(r)?;
    let s = b.matmul(&r_inv).matmul(&b.transpose());

    let mut ham = Matrix::zeros(2 * n, 2 * n);
    ham.set_block(0, 0, a);
    ham.set_block(0, n, &s.scale(-1.0));
    ham.set_block(n, 0, &q.scale(-1.0));
    ham.set_block(n, n, &a.transpose().scale(-1.0));

    let basis = stable_subspace(&ham, n)?;
    let x1 = basis.block(0, 0, n, n);
    let x2 = basis.block(n, 0, n, n);
    let cond = condition_inf(&x1).map_err(|_| LinalgError::IllConditioned(f64::INFINITY))?;
    if !(cond < MAX_CONDITION) {
        return Err(LinalgError::IllConditioned(cond));
    }
    // P X₁ = X₂  ⇔  X₁ᵀ Pᵀ = X₂ᵀ
    let p0 = Lu::factor(&x1.transpose())?.solve_matrix(&x2.transpose()).transpose().symmetrize();

    // Newton refinement: (A − S P₀)ᵀ P + P (A − S P₀) + Q + P₀ S P₀ = 0.
    let closed = a.sub(&s.matmul(&p0));
    let w = q.add(&p0.matmul(&s).matmul(&p0));
    let p = match solve_lyapunov(&closed, &w) {
        Ok(p1) => {
            let p1 = p1.symmetrize();
            let r0 = care_residual(a, &s, q, &p0).norm_inf();
            let r1 = care_residual(a, &s, q, &p1).norm_inf();
            if r1 <= r0 {
                p1
            } else {
                p0
            }
        }
        Err(_) => p0,
    };

    let residual_norm = care_residual(a, &s, q, &p).norm_inf();
    let tolerance = RESIDUAL_TOL * (1.0 + p.norm_inf());
    if !(residual_norm < tolerance) {
        return Err(LinalgError::Inaccurate {
            residual: residual_norm,
            tolerance,
        });
    }
    let closed_loop_spectrum_max_real = spectral_abscissa(&a.sub(&s.matmul(&p)))?;
    if !(closed_loop_spectrum_max_real < 0.0) {
        return Err(LinalgError::NotStabilizing(closed_loop_spectrum_max_real));
    }
    let min_eig = min_symmetric_eigenvalue(&p)?;
    if min_eig < -1e-10 * (1.0 + p.norm_inf()) {
        return Err(LinalgError::NotPositiveSemidefinite(min_eig));
    }
    Ok(CareSolution {
        p,
        residual_norm,
        closed_loop_spectrum_max_real,
    })
}

/// Real 2n×n basis of the stable invariant subspace of the Hamiltonian.
fn stable_subspace(ham: &Matrix, n: usize) -> Result<Matrix, LinalgError> {
    let scale = 1.0 + ham.norm_inf();
    let ev = eigenvalues(ham)?;
    if ev.iter().any(|l| l.re.abs() <= IMAG_AXIS_TOL * scale) {
        return Err(LinalgError::ImaginaryAxisEigenvalue);
    }
    let stable: Vec<Complex64> = ev.into_iter().filter(|l| l.re < 0.0).collect();
    if stable.len() != n {
        return Err(LinalgError::SubspaceExtraction(format!(
            "found {} stable eigenvalues, need {n}",
            stable.len()
        )));
    }

    let clusters = cluster_eigenvalues(&stable, CLUSTER_TOL * scale);
    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(n);
    for c in clusters.iter() {
        let self_conjugate = c.center.im.abs() <= CLUSTER_TOL * scale;
        if !self_conjugate && c.center.im < 0.0 {
            // Realified together with its conjugate partner.
            continue;
        }
        let complex_basis = cluster_subspace(ham, c)?;
        let mut candidates: Vec<Vec<f64>> = Vec::with_capacity(2 * complex_basis.len());
        for v in &complex_basis {
            candidates.push(v.iter().map(|z| z.re).collect());
            candidates.push(v.iter().map(|z| z.im).collect());
        }
        let want = if self_conjugate { c.multiplicity } else { 2 * c.multiplicity };
        columns.extend(select_real_basis(candidates, want)?);
    }
    if columns.len() != n {
        return Err(LinalgError::SubspaceExtraction(format!(
            "assembled {} basis vectors, need {n}",
            columns.len()
        )));
    }
    let mut out = Matrix::zeros(2 * n, n);
    for (j, col) in columns.iter().enumerate() {
        for (i, &v) in col.iter().enumerate() {
            out[(i, j)] = v;
        }
    }
    Ok(out)
}

/// Greedy pivoted Gram-Schmidt: picks `want` orthonormal directions spanning
/// the dominant part of `candidates`.
fn select_real_basis(mut candidates: Vec<Vec<f64>>, want: usize) -> Result<Vec<Vec<f64>>, LinalgError> {
    let mut chosen: Vec<Vec<f64>> = Vec::with_capacity(want);
    for _ in 0..want {
        let (idx, norm) = candidates
            .iter()
            .enumerate()
            .map(|(i, c)| (i, c.iter().map(|v| v * v).sum::<f64>().sqrt()))
            .fold((usize::MAX, 0.0), |acc, c| if c.1 > acc.1 { c } else { acc });
        if idx == usize::MAX || norm < 1e-6 {
            return Err(LinalgError::SubspaceExtraction(
                "could not realify eigenvector basis".into(),
            ));
        }
        let v: Vec<f64> = candidates.swap_remove(idx).into_iter().map(|x| x / norm).collect();
        for c in candidates.iter_mut() {
            let d: f64 = c.iter().zip(&v).map(|(a, b)| a * b).sum();
            for (ci, vi) in c.iter_mut().zip(&v) {
                *ci -= d * vi;
            }
        }
        chosen.push(v);
    }
    Ok(chosen)
}
