//! Dense linear algebra kernels and the continuous algebraic Riccati solver.
//!
//! Everything here is sized for small systems (state dimension ≤ ~10, so
//! Hamiltonians ≤ 20×20) and implemented directly on row-major storage.

mod care;
pub mod eigen;
mod lu;
mod lyapunov;
mod matrix;

pub use care::{care_residual, solve_care, CareSolution};
pub use lu::{condition_inf, inverse, Lu};
pub use lyapunov::{lyapunov_residual, solve_lyapunov};
pub use matrix::Matrix;

use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum LinalgError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: String, got: String },
    #[error("matrix contains non-finite entries")]
    NonFinite,
    #[error("singular linear system")]
    Singular,
    #[error("QR iteration failed to converge")]
    NoConvergence,
    #[error("Hamiltonian has eigenvalues on the imaginary axis")]
    ImaginaryAxisEigenvalue,
    #[error("stable subspace extraction failed: {0}")]
    SubspaceExtraction(String),
    #[error("stable subspace basis is ill-conditioned (cond = {0:e})")]
    IllConditioned(f64),
    #[error("Riccati residual {residual:e} exceeds tolerance {tolerance:e} (problem too ill-conditioned)")]
    Inaccurate { residual: f64, tolerance: f64 },
    #[error("solution is not stabilizing (closed-loop spectral abscissa {0})")]
    NotStabilizing(f64),
    #[error("solution is not positive semidefinite (min eigenvalue {0})")]
    NotPositiveSemidefinite(f64),
}
