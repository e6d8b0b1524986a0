use super::lu::Lu;
use super::{LinalgError, Matrix};

/// Solves the continuous Lyapunov equation `AᵀX + XA + W = 0`.
///
/// The equation is vectorized into an n²×n² linear system and solved by LU.
/// Fails with [`LinalgError::Singular`] when two eigenvalues of `A` sum to
/// zero (the operator `X ↦ AᵀX + XA` is then not invertible).
pub fn solve_lyapunov(a: &Matrix, w: &Matrix) -> Result<Matrix, LinalgError> {
    let n = a.rows();
    if !a.is_square() || w.rows() != n || w.cols() != n {
        return Err(LinalgError::DimensionMismatch {
            expected: format!("square A and W of order {n}"),
            got: format!("A {}x{}, W {}x{}", a.rows(), a.cols(), w.rows(), w.cols()),
        });
    }
    if !a.is_finite() || !w.is_finite() {
        return Err(LinalgError::NonFinite);
    }
    let nn = n * n;
    let mut op = Matrix::zeros(nn, nn);
    // Unknown X[i][j] lives at i*n + j.
    for i in 0..n {
        for j in 0..n {
            let row = i * n + j;
            for k in 0..n {
                // (AᵀX)_{ij} = Σ_k A_{ki} X_{kj}
                op[(row, k * n + j)] += a[(k, i)];
                // (XA)_{ij} = Σ_k X_{ik} A_{kj}
                op[(row, i * n + k)] += a[(k, j)];
            }
        }
    }
    let rhs: Vec<f64> = w.as_slice().iter().map(|v| -v).collect();
    let x = Lu::factor(&op)?.solve(&rhs);
    let x = Matrix::from_row_major(n, n, x)?;
    if w.asymmetry() == 0.0 {
        Ok(x.symmetrize())
    } else {
        Ok(x)
    }
}

/// `AᵀX + XA + W`.
pub fn lyapunov_residual(a: &Matrix, x: &Matrix, w: &Matrix) -> Matrix {
    a.transpose().matmul(x).add(&x.matmul(a)).add(w)
}
