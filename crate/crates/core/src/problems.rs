//! Infinite-horizon nonlinear quadratic regulator problems in semilinear
//! control-affine form `ẋ = A(x)x + g(x)u` with running cost
//! `½(xᵀQx + uᵀRu)`, and the three benchmark instances.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::linalg::{inverse, Matrix};

/// Axis-aligned sampling box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl Domain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::InvalidConfig("domain bounds differ in length".into()));
        }
        if lower.is_empty() {
            return Err(Error::InvalidConfig("domain has no coordinates".into()));
        }
        for (i, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(Error::InvalidConfig(format!(
                    "domain coordinate {i}: need finite lower < upper, got [{lo}, {hi}]"
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    /// The box `[lo, hi]^n`.
    pub fn cube(n: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo; n], vec![hi; n])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim() && x.iter().zip(&self.lower).zip(&self.upper).all(|((v, lo), hi)| lo <= v && v <= hi)
    }
}

/// Which benchmark dynamics a problem uses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProblemKind {
    /// `A = I₂`, `g = I₂`, `Q = I₂`, `R = 0.2·I₂`.
    Linear2d,
    /// `A(x) = [[0, 1], [εx₁², 0]]`, `g = [0; 1]`, `Q = R = I`.
    Nonlinear2d { epsilon: f64 },
    /// Cucker-Smale consensus of `n_agents` scalar agents, state
    /// `(y₁..y_N, v₁..v_N)`.
    CuckerSmale { n_agents: usize },
}

impl ProblemKind {
    pub fn name(&self) -> &'static str {
        match self {
            ProblemKind::Linear2d => "linear2d",
            ProblemKind::Nonlinear2d { .. } => "nonlinear2d",
            ProblemKind::CuckerSmale { .. } => "cucker_smale",
        }
    }
}

#[derive(Debug, Clone)]
pub struct ControlProblem {
    kind: ProblemKind,
    n: usize,
    m: usize,
    q: Matrix,
    r: Matrix,
    r_inv: Matrix,
    domain: Domain,
}

/// Default 2D sampling box.
pub const DEFAULT_2D_BOUND: f64 = 1.0;
/// Cucker-Smale sampling box half-width.
pub const CUCKER_SMALE_BOUND: f64 = 3.0;

impl ControlProblem {
    pub fn linear2d() -> Self {
        let r = Matrix::identity(2).scale(0.2);
        Self {
            kind: ProblemKind::Linear2d,
            n: 2,
            m: 2,
            q: Matrix::identity(2),
            r_inv: Matrix::identity(2).scale(5.0),
            r,
            domain: Domain::cube(2, -DEFAULT_2D_BOUND, DEFAULT_2D_BOUND).expect("valid box"),
        }
    }

    pub fn nonlinear2d(epsilon: f64) -> Result<Self> {
        if !(epsilon >= 0.0) || !epsilon.is_finite() {
            return Err(Error::InvalidConfig(format!("epsilon must be finite and >= 0, got {epsilon}")));
        }
        Ok(Self {
            kind: ProblemKind::Nonlinear2d { epsilon },
            n: 2,
            m: 1,
            q: Matrix::identity(2),
            r: Matrix::identity(1),
            r_inv: Matrix::identity(1),
            domain: Domain::cube(2, -DEFAULT_2D_BOUND, DEFAULT_2D_BOUND).expect("valid box"),
        })
    }

    pub fn cucker_smale(n_agents: usize) -> Result<Self> {
        if n_agents < 1 {
            return Err(Error::InvalidConfig("cucker_smale needs at least one agent".into()));
        }
        let n = 2 * n_agents;
        Ok(Self {
            kind: ProblemKind::CuckerSmale { n_agents },
            n,
            m: n_agents,
            q: Matrix::identity(n).scale(1.0 / n_agents as f64),
            r: Matrix::identity(n_agents),
            r_inv: Matrix::identity(n_agents),
            domain: Domain::cube(n, -CUCKER_SMALE_BOUND, CUCKER_SMALE_BOUND).expect("valid box"),
        })
    }

    /// Replaces the sampling domain.
    pub fn with_domain(mut self, domain: Domain) -> Result<Self> {
        check_len("domain", self.n, domain.dim())?;
        self.domain = domain;
        Ok(self)
    }

    /// Replaces the cost matrices (Q symmetric PSD, R symmetric PD).
    pub fn with_costs(mut self, q: Matrix, r: Matrix) -> Result<Self> {
        if q.rows() != self.n || q.cols() != self.n || r.rows() != self.m || r.cols() != self.m {
            return Err(Error::InvalidConfig("cost matrix shapes do not match the problem".into()));
        }
        self.r_inv = inverse(&r)?;
        self.q = q;
        self.r = r;
        Ok(self)
    }

    pub fn kind(&self) -> ProblemKind {
        self.kind
    }

    pub fn name(&self) -> &'static str {
        self.kind.name()
    }

    /// State dimension n.
    pub fn dim(&self) -> usize {
        self.n
    }

    /// Control dimension m.
    pub fn control_dim(&self) -> usize {
        self.m
    }

    pub fn q(&self) -> &Matrix {
        &self.q
    }

    pub fn r(&self) -> &Matrix {
        &self.r
    }

    pub fn r_inv(&self) -> &Matrix {
        &self.r_inv
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    /// Semilinear factor `A(x)`.
    pub fn eval_a(&self, x: &[f64]) -> Result<Matrix> {
        check_len("state", self.n, x.len())?;
        Ok(match self.kind {
            ProblemKind::Linear2d => Matrix::identity(2),
            ProblemKind::Nonlinear2d { epsilon } => {
                Matrix::from_rows(&[&[0.0, 1.0], &[epsilon * x[0] * x[0], 0.0]])
            }
            ProblemKind::CuckerSmale { n_agents } => {
                let na = n_agents;
                let mut a = Matrix::zeros(2 * na, 2 * na);
                for i in 0..na {
                    a[(i, na + i)] = 1.0;
                }
                let coupling = cucker_smale_coupling(&x[..na]);
                a.set_block(na, na, &coupling);
                a
            }
        })
    }

    /// Actuation matrix `g(x)` (n×m).
    pub fn eval_g(&self, x: &[f64]) -> Result<Matrix> {
        check_len("state", self.n, x.len())?;
        Ok(match self.kind {
            ProblemKind::Linear2d => Matrix::identity(2),
            ProblemKind::Nonlinear2d { .. } => Matrix::column(&[0.0, 1.0]),
            ProblemKind::CuckerSmale { n_agents } => {
                let mut g = Matrix::zeros(2 * n_agents, n_agents);
                for i in 0..n_agents {
                    g[(n_agents + i, i)] = 1.0;
                }
                g
            }
        })
    }

    /// Drift `f(x) = A(x)x`.
    pub fn eval_f(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.eval_a(x)?.matvec(x))
    }

    /// `g(x) R⁻¹ g(x)ᵀ`, the quadratic weight of the Hamiltonian's control term.
    pub fn control_weight(&self, x: &[f64]) -> Result<Matrix> {
        let g = self.eval_g(x)?;
        Ok(g.matmul(&self.r_inv).matmul(&g.transpose()))
    }

    /// `½(xᵀQx + uᵀRu)`.
    pub fn running_cost(&self, x: &[f64], u: &[f64]) -> Result<f64> {
        check_len("state", self.n, x.len())?;
        check_len("control", self.m, u.len())?;
        Ok(0.5 * (self.q.quadratic_form(x) + self.r.quadratic_form(u)))
    }

    /// Closed-loop vector field `f(x) + g(x)u`.
    pub fn vector_field(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        check_len("control", self.m, u.len())?;
        let mut dx = self.eval_f(x)?;
        let gu = self.eval_g(x)?.matvec(u);
        for (d, v) in dx.iter_mut().zip(gu) {
            *d += v;
        }
        Ok(dx)
    }
}

/// Velocity-coupling block: off-diagonal `κᵢⱼ/N`, diagonal `−Σ_{k≠i} κᵢₖ/N`
/// with `κᵢⱼ = 1/(1 + |yᵢ − yⱼ|²)`, so every row sums to zero.
fn cucker_smale_coupling(positions: &[f64]) -> Matrix {
    let na = positions.len();
    let inv_n = 1.0 / na as f64;
    let mut c = Matrix::zeros(na, na);
    for i in 0..na {
        let mut diag = 0.0;
        for j in 0..na {
            if i == j {
                continue;
            }
            let d = positions[i] - positions[j];
            let k = inv_n / (1.0 + d * d);
            c[(i, j)] = k;
            diag -= k;
        }
        c[(i, i)] = diag;
    }
    c
}
