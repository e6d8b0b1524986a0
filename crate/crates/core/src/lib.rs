//! Neural value-function approximation for infinite-horizon nonlinear
//! quadratic regulator problems.
//!
//! A sigmoid network is first fitted to value and gradient samples produced
//! by state-dependent Riccati equations ([`sdre`]), then refined by
//! minimizing the Hamilton-Jacobi-Bellman residual at collocation points
//! ([`training`]). The warm start steers the residual minimization towards
//! the stabilizing value function instead of one of the spurious solutions
//! the residual alone admits.

pub mod error;
pub mod evaluation;
pub mod io;
pub mod linalg;
pub mod network;
pub mod problems;
pub mod rollout;
pub mod sampling;
pub mod sdre;
pub mod training;

pub use error::{Error, Result};
pub use network::{Architecture, NetParams, ValueModel};
pub use problems::{ControlProblem, Domain, ProblemKind};
