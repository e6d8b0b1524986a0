use thiserror::Error;

use crate::linalg::LinalgError;
use crate::network::NetParams;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("{what}: expected length {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("Riccati solve failed at x = {state:?}: {source}")]
    Care { state: Vec<f64>, source: LinalgError },
    #[error("Riccati solve failed for sample {index}: {source}")]
    Sample { index: usize, source: Box<Error> },
    #[error("{0} is empty")]
    Empty(&'static str),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("{0}")]
    NotApplicable(String),
    #[error("{stage} training diverged at iteration {iteration} (non-finite loss)")]
    Diverged {
        stage: &'static str,
        iteration: usize,
        last_finite: Box<NetParams>,
    },
    #[error("state became non-finite at t = {time}")]
    NonFiniteState { time: f64 },
    #[error("malformed input: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Whether the failure is numerical (Riccati, divergence, blow-up) rather
    /// than a usage or I/O problem.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::Linalg(_)
            | Error::Care { .. }
            | Error::Diverged { .. }
            | Error::NonFiniteState { .. } => true,
            Error::Sample { source, .. } => source.is_numerical(),
            _ => false,
        }
    }

    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io(_) | Error::Json(_) | Error::Parse(_))
    }
}

pub(crate) fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension { what, expected, got })
    }
}
