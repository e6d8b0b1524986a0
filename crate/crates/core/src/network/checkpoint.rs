//! JSON checkpoints. Floats are written in shortest round-trip form, so a
//! reloaded network reproduces forward outputs bit for bit.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Architecture, NetParams, QuadraticValue, ValueModel};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Checkpoint {
    Mlp {
        architecture: Architecture,
        seed: u64,
        params: Vec<f64>,
    },
    /// Analytic `½xᵀPx` reference stored in the same format.
    Quadratic { p: Vec<Vec<f64>> },
}

impl Checkpoint {
    pub fn from_params(params: &NetParams, seed: u64) -> Self {
        Checkpoint::Mlp {
            architecture: params.architecture().clone(),
            seed,
            params: params.flatten(),
        }
    }

    pub fn from_quadratic(q: &QuadraticValue) -> Self {
        let p = q.p();
        Checkpoint::Quadratic {
            p: (0..p.rows()).map(|i| p.row(i).to_vec()).collect(),
        }
    }

    pub fn to_params(&self) -> Result<NetParams> {
        match self {
            Checkpoint::Mlp {
                architecture, params, ..
            } => {
                let arch = Architecture::new(architecture.input_dim, architecture.hidden_widths.clone())?;
                NetParams::from_flat(arch, params.clone())
            }
            Checkpoint::Quadratic { .. } => Err(Error::NotApplicable(
                "quadratic checkpoint has no network parameters".into(),
            )),
        }
    }

    /// Loads any checkpoint kind as an evaluable model.
    pub fn to_model(&self) -> Result<Box<dyn ValueModel>> {
        match self {
            Checkpoint::Mlp { .. } => Ok(Box::new(self.to_params()?)),
            Checkpoint::Quadratic { p } => {
                let n = p.len();
                let flat: Vec<f64> = p.iter().flatten().copied().collect();
                if p.iter().any(|row| row.len() != n) {
                    return Err(Error::Parse("quadratic checkpoint matrix is not square".into()));
                }
                Ok(Box::new(QuadraticValue::new(Matrix::from_row_major(n, n, flat)?)?))
            }
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}
