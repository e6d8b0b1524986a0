//! JSON run configuration.

use std::path::PathBuf;

use serde::Deserialize;

use hjb_core::evaluation::{EvalGrid, DISCREPANCY_EPSILONS};
use hjb_core::sampling::uniform_point;
use hjb_core::sdre::{DataMode, DEFAULT_DT};
use hjb_core::training::{AdamConfig, CollocationMode, Phase, Seeds, TrainConfig};
use hjb_core::{ControlProblem, Domain};

use crate::error::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfigFile {
    pub problem: ProblemSection,
    pub data: DataSection,
    pub training: TrainingSection,
    #[serde(default)]
    pub evaluation: EvaluationSection,
    pub rollout: Option<RolloutSection>,
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    pub name: String,
    pub epsilon: Option<f64>,
    pub n_agents: Option<usize>,
    pub domain: Option<DomainSection>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSection {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub n1: Option<usize>,
    #[serde(default = "default_data_mode")]
    pub mode: DataMode,
    pub seed: u64,
}

fn default_data_mode() -> DataMode {
    DataMode::Pointwise
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingSeeds {
    pub init: u64,
    pub collocation: u64,
}

/// Overrides of the per-problem training defaults. Seeds have no default.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingSection {
    pub seeds: TrainingSeeds,
    pub hidden_widths: Option<Vec<usize>>,
    pub lambda1: Option<f64>,
    pub lambda2: Option<f64>,
    pub supervised_phases: Option<Vec<Phase>>,
    pub residual_phases: Option<Vec<Phase>>,
    pub n2: Option<usize>,
    pub adam: Option<AdamConfig>,
    pub anchor_weight: Option<f64>,
    pub pin_origin: Option<bool>,
    pub collocation: Option<CollocationMode>,
    /// Iterations between MSE probes in the trace (linear problem only).
    #[serde(default = "default_monitor_every")]
    pub monitor_every: usize,
}

fn default_monitor_every() -> usize {
    100
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluationSection {
    /// Points per axis; defaults to 100 per axis in 2D and 3 above.
    pub grid: Option<Vec<usize>>,
    #[serde(default = "default_n_runs")]
    pub n_runs: usize,
    pub epsilons: Option<Vec<f64>>,
}

fn default_n_runs() -> usize {
    1
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RolloutSection {
    /// Explicit initial states; otherwise `samples` are drawn with `seed`.
    pub x0: Option<Vec<Vec<f64>>>,
    pub samples: Option<usize>,
    pub seed: Option<u64>,
    pub dt: Option<f64>,
    pub horizon: f64,
}

impl RunConfigFile {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("config: {e}")))
    }

    /// Forces every seed in the file to `k`.
    pub fn override_seeds(&mut self, k: u64) {
        self.data.seed = k;
        self.training.seeds = TrainingSeeds {
            init: k,
            collocation: k,
        };
        if let Some(r) = &mut self.rollout {
            if r.seed.is_some() {
                r.seed = Some(k);
            }
        }
    }

    pub fn build_problem(&self) -> Result<ControlProblem, CliError> {
        let p = &self.problem;
        let problem = match p.name.as_str() {
            "linear2d" => ControlProblem::linear2d(),
            "nonlinear2d" => ControlProblem::nonlinear2d(p.epsilon.unwrap_or(1.0))?,
            "cucker_smale" => ControlProblem::cucker_smale(p.n_agents.unwrap_or(5))?,
            other => {
                return Err(CliError::Config(format!(
                    "unknown problem '{other}' (expected linear2d, nonlinear2d or cucker_smale)"
                )))
            }
        };
        if p.epsilon.is_some() && p.name != "nonlinear2d" {
            return Err(CliError::Config(format!("epsilon does not apply to {}", p.name)));
        }
        if p.n_agents.is_some() && p.name != "cucker_smale" {
            return Err(CliError::Config(format!("n_agents does not apply to {}", p.name)));
        }
        match &p.domain {
            Some(d) => Ok(problem.with_domain(Domain::new(d.lower.clone(), d.upper.clone())?)?),
            None => Ok(problem),
        }
    }

    pub fn train_config(&self, problem: &ControlProblem) -> Result<TrainConfig, CliError> {
        let t = &self.training;
        let mut c = TrainConfig::defaults_for(problem);
        c.seeds = Seeds {
            init: t.seeds.init,
            data: self.data.seed,
            collocation: t.seeds.collocation,
        };
        c.data_mode = self.data.mode;
        if let Some(n1) = self.data.n1 {
            c.n1 = n1;
        }
        if let Some(v) = &t.hidden_widths {
            c.hidden_widths = v.clone();
        }
        if let Some(v) = t.lambda1 {
            c.lambda1 = v;
        }
        if let Some(v) = t.lambda2 {
            c.lambda2 = v;
        }
        if let Some(v) = &t.supervised_phases {
            c.supervised_phases = v.clone();
        }
        if let Some(v) = &t.residual_phases {
            c.residual_phases = v.clone();
        }
        if let Some(v) = t.n2 {
            c.n2 = v;
        }
        if let Some(v) = t.adam {
            c.adam = v;
        }
        if let Some(v) = t.anchor_weight {
            c.anchor_weight = v;
        }
        if let Some(v) = t.pin_origin {
            c.pin_origin = v;
        }
        if let Some(v) = t.collocation {
            c.collocation = v;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn grid(&self, problem: &ControlProblem) -> Result<EvalGrid, CliError> {
        match &self.evaluation.grid {
            Some(counts) => Ok(EvalGrid::new(counts.clone(), problem.domain())?),
            None => Ok(EvalGrid::default_for(problem)),
        }
    }

    pub fn epsilons(&self) -> Vec<f64> {
        self.evaluation
            .epsilons
            .clone()
            .unwrap_or_else(|| DISCREPANCY_EPSILONS.to_vec())
    }

    /// Initial states, time step and horizon of the rollout block.
    pub fn rollout_plan(&self, problem: &ControlProblem) -> Result<(Vec<Vec<f64>>, f64, f64), CliError> {
        let r = self
            .rollout
            .as_ref()
            .ok_or_else(|| CliError::Config("rollout needs a 'rollout' block".into()))?;
        let x0s = match (&r.x0, r.samples, r.seed) {
            (Some(x0), None, None) => x0.clone(),
            (None, Some(n), Some(seed)) => (0..n as u64).map(|i| uniform_point(problem.domain(), seed, i)).collect(),
            _ => {
                return Err(CliError::Config(
                    "rollout needs either 'x0' or both 'samples' and 'seed'".into(),
                ))
            }
        };
        if x0s.is_empty() {
            return Err(CliError::Config("rollout has no initial states".into()));
        }
        if let Some(bad) = x0s.iter().find(|x| x.len() != problem.dim()) {
            return Err(CliError::Config(format!(
                "initial state has {} entries, problem dimension is {}",
                bad.len(),
                problem.dim()
            )));
        }
        Ok((x0s, r.dt.unwrap_or(DEFAULT_DT), r.horizon))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "problem": {"name": "linear2d"},
        "data": {"n1": 10, "seed": 3},
        "training": {"seeds": {"init": 4, "collocation": 5}}
    }"#;

    #[test]
    fn minimal_config_uses_problem_defaults() {
        let cfg = RunConfigFile::parse(MINIMAL).unwrap();
        let problem = cfg.build_problem().unwrap();
        let tc = cfg.train_config(&problem).unwrap();
        assert_eq!(tc.n1, 10);
        assert_eq!(tc.hidden_widths, vec![20; 3]);
        assert_eq!((tc.seeds.init, tc.seeds.data, tc.seeds.collocation), (4, 3, 5));
        assert_eq!(cfg.grid(&problem).unwrap().len(), 10_000);
    }

    #[test]
    fn unknown_keys_and_missing_seeds_are_rejected() {
        let extra = MINIMAL.replace("\"n1\": 10", "\"n1\": 10, \"bogus\": 1");
        assert!(matches!(RunConfigFile::parse(&extra), Err(CliError::Config(_))));
        let no_seed = MINIMAL.replace(", \"seed\": 3", "");
        assert!(matches!(RunConfigFile::parse(&no_seed), Err(CliError::Config(_))));
    }

    #[test]
    fn seed_override_reaches_every_seed() {
        let mut cfg = RunConfigFile::parse(MINIMAL).unwrap();
        cfg.override_seeds(9);
        let tc = cfg.train_config(&cfg.build_problem().unwrap()).unwrap();
        assert_eq!(tc.seeds, Seeds::all(9));
    }
}
