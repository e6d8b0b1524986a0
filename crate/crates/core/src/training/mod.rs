//! Supervised pre-training on SDRE data, HJB residual minimization, and the
//! two-step procedure that chains them.

mod adam;
mod loss;

pub use adam::{Adam, AdamConfig};
pub use loss::{data_loss, hjb_residual, origin_anchor, residual_loss, residual_value, CollocationSet, LossValue};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{init_xavier, Architecture, NetParams};
use crate::problems::{ControlProblem, ProblemKind};
use crate::sampling::{uniform_points, uniform_points_from};
use crate::sdre::{generate_dataset, DataMode, GradientDataset};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Phase {
    pub iterations: usize,
    pub learning_rate: f64,
}

impl Phase {
    pub const fn new(iterations: usize, learning_rate: f64) -> Self {
        Self {
            iterations,
            learning_rate,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Seeds {
    pub init: u64,
    pub data: u64,
    pub collocation: u64,
}

impl Seeds {
    pub fn all(seed: u64) -> Self {
        Self {
            init: seed,
            data: seed,
            collocation: seed,
        }
    }

    /// Every seed shifted by `k` (for multi-run sweeps).
    pub fn offset(&self, k: u64) -> Self {
        Self {
            init: self.init.wrapping_add(k),
            data: self.data.wrapping_add(k),
            collocation: self.collocation.wrapping_add(k),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub hidden_widths: Vec<usize>,
    pub lambda1: f64,
    pub lambda2: f64,
    pub supervised_phases: Vec<Phase>,
    pub residual_phases: Vec<Phase>,
    pub n1: usize,
    pub n2: usize,
    pub data_mode: DataMode,
    pub seeds: Seeds,
    pub adam: AdamConfig,
    /// Weight of the optional `V̂(0)²` penalty during residual training.
    pub anchor_weight: f64,
    /// Keep `V̂(0) = 0` during residual training by adjusting the output
    /// bias, which the residual loss does not otherwise constrain.
    pub pin_origin: bool,
    pub collocation: CollocationMode,
}

/// Whether residual training reuses one collocation set or draws a new one
/// every iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CollocationMode {
    Fixed,
    Resample,
}

impl CollocationMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            CollocationMode::Fixed => "fixed",
            CollocationMode::Resample => "resample",
        }
    }
}

impl TrainConfig {
    /// Architecture and schedules for the given benchmark: 3×20 sigmoid
    /// layers for 2D problems, 3×50 for Cucker-Smale.
    pub fn defaults_for(problem: &ControlProblem) -> Self {
        match problem.kind() {
            ProblemKind::CuckerSmale { .. } => Self {
                hidden_widths: vec![50; 3],
                lambda1: 1.0,
                lambda2: 1.0,
                supervised_phases: vec![Phase::new(2000, 1e-2), Phase::new(4000, 1e-3)],
                residual_phases: vec![Phase::new(10_000, 1e-3), Phase::new(20_000, 1e-4)],
                n1: 500,
                n2: 5000,
                data_mode: DataMode::Pointwise,
                seeds: Seeds::all(0),
                adam: AdamConfig::default(),
                anchor_weight: 0.0,
                pin_origin: true,
                collocation: CollocationMode::Resample,
            },
            _ => Self {
                hidden_widths: vec![20; 3],
                lambda1: 1.0,
                lambda2: 1.0,
                supervised_phases: vec![Phase::new(1000, 1e-2), Phase::new(1000, 1e-3)],
                residual_phases: vec![Phase::new(2000, 1e-2), Phase::new(4000, 1e-3)],
                n1: 20,
                n2: 50,
                data_mode: DataMode::Pointwise,
                seeds: Seeds::all(0),
                adam: AdamConfig::default(),
                anchor_weight: 0.0,
                pin_origin: true,
                collocation: CollocationMode::Resample,
            },
        }
    }

    pub fn architecture(&self, input_dim: usize) -> Result<Architecture> {
        Architecture::new(input_dim, self.hidden_widths.clone())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.lambda1 >= 0.0 && self.lambda2 >= 0.0) {
            return bad(format!("loss weights must be >= 0, got {} and {}", self.lambda1, self.lambda2));
        }
        for p in self.supervised_phases.iter().chain(&self.residual_phases) {
            if !(p.learning_rate > 0.0) || !p.learning_rate.is_finite() {
                return bad(format!("learning rates must be positive, got {}", p.learning_rate));
            }
        }
        if !(self.anchor_weight >= 0.0) {
            return bad("anchor weight must be >= 0".into());
        }
        let a = self.adam;
        if !(0.0..1.0).contains(&a.beta1) || !(0.0..1.0).contains(&a.beta2) || !(a.epsilon > 0.0) {
            return bad(format!("invalid Adam constants {a:?}"));
        }
        if self.hidden_widths.iter().any(|&w| w == 0) {
            return bad("hidden widths must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Supervised,
    Residual,
    Combined,
}

impl Stage {
    pub fn as_str(&self) -> &'static str {
        match self {
            Stage::Supervised => "supervised",
            Stage::Residual => "residual",
            Stage::Combined => "combined",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    pub iteration: usize,
    pub stage: Stage,
    pub data_loss: Option<f64>,
    pub residual_loss: Option<f64>,
    pub mse: Option<f64>,
}

/// Per-iteration losses; iteration indices increase strictly across stages.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingTrace {
    pub records: Vec<TraceRecord>,
}

impl TrainingTrace {
    fn next_iteration(&self) -> usize {
        self.records.last().map_or(0, |r| r.iteration + 1)
    }

    pub fn append(&mut self, other: TrainingTrace) {
        let offset = self.next_iteration();
        self.records.extend(other.records.into_iter().map(|mut r| {
            r.iteration += offset;
            r
        }));
    }

    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }
}

/// Optional accuracy probe evaluated every `every` iterations and at the end
/// of each stage (e.g. grid MSE against a known solution).
pub struct Monitor<'a> {
    pub every: usize,
    pub probe: &'a (dyn Fn(&NetParams) -> Result<f64> + Sync),
}

impl Monitor<'_> {
    fn sample(&self, params: &NetParams, iteration: usize, last: bool) -> Result<Option<f64>> {
        if last || (self.every > 0 && iteration % self.every == 0) {
            Ok(Some((self.probe)(params)?))
        } else {
            Ok(None)
        }
    }
}

/// Parameters and trace produced by one training stage.
#[derive(Debug, Clone)]
pub struct StageResult {
    pub params: NetParams,
    pub trace: TrainingTrace,
    pub final_loss: f64,
}

/// Loss evaluated by a stage at a given iteration: returns
/// `(data_loss, residual_loss, total)` plus the gradient of the total.
type Objective<'a> = dyn Fn(&NetParams, usize) -> Result<(Option<f64>, Option<f64>, LossValue)> + 'a;

fn run_stage(
    stage: Stage,
    mut params: NetParams,
    phases: &[Phase],
    adam: AdamConfig,
    objective: &Objective<'_>,
    monitor: Option<&Monitor<'_>>,
    pin_origin: bool,
) -> Result<StageResult> {
    let mut opt = Adam::new(params.len(), adam);
    let mut trace = TrainingTrace::default();
    let mut last_finite = params.clone();
    let total_iters: usize = phases.iter().map(|p| p.iterations).sum();
    let schedule = phases.iter().flat_map(|p| std::iter::repeat(p.learning_rate).take(p.iterations));

    let mut iteration = 0;
    let mut record = |params: &mut NetParams, iteration: usize, trace: &mut TrainingTrace| -> Result<LossValue> {
        if pin_origin {
            pin_origin_value(params)?;
        }
        let params = &*params;
        let (d, r, loss) = objective(params, iteration)?;
        if !loss.value.is_finite() || loss.grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Diverged {
                stage: stage.as_str(),
                iteration,
                last_finite: Box::new(last_finite.clone()),
            });
        }
        last_finite = params.clone();
        let mse = match monitor {
            Some(m) => m.sample(params, iteration, iteration == total_iters)?,
            None => None,
        };
        trace.records.push(TraceRecord {
            iteration,
            stage,
            data_loss: d,
            residual_loss: r,
            mse,
        });
        Ok(loss)
    };

    for lr in schedule {
        let loss = record(&mut params, iteration, &mut trace)?;
        opt.step(params.as_mut_slice(), &loss.grad, lr);
        iteration += 1;
    }
    let final_loss = record(&mut params, iteration, &mut trace)?.value;
    Ok(StageResult {
        params,
        trace,
        final_loss,
    })
}

/// Shifts the output bias so that `V̂(0) = 0`. Leaves `∇ₓV̂` unchanged.
pub fn pin_origin_value(params: &mut NetParams) -> Result<()> {
    let v0 = crate::network::forward(params, &vec![0.0; params.input_dim()])?;
    let out = params.layout().num_layers() - 1;
    params.bias_mut(out)[0] -= v0;
    Ok(())
}

/// Full-batch Adam on the data loss, starting from `init`.
pub fn train_supervised_from(
    init: NetParams,
    dataset: &GradientDataset,
    config: &TrainConfig,
    monitor: Option<&Monitor<'_>>,
) -> Result<StageResult> {
    config.validate()?;
    let (l1, l2) = (config.lambda1, config.lambda2);
    let objective = |p: &NetParams, _: usize| -> Result<(Option<f64>, Option<f64>, LossValue)> {
        let loss = data_loss(p, dataset, l1, l2)?;
        Ok((Some(loss.value), None, loss))
    };
    run_stage(Stage::Supervised, init, &config.supervised_phases, config.adam, &objective, monitor, false)
}

/// Supervised step from a Xavier initialization seeded with `seeds.init`.
pub fn train_supervised(
    problem: &ControlProblem,
    dataset: &GradientDataset,
    config: &TrainConfig,
    monitor: Option<&Monitor<'_>>,
) -> Result<StageResult> {
    let init = init_xavier(&config.architecture(problem.dim())?, config.seeds.init);
    train_supervised_from(init, dataset, config, monitor)
}

/// Where residual training takes its collocation points from.
pub enum Collocation<'a> {
    /// One set reused at every iteration.
    Fixed(&'a CollocationSet),
    /// `n2` fresh points per iteration: iteration `k` uses samples
    /// `k·n2 .. (k+1)·n2` of the seeded stream.
    Resample {
        problem: &'a ControlProblem,
        seed: u64,
        n2: usize,
    },
}

impl Collocation<'_> {
    pub fn at(&self, iteration: usize) -> Result<std::borrow::Cow<'_, CollocationSet>> {
        use std::borrow::Cow;
        match *self {
            Collocation::Fixed(set) => Ok(Cow::Borrowed(set)),
            Collocation::Resample { problem, seed, n2 } => {
                let start = (iteration as u64) * n2 as u64;
                let pts = uniform_points_from(problem.domain(), seed, start, n2);
                Ok(Cow::Owned(CollocationSet::new(problem, &pts)?))
            }
        }
    }
}

/// Residual loss (plus the optional origin anchor) on the iteration's
/// collocation points.
fn residual_term(p: &NetParams, set: &CollocationSet, anchor_weight: f64) -> Result<(f64, LossValue)> {
    let mut loss = residual_loss(p, set)?;
    let res = loss.value;
    if anchor_weight > 0.0 {
        let anchor = origin_anchor(p, anchor_weight)?;
        loss.value += anchor.value;
        for (g, a) in loss.grad.iter_mut().zip(anchor.grad) {
            *g += a;
        }
    }
    Ok((res, loss))
}

/// Full-batch Adam on the residual loss.
pub fn train_residual_with(
    init: NetParams,
    points: &Collocation<'_>,
    config: &TrainConfig,
    monitor: Option<&Monitor<'_>>,
) -> Result<StageResult> {
    config.validate()?;
    let objective = |p: &NetParams, it: usize| -> Result<(Option<f64>, Option<f64>, LossValue)> {
        let (res, loss) = residual_term(p, &*points.at(it)?, config.anchor_weight)?;
        Ok((None, Some(res), loss))
    };
    run_stage(
        Stage::Residual,
        init,
        &config.residual_phases,
        config.adam,
        &objective,
        monitor,
        config.pin_origin,
    )
}

/// Residual training on an explicit, fixed point set.
pub fn train_residual_on(
    init: NetParams,
    set: &CollocationSet,
    config: &TrainConfig,
    monitor: Option<&Monitor<'_>>,
) -> Result<StageResult> {
    train_residual_with(init, &Collocation::Fixed(set), config, monitor)
}

/// The first `N2` uniformly sampled collocation points of the run.
pub fn collocation_points(problem: &ControlProblem, config: &TrainConfig) -> Result<CollocationSet> {
    check_n2(config)?;
    let pts = uniform_points(problem.domain(), config.seeds.collocation, config.n2);
    CollocationSet::new(problem, &pts)
}

fn check_n2(config: &TrainConfig) -> Result<()> {
    if config.n2 == 0 {
        return Err(Error::InvalidConfig("collocation count N2 must be at least 1".into()));
    }
    Ok(())
}

/// Calls `f` with the collocation source selected by the config.
fn with_collocation<T>(
    problem: &ControlProblem,
    config: &TrainConfig,
    f: impl FnOnce(&Collocation<'_>) -> Result<T>,
) -> Result<T> {
    check_n2(config)?;
    match config.collocation {
        CollocationMode::Fixed => {
            let set = collocation_points(problem, config)?;
            f(&Collocation::Fixed(&set))
        }
        CollocationMode::Resample => f(&Collocation::Resample {
            problem,
            seed: config.seeds.collocation,
            n2: config.n2,
        }),
    }
}

pub fn train_residual(
    problem: &ControlProblem,
    init: NetParams,
    config: &TrainConfig,
    monitor: Option<&Monitor<'_>>,
) -> Result<StageResult> {
    with_collocation(problem, config, |points| train_residual_with(init, points, config, monitor))
}

/// Data and residual losses summed into one objective (ablation only),
/// trained with the residual schedule from a Xavier start.
pub fn train_combined(
    problem: &ControlProblem,
    dataset: &GradientDataset,
    config: &TrainConfig,
    monitor: Option<&Monitor<'_>>,
) -> Result<StageResult> {
    config.validate()?;
    let init = init_xavier(&config.architecture(problem.dim())?, config.seeds.init);
    let (l1, l2) = (config.lambda1, config.lambda2);
    with_collocation(problem, config, |points| {
        let objective = |p: &NetParams, it: usize| -> Result<(Option<f64>, Option<f64>, LossValue)> {
            let d = data_loss(p, dataset, l1, l2)?;
            let (rv, mut r) = residual_term(p, &*points.at(it)?, config.anchor_weight)?;
            let dv = d.value;
            r.value += dv;
            for (g, a) in r.grad.iter_mut().zip(d.grad) {
                *g += a;
            }
            Ok((Some(dv), Some(rv), r))
        };
        run_stage(Stage::Combined, init, &config.residual_phases, config.adam, &objective, monitor, false)
    })
}

/// Result of the full pipeline.
#[derive(Debug, Clone)]
pub struct TwoStepResult {
    /// Parameters after supervised pre-training (`None` when `N1 = 0`).
    pub theta_dat: Option<NetParams>,
    pub params: NetParams,
    pub trace: TrainingTrace,
    pub dataset: Option<GradientDataset>,
}

/// Dataset generation, supervised pre-training, then residual minimization.
/// With `N1 = 0` the supervised step is skipped and residual training starts
/// from the Xavier initialization.
pub fn two_step(problem: &ControlProblem, config: &TrainConfig, monitor: Option<&Monitor<'_>>) -> Result<TwoStepResult> {
    config.validate()?;
    let dataset = if config.n1 > 0 {
        Some(generate_dataset(problem, config.n1, config.seeds.data, config.data_mode)?)
    } else {
        None
    };
    two_step_with_dataset(problem, config, dataset, monitor)
}

/// [`two_step`] with a pre-built dataset.
pub fn two_step_with_dataset(
    problem: &ControlProblem,
    config: &TrainConfig,
    dataset: Option<GradientDataset>,
    monitor: Option<&Monitor<'_>>,
) -> Result<TwoStepResult> {
    let mut trace = TrainingTrace::default();
    let (theta_dat, start) = match &dataset {
        Some(ds) => {
            let sup = train_supervised(problem, ds, config, monitor)?;
            trace.append(sup.trace);
            (Some(sup.params.clone()), sup.params)
        }
        None => (None, init_xavier(&config.architecture(problem.dim())?, config.seeds.init)),
    };
    let res = train_residual(problem, start, config, monitor)?;
    trace.append(res.trace);
    Ok(TwoStepResult {
        theta_dat,
        params: res.params,
        trace,
        dataset,
    })
}

/// Training pipelines selectable from configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    /// Supervised step only.
    DataOnly,
    /// Residual step only, from the Xavier initialization.
    ResidualOnly,
    TwoStep,
    /// Data and residual losses summed (ablation).
    Combined,
}

impl TrainMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            TrainMode::DataOnly => "data_only",
            TrainMode::ResidualOnly => "residual_only",
            TrainMode::TwoStep => "two_step",
            TrainMode::Combined => "combined",
        }
    }

    pub fn needs_data(&self) -> bool {
        !matches!(self, TrainMode::ResidualOnly)
    }
}

/// Runs `mode` with an optional pre-built dataset. Modes that need data
/// generate it from the config when `dataset` is `None`.
pub fn run_mode(
    problem: &ControlProblem,
    config: &TrainConfig,
    mode: TrainMode,
    dataset: Option<GradientDataset>,
    monitor: Option<&Monitor<'_>>,
) -> Result<TwoStepResult> {
    config.validate()?;
    let dataset = if mode.needs_data() {
        match dataset {
            Some(d) => Some(d),
            None if config.n1 == 0 => {
                return Err(Error::InvalidConfig(format!("{} training needs N1 >= 1", mode.as_str())));
            }
            None => Some(generate_dataset(problem, config.n1, config.seeds.data, config.data_mode)?),
        }
    } else {
        None
    };
    match mode {
        TrainMode::TwoStep => two_step_with_dataset(problem, config, dataset, monitor),
        TrainMode::ResidualOnly => two_step_with_dataset(problem, config, None, monitor),
        TrainMode::DataOnly => {
            let ds = dataset.expect("data mode has a dataset");
            let sup = train_supervised(problem, &ds, config, monitor)?;
            Ok(TwoStepResult {
                theta_dat: Some(sup.params.clone()),
                params: sup.params,
                trace: sup.trace,
                dataset: Some(ds),
            })
        }
        TrainMode::Combined => {
            let ds = dataset.expect("data mode has a dataset");
            let comb = train_combined(problem, &ds, config, monitor)?;
            Ok(TwoStepResult {
                theta_dat: None,
                params: comb.params,
                trace: comb.trace,
                dataset: Some(ds),
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config() -> TrainConfig {
        let mut c = TrainConfig::defaults_for(&ControlProblem::linear2d());
        c.hidden_widths = vec![4, 4];
        c.supervised_phases = vec![Phase::new(5, 1e-2)];
        c.residual_phases = vec![Phase::new(5, 1e-2)];
        c.n1 = 4;
        c.n2 = 6;
        c
    }

    #[test]
    fn trace_indices_strictly_increase_across_stages() {
        let r = two_step(&ControlProblem::linear2d(), &tiny_config(), None).unwrap();
        assert_eq!(r.trace.records.len(), 12);
        assert!(r.trace.records.windows(2).all(|w| w[1].iteration > w[0].iteration));
        assert_eq!(r.trace.records[0].stage, Stage::Supervised);
        assert_eq!(r.trace.last().unwrap().stage, Stage::Residual);
    }

    #[test]
    fn zero_data_points_skips_supervision() {
        let mut c = tiny_config();
        c.n1 = 0;
        let r = two_step(&ControlProblem::linear2d(), &c, None).unwrap();
        assert!(r.theta_dat.is_none() && r.dataset.is_none());
        assert!(r.trace.records.iter().all(|t| t.stage == Stage::Residual));
    }

    #[test]
    fn config_validation() {
        let mut c = tiny_config();
        c.residual_phases[0].learning_rate = 0.0;
        assert!(matches!(c.validate(), Err(Error::InvalidConfig(_))));
        let mut c = tiny_config();
        c.lambda1 = -1.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn monitor_fires_on_schedule_and_at_end() {
        let probe = |_: &NetParams| -> Result<f64> { Ok(1.0) };
        let m = Monitor { every: 2, probe: &probe };
        let c = tiny_config();
        let ds = generate_dataset(&ControlProblem::linear2d(), 4, 0, DataMode::Pointwise).unwrap();
        let r = train_supervised(&ControlProblem::linear2d(), &ds, &c, Some(&m)).unwrap();
        let with: Vec<usize> = r.trace.records.iter().filter(|t| t.mse.is_some()).map(|t| t.iteration).collect();
        assert_eq!(with, vec![0, 2, 4, 5]);
    }
}
