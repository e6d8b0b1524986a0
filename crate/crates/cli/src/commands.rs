//! Subcommand implementations. Each one reads the config (and input files),
//! writes its outputs into the output directory and a manifest next to them.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use hjb_core::evaluation::{
    linear_reference, median_over_runs, mse_on_grid, residual_on_grid, residuals_on_grid, rollout_nn_policy,
    sdre_discrepancy_curve, EvalGrid, RunMetrics, RunSummary,
};
use hjb_core::io::{
    read_dataset_csv, write_dataset_csv, write_discrepancy_csv, write_grid_csv, write_summary_csv, write_trace_csv,
    write_trajectory_csv, GridRow,
};
use hjb_core::network::{init_xavier, Checkpoint, QuadraticValue};
use hjb_core::problems::ProblemKind;
use hjb_core::rollout::{RolloutFailure, Trajectory};
use hjb_core::sdre::{generate_dataset, rollout_sdre, GradientDataset};
use hjb_core::training::{
    train_combined, train_residual, train_supervised_from, Monitor, StageResult, TrainConfig, TrainMode,
    TrainingTrace,
};
use hjb_core::{ControlProblem, Error, NetParams, ValueModel};

use crate::config::RunConfigFile;
use crate::error::CliError;

pub const DATASET_FILE: &str = "dataset.csv";

/// Everything a command needs besides its own arguments.
pub struct Context {
    pub config: RunConfigFile,
    pub config_sha256: String,
    pub seed_override: Option<u64>,
    pub out: PathBuf,
}

impl Context {
    fn problem(&self) -> Result<ControlProblem, CliError> {
        self.config.build_problem()
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn create(&self, name: &str) -> Result<BufWriter<File>, CliError> {
        fs::create_dir_all(&self.out).map_err(|e| io_error(&self.out, e))?;
        let path = self.path(name);
        Ok(BufWriter::new(File::create(&path).map_err(|e| io_error(&path, e))?))
    }

    fn write_with(
        &self,
        name: &str,
        f: impl FnOnce(&mut BufWriter<File>) -> hjb_core::Result<()>,
    ) -> Result<(), CliError> {
        let mut w = self.create(name)?;
        f(&mut w)?;
        w.flush()?;
        Ok(())
    }

    fn save_checkpoint(&self, name: &str, ckpt: &Checkpoint) -> Result<(), CliError> {
        fs::create_dir_all(&self.out).map_err(|e| io_error(&self.out, e))?;
        ckpt.save(&self.path(name))?;
        Ok(())
    }

    /// `<command>_manifest.json` with the config hash, effective seeds and
    /// the files written.
    fn manifest(&self, command: &str, extra: Value, outputs: &[String]) -> Result<(), CliError> {
        let cfg = &self.config;
        let mut m = json!({
            "command": command,
            "problem": cfg.problem.name,
            "config_sha256": self.config_sha256,
            "seed_override": self.seed_override,
            "seeds": {
                "data": cfg.data.seed,
                "init": cfg.training.seeds.init,
                "collocation": cfg.training.seeds.collocation,
                "rollout": cfg.rollout.as_ref().and_then(|r| r.seed),
            },
            "outputs": outputs,
        });
        if let (Value::Object(m), Value::Object(extra)) = (&mut m, extra) {
            m.extend(extra);
        }
        let text = serde_json::to_string_pretty(&m).map_err(|e| CliError::Io(e.to_string()))?;
        let path = self.path(&format!("{command}_manifest.json"));
        fs::write(&path, text + "\n").map_err(|e| io_error(&path, e))
    }
}

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

pub fn generate(ctx: &Context) -> Result<(), CliError> {
    let problem = ctx.problem()?;
    let tc = ctx.config.train_config(&problem)?;
    let ds = generate_dataset(&problem, tc.n1, tc.seeds.data, tc.data_mode)?;
    ctx.write_with(DATASET_FILE, |w| write_dataset_csv(w, &ds))?;
    ctx.manifest(
        "generate",
        json!({ "n1": tc.n1, "data_mode": tc.data_mode.as_str() }),
        &[DATASET_FILE.to_string()],
    )?;
    println!("wrote {} samples to {}", ds.len(), ctx.path(DATASET_FILE).display());
    Ok(())
}

fn load_dataset(ctx: &Context, problem: &ControlProblem, tc: &TrainConfig) -> Result<GradientDataset, CliError> {
    let path = ctx.path(DATASET_FILE);
    let file = File::open(&path).map_err(|e| io_error(&path, e))?;
    let points = read_dataset_csv(BufReader::new(file))?;
    let ds = GradientDataset {
        points,
        problem_tag: problem.name().to_string(),
        seed: tc.seeds.data,
        mode: tc.data_mode,
    };
    if ds.len() != tc.n1 {
        return Err(CliError::Config(format!(
            "{} has {} rows but the config asks for N1 = {}; rerun generate",
            path.display(),
            ds.len(),
            tc.n1
        )));
    }
    if ds.dim() != problem.dim() {
        return Err(CliError::Config(format!(
            "{} has dimension {}, problem has {}",
            path.display(),
            ds.dim(),
            problem.dim()
        )));
    }
    Ok(ds)
}

/// Saves the last finite parameters of a diverged stage under `name`.
fn finish_stage(
    ctx: &Context,
    result: hjb_core::Result<StageResult>,
    name: &str,
    seed: u64,
) -> Result<StageResult, CliError> {
    match result {
        Ok(r) => {
            ctx.save_checkpoint(name, &Checkpoint::from_params(&r.params, seed))?;
            Ok(r)
        }
        Err(Error::Diverged {
            stage,
            iteration,
            last_finite,
        }) => {
            ctx.save_checkpoint(name, &Checkpoint::from_params(&last_finite, seed))?;
            Err(CliError::Numerical(format!(
                "{stage} training diverged at iteration {iteration}; last finite parameters saved to {}",
                ctx.path(name).display()
            )))
        }
        Err(e) => Err(e.into()),
    }
}

pub fn train(ctx: &Context, mode: TrainMode) -> Result<(), CliError> {
    let problem = ctx.problem()?;
    let tc = ctx.config.train_config(&problem)?;
    if mode.needs_data() && tc.n1 == 0 {
        return Err(CliError::Config(format!("{} training needs N1 >= 1", mode.as_str())));
    }
    let dataset = if mode.needs_data() {
        Some(load_dataset(ctx, &problem, &tc)?)
    } else {
        None
    };

    let grid = ctx.config.grid(&problem)?;
    let reference = match problem.kind() {
        ProblemKind::Linear2d => Some(linear_reference(&problem)?),
        _ => None,
    };
    let probe = |p: &NetParams| -> hjb_core::Result<f64> {
        mse_on_grid(p, reference.as_ref().expect("probe only built with a reference"), &grid)
    };
    let monitor = reference.as_ref().map(|_| Monitor {
        every: ctx.config.training.monitor_every,
        probe: &probe,
    });
    let monitor = monitor.as_ref();

    let seed = tc.seeds.init;
    let init = init_xavier(&tc.architecture(problem.dim())?, seed);
    let mut trace = TrainingTrace::default();
    let mut outputs = Vec::new();
    let outcome = (|| -> Result<NetParams, CliError> {
        let params = match mode {
            TrainMode::DataOnly | TrainMode::TwoStep => {
                let ds = dataset.as_ref().expect("data modes load a dataset");
                outputs.push("theta_dat.json".to_string());
                let sup = finish_stage(ctx, train_supervised_from(init, ds, &tc, monitor), "theta_dat.json", seed)?;
                trace.append(sup.trace);
                if mode == TrainMode::DataOnly {
                    return Ok(sup.params);
                }
                outputs.push("theta_res.json".to_string());
                let res = finish_stage(ctx, train_residual(&problem, sup.params, &tc, monitor), "theta_res.json", seed)?;
                trace.append(res.trace);
                res.params
            }
            TrainMode::ResidualOnly => {
                outputs.push("theta_res.json".to_string());
                let res = finish_stage(ctx, train_residual(&problem, init, &tc, monitor), "theta_res.json", seed)?;
                trace.append(res.trace);
                res.params
            }
            TrainMode::Combined => {
                let ds = dataset.as_ref().expect("data modes load a dataset");
                outputs.push("theta_comb.json".to_string());
                let comb = finish_stage(ctx, train_combined(&problem, ds, &tc, monitor), "theta_comb.json", seed)?;
                trace.append(comb.trace);
                comb.params
            }
        };
        Ok(params)
    })();

    ctx.write_with("trace.csv", |w| write_trace_csv(w, &trace))?;
    outputs.push("trace.csv".to_string());
    ctx.manifest(
        "train",
        json!({
            "mode": mode.as_str(),
            "n1": tc.n1,
            "n2": tc.n2,
            "hidden_widths": tc.hidden_widths,
            "collocation": tc.collocation.as_str(),
            "completed": outcome.is_ok(),
        }),
        &outputs,
    )?;
    let params = outcome?;
    if let Some(last) = trace.last() {
        let fmt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.3e}"));
        println!(
            "{}: final iteration {}, data loss {}, residual loss {}, mse {}",
            mode.as_str(),
            last.iteration,
            fmt(last.data_loss),
            fmt(last.residual_loss),
            fmt(last.mse)
        );
    }
    let stats = residual_on_grid(&params, &problem, &grid)?;
    println!("grid residual mean {:.3e}, max {:.3e}", stats.mean, stats.max);
    Ok(())
}

fn checkpoint_arg(checkpoint: Option<&str>) -> Result<&str, CliError> {
    checkpoint.ok_or_else(|| CliError::Config("--checkpoint is required".into()))
}

fn load_model(path: &str, problem: &ControlProblem) -> Result<(Checkpoint, Box<dyn ValueModel>), CliError> {
    let ckpt = Checkpoint::load(Path::new(path)).map_err(|e| CliError::Io(format!("{path}: {e}")))?;
    let model = ckpt.to_model()?;
    if model.input_dim() != problem.dim() {
        return Err(CliError::Config(format!(
            "checkpoint expects dimension {}, problem has {}",
            model.input_dim(),
            problem.dim()
        )));
    }
    Ok((ckpt, model))
}

pub fn eval(ctx: &Context, mode: TrainMode, checkpoint: Option<&str>) -> Result<(), CliError> {
    let problem = ctx.problem()?;
    let (ckpt, model) = load_model(checkpoint_arg(checkpoint)?, &problem)?;
    let grid = ctx.config.grid(&problem)?;
    let reference: Option<QuadraticValue> = match problem.kind() {
        ProblemKind::Linear2d => Some(linear_reference(&problem)?),
        _ => None,
    };
    let reference = reference.as_ref().map(|r| r as &dyn ValueModel);

    let pts = grid.points();
    let n = problem.dim();
    let (values, _) = model.eval_batch(&pts)?;
    let residuals = residuals_on_grid(&*model, &problem, &grid)?;
    let refs = match reference {
        Some(r) => Some(r.eval_batch(&pts)?.0),
        None => None,
    };
    let rows = pts.chunks(n).enumerate().map(|(i, x)| GridRow {
        x,
        v_hat: values[i],
        v_ref: refs.as_ref().map(|r| r[i]),
        residual: residuals[i],
    });
    ctx.write_with("grid.csv", |w| write_grid_csv(w, n, rows))?;

    let n_runs = ctx.config.evaluation.n_runs;
    let summary = if n_runs > 1 {
        let tc = ctx.config.train_config(&problem)?;
        let s = median_over_runs(&problem, &tc, mode, n_runs, &grid, reference)?;
        for f in &s.failures {
            eprintln!("run {} (seed {}) failed: {}", f.run, f.seed, f.message);
        }
        if s.runs.is_empty() {
            return Err(CliError::Numerical("every training run failed".into()));
        }
        s
    } else {
        single_summary(&ckpt, &*model, &problem, &grid, reference)?
    };
    ctx.write_with("summary.csv", |w| write_summary_csv(w, &summary))?;
    ctx.manifest(
        "eval",
        json!({
            "checkpoint": checkpoint,
            "grid": grid.counts,
            "n_runs": n_runs,
            "mode": (n_runs > 1).then(|| mode.as_str()),
        }),
        &["grid.csv".to_string(), "summary.csv".to_string()],
    )?;
    if let Some(m) = summary.median_mse {
        println!("median mse {m:.3e}");
    }
    if let Some(r) = summary.median_residual {
        println!("median grid residual {r:.3e}");
    }
    Ok(())
}

fn single_summary(
    ckpt: &Checkpoint,
    model: &dyn ValueModel,
    problem: &ControlProblem,
    grid: &EvalGrid,
    reference: Option<&dyn ValueModel>,
) -> Result<RunSummary, CliError> {
    let seed = match ckpt {
        Checkpoint::Mlp { seed, .. } => Some(*seed),
        Checkpoint::Quadratic { .. } => None,
    };
    let mse = reference.map(|r| mse_on_grid(model, r, grid)).transpose()?;
    let residual_mean = residual_on_grid(model, problem, grid)?.mean;
    Ok(RunSummary {
        runs: vec![RunMetrics {
            run: 0,
            seed,
            mse,
            residual_supervised: None,
            residual_mean,
        }],
        failures: Vec::new(),
        median_mse: mse,
        median_residual_supervised: None,
        median_residual: Some(residual_mean),
    })
}

pub fn rollout(ctx: &Context, checkpoint: Option<&str>) -> Result<(), CliError> {
    let problem = ctx.problem()?;
    let source = checkpoint_arg(checkpoint)?;
    let (x0s, dt, horizon) = ctx.config.rollout_plan(&problem)?;
    let model = match source {
        "sdre" => None,
        path => Some(load_model(path, &problem)?.1),
    };
    let (n, m) = (problem.dim(), problem.control_dim());
    let mut outputs = Vec::new();
    let mut failure = None;
    for (k, x0) in x0s.iter().enumerate() {
        let result: Result<Trajectory, RolloutFailure> = match &model {
            None => rollout_sdre(&problem, x0, dt, horizon),
            Some(model) => rollout_nn_policy(&problem, &**model, x0, dt, horizon),
        };
        let name = format!("trajectory_{k}.csv");
        let traj = match &result {
            Ok(t) => t,
            Err(f) => &f.partial,
        };
        ctx.write_with(&name, |w| write_trajectory_csv(w, traj, n, m))?;
        outputs.push(name);
        match result {
            Ok(t) => {
                let x = t.final_state().unwrap_or(&[]);
                let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                println!("trajectory {k}: final |x| {norm:.3e}, cost {:.6}", t.total_cost());
            }
            Err(f) => {
                failure = Some(format!("trajectory {k}: {f}"));
                break;
            }
        }
    }
    ctx.manifest(
        "rollout",
        json!({
            "controller": source,
            "dt": dt,
            "horizon": horizon,
            "initial_states": x0s,
            "completed": failure.is_none(),
        }),
        &outputs,
    )?;
    match failure {
        Some(msg) => Err(CliError::Numerical(format!("{msg} (partial trajectory kept)"))),
        None => Ok(()),
    }
}

pub fn discrepancy(ctx: &Context) -> Result<(), CliError> {
    let problem = ctx.problem()?;
    if !matches!(problem.kind(), ProblemKind::Nonlinear2d { .. }) {
        return Err(CliError::Config("discrepancy applies to nonlinear2d only".into()));
    }
    let grid = ctx.config.grid(&problem)?;
    let epsilons = ctx.config.epsilons();
    let curve = sdre_discrepancy_curve(&epsilons, &grid)?;
    ctx.write_with("discrepancy.csv", |w| write_discrepancy_csv(w, &curve))?;
    ctx.manifest(
        "discrepancy",
        json!({ "epsilons": epsilons, "grid": grid.counts }),
        &["discrepancy.csv".to_string()],
    )?;
    for p in &curve {
        println!("epsilon {:>8}: mean |N| {:.3e}", p.epsilon, p.residual_stat);
    }
    Ok(())
}
