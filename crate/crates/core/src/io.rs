//! CSV readers and writers for datasets, traces, grids, summaries and
//! trajectories. Floats are written in shortest round-trip form.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::evaluation::{DiscrepancyPoint, RunSummary};
use crate::rollout::Trajectory;
use crate::sdre::{DataPoint, GradientDataset};
use crate::training::TrainingTrace;

/// Shortest representation that parses back to the same `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

fn numbered(prefix: &str, n: usize) -> impl Iterator<Item = String> + '_ {
    (1..=n).map(move |i| format!("{prefix}_{i}"))
}

fn write_row<W: Write>(w: &mut W, fields: impl IntoIterator<Item = String>) -> Result<()> {
    let line = fields.into_iter().collect::<Vec<_>>().join(",");
    writeln!(w, "{line}")?;
    Ok(())
}

pub fn dataset_header(n: usize) -> Vec<String> {
    numbered("x", n).chain(["v".to_string()]).chain(numbered("dv", n)).collect()
}

pub fn write_dataset_csv<W: Write>(w: &mut W, dataset: &GradientDataset) -> Result<()> {
    let n = dataset.dim();
    write_row(w, dataset_header(n))?;
    for p in &dataset.points {
        let fields = p.x.iter().copied().chain([p.v]).chain(p.dv.iter().copied()).map(fmt_f64);
        write_row(w, fields)?;
    }
    Ok(())
}

/// Reads the rows of a dataset CSV written by [`write_dataset_csv`].
pub fn read_dataset_csv<R: BufRead>(r: R) -> Result<Vec<DataPoint>> {
    let mut lines = r.lines();
    let header = lines.next().ok_or_else(|| Error::Parse("dataset file is empty".into()))??;
    let cols: Vec<&str> = header.trim().split(',').collect();
    if cols.len() < 3 || cols.len() % 2 == 0 {
        return Err(Error::Parse(format!("unexpected dataset header '{header}'")));
    }
    let n = (cols.len() - 1) / 2;
    if cols != dataset_header(n) {
        return Err(Error::Parse(format!("unexpected dataset header '{header}'")));
    }
    let mut points = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let vals = line
            .trim()
            .split(',')
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|e| Error::Parse(format!("dataset row {}: {e}", i + 1)))?;
        if vals.len() != 2 * n + 1 {
            return Err(Error::Parse(format!(
                "dataset row {} has {} fields, expected {}",
                i + 1,
                vals.len(),
                2 * n + 1
            )));
        }
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parse(format!("dataset row {} is not finite", i + 1)));
        }
        points.push(DataPoint {
            x: vals[..n].to_vec(),
            v: vals[n],
            dv: vals[n + 1..].to_vec(),
        });
    }
    Ok(points)
}

pub fn write_trace_csv<W: Write>(w: &mut W, trace: &TrainingTrace) -> Result<()> {
    writeln!(w, "iteration,data_loss,residual_loss,mse")?;
    for r in &trace.records {
        write_row(
            w,
            [r.iteration.to_string(), opt(r.data_loss), opt(r.residual_loss), opt(r.mse)],
        )?;
    }
    Ok(())
}

/// One grid row: point, model value, optional reference value, residual.
pub struct GridRow<'a> {
    pub x: &'a [f64],
    pub v_hat: f64,
    pub v_ref: Option<f64>,
    pub residual: f64,
}

pub fn write_grid_csv<'a, W: Write>(w: &mut W, n: usize, rows: impl IntoIterator<Item = GridRow<'a>>) -> Result<()> {
    write_row(
        w,
        numbered("x", n).chain(["v_hat", "v_ref", "residual"].map(String::from)),
    )?;
    for r in rows {
        let fields = r
            .x
            .iter()
            .map(|v| fmt_f64(*v))
            .chain([fmt_f64(r.v_hat), opt(r.v_ref), fmt_f64(r.residual)]);
        write_row(w, fields)?;
    }
    Ok(())
}

/// Per-run rows followed by a `median` row.
pub fn write_summary_csv<W: Write>(w: &mut W, summary: &RunSummary) -> Result<()> {
    writeln!(w, "seed,mse,residual_mean")?;
    for r in &summary.runs {
        let seed = r.seed.map(|s| s.to_string()).unwrap_or_default();
        write_row(w, [seed, opt(r.mse), fmt_f64(r.residual_mean)])?;
    }
    write_row(
        w,
        ["median".to_string(), opt(summary.median_mse), opt(summary.median_residual)],
    )
}

pub fn write_discrepancy_csv<W: Write>(w: &mut W, curve: &[DiscrepancyPoint]) -> Result<()> {
    writeln!(w, "epsilon,residual_stat")?;
    for p in curve {
        write_row(w, [fmt_f64(p.epsilon), fmt_f64(p.residual_stat)])?;
    }
    Ok(())
}

pub fn write_trajectory_csv<W: Write>(w: &mut W, traj: &Trajectory, n: usize, m: usize) -> Result<()> {
    write_row(
        w,
        ["time".to_string()]
            .into_iter()
            .chain(numbered("x", n))
            .chain(numbered("u", m))
            .chain(["cost".to_string()]),
    )?;
    for k in 0..traj.len() {
        let fields = [traj.times[k]]
            .into_iter()
            .chain(traj.states[k].iter().copied())
            .chain(traj.controls[k].iter().copied())
            .chain([traj.costs[k]])
            .map(fmt_f64);
        write_row(w, fields)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sdre::DataMode;

    #[test]
    fn dataset_round_trips_exactly() {
        let ds = GradientDataset {
            points: vec![
                DataPoint {
                    x: vec![0.1, -1.0 / 3.0],
                    v: 1e-300,
                    dv: vec![2.5e17, -0.0],
                },
                DataPoint {
                    x: vec![1.0, 2.0],
                    v: 0.5,
                    dv: vec![f64::MIN_POSITIVE, 7.0],
                },
            ],
            problem_tag: "linear2d".into(),
            seed: 0,
            mode: DataMode::Pointwise,
        };
        let mut buf = Vec::new();
        write_dataset_csv(&mut buf, &ds).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("x_1,x_2,v,dv_1,dv_2\n"));
        let back = read_dataset_csv(buf.as_slice()).unwrap();
        assert_eq!(back, ds.points);
    }

    #[test]
    fn rejects_malformed_dataset() {
        assert!(read_dataset_csv("x_1,v\n".as_bytes()).is_err());
        assert!(read_dataset_csv("x_1,v,dv_1\n1,2\n".as_bytes()).is_err());
        assert!(read_dataset_csv("x_1,v,dv_1\n1,nan,2\n".as_bytes()).is_err());
        assert!(read_dataset_csv("".as_bytes()).is_err());
    }
}
