//! CSV exports. Every file starts with one `# <config>` line, then a
//! column header and the rows.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use relaxopt_core::optimize::OptimizerReport;
use relaxopt_core::{Grid, Trajectory};

use crate::error::{AppError, AppResult};
use crate::studies::{GradientReport, OrderStudyResult, TrackingTableRow};

type Sink = csv::Writer<BufWriter<File>>;

fn open(path: &Path, config: &str, columns: &[&str]) -> AppResult<Sink> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| AppError::io(dir, e))?;
    }
    let file = File::create(path).map_err(|e| AppError::io(path, e))?;
    let mut out = BufWriter::new(file);
    writeln!(out, "# {}", config.replace('\n', " ")).map_err(|e| AppError::io(path, e))?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(columns)?;
    Ok(w)
}

fn finish(mut w: Sink, path: &Path) -> AppResult<()> {
    w.flush().map_err(|e| AppError::io(path, e))
}

fn num(x: f64) -> String {
    format!("{x:e}")
}

/// `t, x, u, v` for every stored state whose step index is a multiple of
/// `stride`, plus the terminal state.
pub fn write_trajectory(path: &Path, config: &str, traj: &Trajectory, stride: usize) -> AppResult<()> {
    let mut w = open(path, config, &["t", "x", "u", "v"])?;
    let x = traj.grid().centers();
    let n_steps = traj.n_steps();
    let mut frames: Vec<(usize, &relaxopt_core::RelaxState)> =
        traj.stored_states().filter(|(n, _)| n % stride.max(1) == 0 || *n == n_steps).collect();
    if frames.is_empty() {
        frames.push((0, traj.initial()));
        if n_steps > 0 {
            frames.push((n_steps, traj.terminal()));
        }
    }
    for (n, y) in frames {
        let t = num(traj.times()[n]);
        for ((x, u), v) in x.iter().zip(&y.u).zip(&y.v) {
            w.write_record([t.as_str(), &num(*x), &num(*u), &num(*v)])?;
        }
    }
    finish(w, path)
}

/// `i, x, u0, grad`
pub fn write_gradient(path: &Path, config: &str, grid: &Grid, u0: &[f64], grad: &[f64]) -> AppResult<()> {
    let mut w = open(path, config, &["i", "x", "u0", "grad"])?;
    for (i, ((x, u), g)) in grid.centers().iter().zip(u0).zip(grad).enumerate() {
        w.write_record([i.to_string(), num(*x), num(*u), num(*g)])?;
    }
    finish(w, path)
}

/// `i, x, u0`
pub fn write_control(path: &Path, config: &str, grid: &Grid, u0: &[f64]) -> AppResult<()> {
    let mut w = open(path, config, &["i", "x", "u0"])?;
    for (i, (x, u)) in grid.centers().iter().zip(u0).enumerate() {
        w.write_record([i.to_string(), num(*x), num(*u)])?;
    }
    finish(w, path)
}

/// `iter, cost, grad_norm, wall_time_s`
pub fn write_trace(path: &Path, config: &str, report: &OptimizerReport) -> AppResult<()> {
    let mut w = open(path, config, &["iter", "cost", "grad_norm", "wall_time_s"])?;
    for r in &report.trace {
        w.write_record([r.iter.to_string(), num(r.cost), num(r.grad_norm), format!("{:.6}", r.wall_time_s)])?;
    }
    finish(w, path)
}

/// `tableau, h, err_forward, err_gradient`
pub fn write_order_study(path: &Path, config: &str, results: &[OrderStudyResult]) -> AppResult<()> {
    let mut w = open(path, config, &["tableau", "h", "err_forward", "err_gradient"])?;
    for r in results {
        for l in &r.levels {
            w.write_record([r.tableau.clone(), num(l.h), num(l.err_forward), num(l.err_gradient)])?;
        }
    }
    finish(w, path)
}

/// `N, iterations, cpu_s, final_cost`
pub fn write_tracking(path: &Path, config: &str, rows: &[TrackingTableRow]) -> AppResult<()> {
    let mut w = open(path, config, &["N", "iterations", "cpu_s", "final_cost"])?;
    for r in rows {
        w.write_record([r.n_cells.to_string(), r.iterations.to_string(), format!("{:.3}", r.wall_time_s), num(r.final_cost)])?;
    }
    finish(w, path)
}

/// `i, x, adjoint_grad, fd_grad, rel_err`
pub fn write_gradient_report(path: &Path, config: &str, report: &GradientReport) -> AppResult<()> {
    let config = format!(
        "{config} theta={} richardson={:e} max_rel_err={:e} mean_rel_err={:e}",
        report.theta, report.richardson_estimate, report.max_rel_err, report.mean_rel_err
    );
    let mut w = open(path, &config, &["i", "x", "adjoint_grad", "fd_grad", "rel_err"])?;
    for r in &report.rows {
        w.write_record([r.i.to_string(), num(r.x), num(r.adjoint), num(r.fd), num(r.rel_err)])?;
    }
    finish(w, path)
}
