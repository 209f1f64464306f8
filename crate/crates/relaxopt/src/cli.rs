//! Command-line front end.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use relaxopt_core::optimize::{gradient, reduced_cost_at_speed, steepest_descent};
use relaxopt_core::tableau::{order_report, ORDER_TOL};
use relaxopt_core::{solve_forward, ImexTableau, OrderReport, Storage};

use crate::config::{form_name, RunConfig, KEYS};
use crate::error::{exit, AppError, AppResult};
use crate::output;
use crate::studies::{
    calibrate_alpha, form_agreement, gradient_check_problem, gradient_report, smooth_control, temporal_order_study,
    tracking_problem, tracking_table, OrderStudyConfig, StdClock,
};

/// Acceptance thresholds used by `check`.
pub const GRADIENT_REL_TOL: f64 = 1e-4;
pub const FORM_REL_TOL: f64 = 1e-11;
pub const DIRECTIONAL_REL_TOL: f64 = 1e-5;

#[derive(Debug, Parser)]
#[command(name = "relaxopt", version, about = "Optimal control of 1-D conservation laws via relaxation and IMEX adjoints")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Forward solve from u0 = 0.5 + sin(x); writes trajectory.csv.
    Solve(RunArgs),
    /// Steepest descent on the tracking problem; writes trace.csv and control.csv.
    Optimize(RunArgs),
    /// Order report, gradient report and adjoint form agreement for a tableau.
    Check {
        #[command(flatten)]
        run: RunArgs,
        /// Fail unless the checker reports exactly this forward order.
        #[arg(long)]
        expect_order: Option<u8>,
        /// Cells of the gradient check problem.
        #[arg(long, default_value_t = 50)]
        check_cells: usize,
        /// Finite-difference step.
        #[arg(long, default_value_t = 1e-5)]
        theta: f64,
    },
    /// Temporal self-convergence of the state and the gradient.
    OrderStudy {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated tableau names or files.
        #[arg(long, value_delimiter = ',', default_value = "imex-euler,ars-222")]
        tableaus: Vec<String>,
        #[arg(long, default_value_t = 2048)]
        study_cells: usize,
        #[arg(long, default_value_t = 4)]
        levels: usize,
        #[arg(long, default_value_t = 0.5)]
        study_t_final: f64,
    },
    /// Iteration counts of the tracking experiment per grid size.
    TrackingTable {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_delimiter = ',', default_value = "100,150,200,300")]
        grid_sizes: Vec<usize>,
    },
    /// Tracking table for a sweep of descent step sizes.
    CalibrateAlpha {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_delimiter = ',', default_value = "100,150,200,300")]
        grid_sizes: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9")]
        alphas: Vec<f64>,
    },
}

/// Configuration file plus per-key overrides (flags win over the file,
/// the file over `RELAXOPT_OUTPUT_DIR`, that over built-in defaults).
#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// Flat `key = value` configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, allow_hyphen_values = true)]
    pub x_min: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub x_max: Option<String>,
    #[arg(long)]
    pub n_cells: Option<String>,
    #[arg(long)]
    pub t_final: Option<String>,
    #[arg(long)]
    pub epsilon: Option<String>,
    #[arg(long)]
    pub safety: Option<String>,
    #[arg(long)]
    pub a_floor: Option<String>,
    #[arg(long)]
    pub c_cfl: Option<String>,
    /// Registered name or tableau file.
    #[arg(long)]
    pub tableau: Option<String>,
    /// upwind | muscl
    #[arg(long)]
    pub scheme: Option<String>,
    #[arg(long)]
    pub limiter: Option<String>,
    #[arg(long)]
    pub alpha: Option<String>,
    #[arg(long)]
    pub tol: Option<String>,
    #[arg(long)]
    pub max_iter: Option<String>,
    #[arg(long)]
    pub seed: Option<String>,
    #[arg(long)]
    pub output_dir: Option<String>,
    /// ark | xi | zeta
    #[arg(long)]
    pub adjoint_form: Option<String>,
    /// pinned | per-solve
    #[arg(long)]
    pub speed: Option<String>,
    #[arg(long)]
    pub frame_stride: Option<String>,
}

impl RunArgs {
    fn overrides(&self) -> [(&'static str, &Option<String>); 19] {
        [
            ("x_min", &self.x_min),
            ("x_max", &self.x_max),
            ("n_cells", &self.n_cells),
            ("t_final", &self.t_final),
            ("epsilon", &self.epsilon),
            ("safety", &self.safety),
            ("a_floor", &self.a_floor),
            ("c_cfl", &self.c_cfl),
            ("tableau", &self.tableau),
            ("scheme", &self.scheme),
            ("limiter", &self.limiter),
            ("alpha", &self.alpha),
            ("tol", &self.tol),
            ("max_iter", &self.max_iter),
            ("seed", &self.seed),
            ("output_dir", &self.output_dir),
            ("adjoint_form", &self.adjoint_form),
            ("speed", &self.speed),
            ("frame_stride", &self.frame_stride),
        ]
    }

    pub fn resolve(&self) -> AppResult<RunConfig> {
        debug_assert_eq!(self.overrides().len(), KEYS.len());
        let mut cfg = RunConfig::default();
        if let Some(dir) = std::env::var_os("RELAXOPT_OUTPUT_DIR") {
            cfg.output_dir = PathBuf::from(dir);
        }
        if let Some(path) = &self.config {
            cfg.apply_file(path)?;
        }
        for (key, value) in self.overrides() {
            if let Some(v) = value {
                cfg.set(key, v)?;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// False for NaN.
fn within(x: f64, tol: f64) -> bool {
    x <= tol
}

fn out_path(cfg: &RunConfig, name: &str) -> PathBuf {
    cfg.output_dir.join(name)
}

fn print_order_report(r: &OrderReport) {
    println!("tableau {}: forward order {}, adjoint system order {}, third-order branch {:?}", r.tableau, r.forward_order, r.adjoint_system_order, r.branch_used);
    for c in &r.residuals {
        println!("  {:<28} order {} {:<14} residual {:.3e}", c.label, c.order, format!("{:?}", c.kind), c.residual);
    }
}

fn cmd_solve(cfg: &RunConfig) -> AppResult<()> {
    let problem = cfg.forward_problem()?;
    let tab = cfg.load_tableau()?;
    let u0 = problem.grid.sample(smooth_control);
    let traj = solve_forward(&problem, &tab, &u0, Storage::Checkpoints(cfg.frame_stride))?;
    let path = out_path(cfg, "trajectory.csv");
    output::write_trajectory(&path, &cfg.header(), &traj, cfg.frame_stride)?;
    let mass0: f64 = u0.iter().sum::<f64>() * problem.grid.dx();
    let mass1: f64 = traj.terminal().u.iter().sum::<f64>() * problem.grid.dx();
    println!(
        "solved {} steps (h = {:.4e}, a = {:.4}) with {}; mass {:.12} -> {:.12}; wrote {}",
        traj.n_steps(),
        traj.h(),
        traj.a(),
        tab.name(),
        mass0,
        mass1,
        path.display()
    );
    Ok(())
}

fn cmd_optimize(cfg: &RunConfig) -> AppResult<()> {
    let (problem, start) = tracking_problem(cfg, cfg.n_cells)?;
    let clock = StdClock::start();
    let (u, report) = steepest_descent(&problem, &start, &cfg.descent_options(), &clock)?;
    let header = cfg.header();
    output::write_trace(&out_path(cfg, "trace.csv"), &header, &report)?;
    output::write_control(&out_path(cfg, "control.csv"), &header, &problem.forward.grid, &u)?;
    let eval = gradient(&problem, &u, cfg.adjoint_form, Storage::Full)?;
    output::write_gradient(&out_path(cfg, "gradient.csv"), &header, &problem.forward.grid, &u, &eval.gradient)?;
    println!(
        "N={} converged={} iterations={} final_cost={:.6e} alpha={} wall_time_s={:.3}",
        cfg.n_cells, report.converged, report.iterations, report.final_cost, report.step_size, report.wall_time
    );
    Ok(())
}

fn cmd_check(cfg: &RunConfig, expect_order: Option<u8>, check_cells: usize, theta: f64) -> AppResult<()> {
    let tab: ImexTableau = cfg.load_tableau()?;
    let report = order_report(&tab, ORDER_TOL);
    print_order_report(&report);
    println!("tableau coefficients:\n{}", crate::tableau_file::format_tableau(&tab));

    let mut failures = Vec::new();
    if report.forward_order == 0 {
        failures.push("tableau is not consistent (order < 1)".to_string());
    }
    if let Some(k) = expect_order {
        if report.forward_order != k {
            failures.push(format!("expected forward order {k}, checker reports {}", report.forward_order));
        }
    }

    let (problem, u0) = gradient_check_problem(cfg, check_cells)?;
    let g = gradient_report(&problem, &u0, theta, cfg.adjoint_form)?;
    let path = out_path(cfg, "gradient_report.csv");
    output::write_gradient_report(&path, &cfg.header(), &g)?;
    println!(
        "gradient ({} form, N={}): max rel err {:.3e}, mean rel err {:.3e}, theta {:e}, Richardson estimate {:.3e}",
        form_name(g.form_used),
        check_cells,
        g.max_rel_err,
        g.mean_rel_err,
        g.theta,
        g.richardson_estimate
    );
    if !within(g.max_rel_err, GRADIENT_REL_TOL) {
        failures.push(format!("gradient deviation {:.3e} > {GRADIENT_REL_TOL:e}", g.max_rel_err));
    }

    let eval = gradient(&problem, &u0, cfg.adjoint_form, Storage::Full)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut worst: f64 = 0.0;
    for _ in 0..5 {
        let d: Vec<f64> = (0..u0.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let shifted = |s: f64| -> Vec<f64> { u0.iter().zip(&d).map(|(u, d)| u + s * d).collect() };
        let fd = (reduced_cost_at_speed(&problem, &shifted(theta), eval.a)?
            - reduced_cost_at_speed(&problem, &shifted(-theta), eval.a)?)
            / (2.0 * theta);
        let ad: f64 = eval.gradient.iter().zip(&d).map(|(g, d)| g * d).sum();
        worst = worst.max((fd - ad).abs() / ad.abs().max(f64::MIN_POSITIVE));
    }
    println!("directional derivatives (5 seeded directions): max rel err {worst:.3e}");
    if !within(worst, DIRECTIONAL_REL_TOL) {
        failures.push(format!("directional derivative deviation {worst:.3e} > {DIRECTIONAL_REL_TOL:e}"));
    }

    let forms = form_agreement(&problem, &u0)?;
    println!(
        "adjoint forms ({}): max rel deviation {:.3e}",
        if forms.ark_available { "ark, xi, zeta" } else { "xi, zeta; zero weight rules out ark" },
        forms.max_rel
    );
    if !within(forms.max_rel, FORM_REL_TOL) {
        failures.push(format!("adjoint forms differ by {:.3e}", forms.max_rel));
    }

    if failures.is_empty() {
        println!("check passed");
        Ok(())
    } else {
        Err(AppError::Acceptance(failures.join("; ")))
    }
}

fn cmd_order_study(cfg: &RunConfig, tableaus: &[String], cells: usize, levels: usize, t_final: f64) -> AppResult<()> {
    let study = OrderStudyConfig {
        n_cells: cells,
        t_final,
        epsilon: cfg.epsilon,
        scheme: cfg.scheme,
        levels,
        ..Default::default()
    };
    let mut results = Vec::new();
    for spec in tableaus {
        let tab = crate::tableau_file::resolve_tableau(spec)?;
        let r = temporal_order_study(&study, &tab)?;
        println!(
            "{}: forward slope {:.3}, gradient slope {:.3} (checker: forward {}, adjoint system {}){}",
            r.tableau,
            r.forward_order,
            r.gradient_order,
            r.target_order,
            r.adjoint_system_order,
            if r.inconclusive { " [inconclusive: errors not monotone]" } else { "" }
        );
        for l in &r.levels {
            println!("  h {:.4e}  err_forward {:.4e}  err_gradient {:.4e}", l.h, l.err_forward, l.err_gradient);
        }
        results.push(r);
    }
    let path = out_path(cfg, "order_study.csv");
    output::write_order_study(&path, &format!("{} study_cells={cells} levels={levels} study_t_final={t_final}", cfg.header()), &results)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_tracking_table(cfg: &RunConfig, sizes: &[usize]) -> AppResult<()> {
    let rows = tracking_table(cfg, sizes)?;
    println!("{:>6} {:>10} {:>10} {:>14} {:>10}", "N", "iterations", "cpu_s", "final_cost", "converged");
    for r in &rows {
        println!("{:>6} {:>10} {:>10.3} {:>14.6e} {:>10}", r.n_cells, r.iterations, r.wall_time_s, r.final_cost, r.converged);
    }
    output::write_tracking(&out_path(cfg, "tracking.csv"), &cfg.header(), &rows)?;
    Ok(())
}

fn cmd_calibrate(cfg: &RunConfig, sizes: &[usize], alphas: &[f64]) -> AppResult<()> {
    for a in alphas {
        if !(*a > 0.0 && *a < 1.0) {
            return Err(AppError::config("alpha", format!("must lie in (0, 1), got {a}")));
        }
    }
    for c in calibrate_alpha(cfg, sizes, alphas)? {
        let cells: Vec<String> = c
            .rows
            .iter()
            .map(|r| if r.converged { format!("N={}:{}", r.n_cells, r.iterations) } else { format!("N={}:--", r.n_cells) })
            .collect();
        println!("alpha {:<5} {}", c.alpha, cells.join("  "));
    }
    Ok(())
}

fn dispatch(cli: &Cli) -> AppResult<()> {
    match &cli.command {
        Command::Solve(run) => cmd_solve(&run.resolve()?),
        Command::Optimize(run) => cmd_optimize(&run.resolve()?),
        Command::Check { run, expect_order, check_cells, theta } => {
            cmd_check(&run.resolve()?, *expect_order, *check_cells, *theta)
        }
        Command::OrderStudy { run, tableaus, study_cells, levels, study_t_final } => {
            cmd_order_study(&run.resolve()?, tableaus, *study_cells, *levels, *study_t_final)
        }
        Command::TrackingTable { run, grid_sizes } => cmd_tracking_table(&run.resolve()?, grid_sizes),
        Command::CalibrateAlpha { run, grid_sizes, alphas } => cmd_calibrate(&run.resolve()?, grid_sizes, alphas),
    }
}

/// Parses `args` and runs; returns the process exit code.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { exit::VALIDATION } else { exit::OK };
        }
    };
    match dispatch(&cli) {
        Ok(()) => exit::OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Resolves a config for tests and embedding without touching the environment.
pub fn config_from_file(path: &Path) -> AppResult<RunConfig> {
    let mut cfg = RunConfig::default();
    cfg.apply_file(path)?;
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn clap_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn flags_override_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        std::fs::write(&path, "n_cells = 64\nalpha = 0.2\n").unwrap();
        let args = RunArgs { config: Some(path), alpha: Some("0.3".into()), ..Default::default() };
        let cfg = args.resolve().unwrap();
        assert_eq!(cfg.n_cells, 64);
        assert_eq!(cfg.alpha, 0.3);
    }

    #[test]
    fn override_count_matches_keys() {
        assert_eq!(RunArgs::default().overrides().len(), KEYS.len());
        for ((k, _), key) in RunArgs::default().overrides().iter().zip(KEYS) {
            assert_eq!(k, key);
        }
    }
}
