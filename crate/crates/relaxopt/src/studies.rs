//! Experiment harnesses: temporal order studies, the tracking table, and
//! adjoint-versus-finite-difference gradient reports.

use std::f64::consts::PI;
use std::time::Instant;

use rayon::prelude::*;
use relaxopt_core::adjoint::{solve_adjoint_with, AdjointSweepRecord};
use relaxopt_core::optimize::{fd_gradient_component, gradient, steepest_descent, Clock, ControlProblem};
use relaxopt_core::tableau::{order_report, ORDER_TOL};
use relaxopt_core::{
    assemble_gradient, make_grid, solve_adjoint, solve_forward, AdjointForm, ForwardProblem, ImexTableau,
    SpatialScheme, SpeedRule, StepRule, Storage,
};

use crate::config::{RunConfig, SpeedMode};
use crate::error::{AppError, AppResult};

/// Wall clock measured from construction.
#[derive(Debug, Clone, Copy)]
pub struct StdClock(Instant);

impl StdClock {
    pub fn start() -> Self {
        Self(Instant::now())
    }
}

impl Clock for StdClock {
    fn now_s(&self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
}

/// Smooth initial data of the Burgers experiments; shocks form at `t = 1`.
pub fn smooth_control(x: f64) -> f64 {
    0.5 + x.sin()
}

/// Fixed target for gradient convergence studies.
pub fn study_target(x: f64) -> f64 {
    0.5 + 0.5 * (x - 0.3).sin()
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// Least-squares slope of `log e` against `log h`.
pub fn fitted_slope(h: &[f64], e: &[f64]) -> f64 {
    let xs: Vec<f64> = h.iter().map(|h| h.ln()).collect();
    let ys: Vec<f64> = e.iter().map(|e| e.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrderStudyConfig {
    pub n_cells: usize,
    pub t_final: f64,
    pub epsilon: f64,
    pub scheme: SpatialScheme,
    /// At least 3.
    pub levels: usize,
    /// Step count of the coarsest level; derived from `start_cfl` when `None`.
    pub base_steps: Option<usize>,
    /// The coarsest step is at most `start_cfl · dx / a`.
    pub start_cfl: f64,
    /// Reference run uses the finest step divided by this.
    pub reference_factor: usize,
    pub checkpoint: usize,
}

impl Default for OrderStudyConfig {
    fn default() -> Self {
        Self {
            n_cells: 2048,
            t_final: 0.5,
            epsilon: 1e-6,
            scheme: SpatialScheme::Upwind1,
            levels: 4,
            base_steps: None,
            start_cfl: 0.9,
            reference_factor: 8,
            checkpoint: 64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrderLevel {
    pub h: f64,
    pub steps: usize,
    pub err_forward: f64,
    pub err_gradient: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrderStudyResult {
    pub tableau: String,
    /// Decreasing `h`.
    pub levels: Vec<OrderLevel>,
    pub forward_order: f64,
    pub gradient_order: f64,
    /// Forward order reported by the checker.
    pub target_order: u8,
    pub adjoint_system_order: u8,
    /// Errors did not decrease monotonically.
    pub inconclusive: bool,
}

struct LevelRun {
    u_t: Vec<f64>,
    grad: Vec<f64>,
}

fn study_problem(cfg: &OrderStudyConfig, steps: usize) -> AppResult<ForwardProblem> {
    let grid = make_grid(0.0, 2.0 * PI, cfg.n_cells)?;
    let mut p = ForwardProblem::burgers(grid, cfg.t_final);
    p.relax.epsilon = cfg.epsilon;
    p.scheme = cfg.scheme;
    p.step_rule = StepRule::Steps(steps);
    Ok(p)
}

fn run_level(cfg: &OrderStudyConfig, tab: &ImexTableau, steps: usize) -> AppResult<LevelRun> {
    let p = study_problem(cfg, steps)?;
    let u0 = p.grid.sample(smooth_control);
    let u_d = p.grid.sample(study_target);
    let traj = solve_forward(&p, tab, &u0, Storage::Checkpoints(cfg.checkpoint))?;
    let rec = solve_adjoint(&traj, &u_d, AdjointForm::Ark)?;
    Ok(LevelRun { u_t: traj.terminal().u.clone(), grad: assemble_gradient(&rec, &u0, &p.model) })
}

/// Self-convergence study in `h` on a fixed grid, for the terminal state
/// and for the reduced gradient.
pub fn temporal_order_study(cfg: &OrderStudyConfig, tab: &ImexTableau) -> AppResult<OrderStudyResult> {
    if cfg.levels < 3 {
        return Err(AppError::config("levels", format!("need at least 3 levels, got {}", cfg.levels)));
    }
    if cfg.reference_factor < 2 {
        return Err(AppError::config("reference_factor", "must be at least 2"));
    }
    if cfg.t_final <= 0.0 {
        return Err(AppError::config("t_final", "must be positive"));
    }
    let probe = study_problem(cfg, 1)?;
    let a = probe.speed_for(&probe.grid.sample(smooth_control))?;
    let base = cfg
        .base_steps
        .unwrap_or_else(|| (cfg.t_final * a / (cfg.start_cfl * probe.grid.dx())).ceil() as usize)
        .max(1);
    let mut steps: Vec<usize> = (0..cfg.levels).map(|k| base << k).collect();
    steps.push((base << (cfg.levels - 1)) * cfg.reference_factor);

    let runs: Vec<LevelRun> =
        steps.par_iter().map(|&n| run_level(cfg, tab, n)).collect::<AppResult<Vec<_>>>()?;
    let (reference, runs) = runs.split_last().expect("levels plus reference");
    let g_scale = max_abs(&reference.grad).max(f64::MIN_POSITIVE);
    let levels: Vec<OrderLevel> = runs
        .iter()
        .zip(&steps)
        .map(|(r, &n)| OrderLevel {
            h: cfg.t_final / n as f64,
            steps: n,
            err_forward: max_abs_diff(&r.u_t, &reference.u_t),
            err_gradient: max_abs_diff(&r.grad, &reference.grad) / g_scale,
        })
        .collect();

    let hs: Vec<f64> = levels.iter().map(|l| l.h).collect();
    let ef: Vec<f64> = levels.iter().map(|l| l.err_forward).collect();
    let eg: Vec<f64> = levels.iter().map(|l| l.err_gradient).collect();
    let monotone = |e: &[f64]| e.iter().all(|x| x.is_finite() && *x > 0.0) && e.windows(2).all(|w| w[1] < w[0]);
    let report = order_report(tab, ORDER_TOL);
    Ok(OrderStudyResult {
        tableau: tab.name().to_string(),
        forward_order: fitted_slope(&hs, &ef),
        gradient_order: fitted_slope(&hs, &eg),
        target_order: report.forward_order,
        adjoint_system_order: report.adjoint_system_order,
        inconclusive: !(monotone(&ef) && monotone(&eg)),
        levels,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackingTableRow {
    pub n_cells: usize,
    pub iterations: usize,
    pub wall_time_s: f64,
    pub final_cost: f64,
    pub converged: bool,
}

/// The tracking experiment on `n` cells: the desired state is the terminal
/// state of the smooth control, the descent starts from `u0 ≡ 0.5`.
pub fn tracking_problem(cfg: &RunConfig, n: usize) -> AppResult<(ControlProblem, Vec<f64>)> {
    let mut c = cfg.clone();
    c.n_cells = n;
    let mut fwd = c.forward_problem()?;
    let target = fwd.grid.sample(smooth_control);
    if cfg.speed == SpeedMode::Pinned {
        fwd.pin_speed_to(&target)?;
    } else {
        fwd.speed = SpeedRule::PerSolve;
    }
    let problem = ControlProblem::tracking(fwd, c.load_tableau()?, &target)?;
    Ok((problem, vec![0.5; n]))
}

fn tracking_row(cfg: &RunConfig, n: usize) -> AppResult<TrackingTableRow> {
    let (problem, start) = tracking_problem(cfg, n)?;
    let clock = StdClock::start();
    match steepest_descent(&problem, &start, &cfg.descent_options(), &clock) {
        Ok((_, rep)) => Ok(TrackingTableRow {
            n_cells: n,
            iterations: rep.iterations,
            wall_time_s: rep.wall_time,
            final_cost: rep.final_cost,
            converged: rep.converged,
        }),
        Err(relaxopt_core::Error::Divergence { .. }) => Ok(TrackingTableRow {
            n_cells: n,
            iterations: cfg.max_iter,
            wall_time_s: clock.now_s(),
            final_cost: f64::INFINITY,
            converged: false,
        }),
        Err(e) => Err(e.into()),
    }
}

/// One optimizer run per grid size; rows keep the order of `sizes`.
pub fn tracking_table(cfg: &RunConfig, sizes: &[usize]) -> AppResult<Vec<TrackingTableRow>> {
    if sizes.is_empty() {
        return Err(AppError::config("grid_sizes", "need at least one grid size"));
    }
    sizes.par_iter().map(|&n| tracking_row(cfg, n)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlphaCalibration {
    pub alpha: f64,
    pub rows: Vec<TrackingTableRow>,
}

/// Tracking table for each candidate step size.
pub fn calibrate_alpha(cfg: &RunConfig, sizes: &[usize], alphas: &[f64]) -> AppResult<Vec<AlphaCalibration>> {
    alphas
        .iter()
        .map(|&alpha| {
            let mut c = cfg.clone();
            c.alpha = alpha;
            Ok(AlphaCalibration { alpha, rows: tracking_table(&c, sizes)? })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientRow {
    pub i: usize,
    pub x: f64,
    pub adjoint: f64,
    pub fd: f64,
    /// `|adjoint − fd| / ‖fd‖_∞`
    pub rel_err: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientReport {
    pub rows: Vec<GradientRow>,
    /// `‖adjoint − fd‖_∞ / ‖fd‖_∞`
    pub max_rel_err: f64,
    pub mean_rel_err: f64,
    pub theta: f64,
    /// `‖fd(θ) − fd(θ/2)‖_∞ · 4/3 / ‖fd‖_∞`, the estimated FD truncation error.
    pub richardson_estimate: f64,
    pub form_used: AdjointForm,
}

/// Adjoint gradient against central differences with step `theta`, the
/// speed frozen at its value for `u0`.
pub fn gradient_report(problem: &ControlProblem, u0: &[f64], theta: f64, form: AdjointForm) -> AppResult<GradientReport> {
    let eval = gradient(problem, u0, form, Storage::Full)?;
    let pairs: Vec<(f64, f64)> = (0..u0.len())
        .into_par_iter()
        .map(|i| {
            Ok((
                fd_gradient_component(problem, u0, eval.a, i, theta)?,
                fd_gradient_component(problem, u0, eval.a, i, 0.5 * theta)?,
            ))
        })
        .collect::<AppResult<Vec<_>>>()?;
    let fd: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let scale = max_abs(&fd);
    let rel = |d: f64| if scale > 0.0 { d / scale } else { d };
    let x = problem.forward.grid.centers();
    let rows: Vec<GradientRow> = (0..u0.len())
        .map(|i| GradientRow {
            i,
            x: x[i],
            adjoint: eval.gradient[i],
            fd: fd[i],
            rel_err: rel((eval.gradient[i] - fd[i]).abs()),
        })
        .collect();
    let richardson = pairs.iter().fold(0.0_f64, |m, (a, b)| m.max((a - b).abs())) * 4.0 / 3.0;
    Ok(GradientReport {
        max_rel_err: rows.iter().fold(0.0, |m, r| m.max(r.rel_err)),
        mean_rel_err: rows.iter().map(|r| r.rel_err).sum::<f64>() / rows.len().max(1) as f64,
        rows,
        theta,
        richardson_estimate: rel(richardson),
        form_used: eval.form_used,
    })
}

/// Smooth gradient-check configuration: `n` cells, `T = 0.5`, `u_d ≡ 0.5`.
pub fn gradient_check_problem(cfg: &RunConfig, n: usize) -> AppResult<(ControlProblem, Vec<f64>)> {
    let mut c = cfg.clone();
    c.n_cells = n;
    c.t_final = 0.5;
    let fwd = c.forward_problem()?;
    let u0 = fwd.grid.sample(smooth_control);
    let problem = ControlProblem::new(fwd, c.load_tableau()?, vec![0.5; n])?;
    Ok((problem, u0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FormAgreement {
    /// Largest relative deviation between any two forms over every costate.
    pub max_rel: f64,
    /// False when the tableau has a zero weight and only ξ and ζ ran.
    pub ark_available: bool,
}

/// Runs every available adjoint form over the same trajectory and compares
/// all costates `p_0 … p_N`.
pub fn form_agreement(problem: &ControlProblem, u0: &[f64]) -> AppResult<FormAgreement> {
    let traj = solve_forward(&problem.forward, &problem.tableau, u0, Storage::Full)?;
    let sweeps: Vec<AdjointSweepRecord> = [AdjointForm::Ark, AdjointForm::Xi, AdjointForm::Zeta]
        .into_iter()
        .map(|f| solve_adjoint_with(&traj, &problem.u_d, f, true))
        .collect::<Result<_, _>>()?;
    let ark_available = sweeps[0].form_used == AdjointForm::Ark;
    let mut max_rel: f64 = 0.0;
    for (a, b) in [(0, 1), (1, 2), (0, 2)] {
        for (x, y) in sweeps[a].costates.iter().zip(&sweeps[b].costates) {
            let scale = x.max_abs().max(y.max_abs()).max(f64::MIN_POSITIVE);
            max_rel = max_rel.max(x.max_abs_diff(y) / scale);
        }
    }
    Ok(FormAgreement { max_rel, ark_available })
}

#[cfg(test)]
mod tests {
    use super::*;
    use relaxopt_core::builtin_tableau;

    #[test]
    fn slope_of_exact_power_law() {
        let h = [0.1, 0.05, 0.025];
        let e: Vec<f64> = h.iter().map(|h: &f64| 3.0 * h.powi(2)).collect();
        assert!((fitted_slope(&h, &e) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn small_order_study_is_well_formed() {
        let cfg = OrderStudyConfig { n_cells: 64, levels: 3, ..Default::default() };
        let r = temporal_order_study(&cfg, &builtin_tableau("ars-222").unwrap()).unwrap();
        assert_eq!(r.levels.len(), 3);
        assert!(r.levels.windows(2).all(|w| (w[0].h - 2.0 * w[1].h).abs() < 1e-15));
        assert!(!r.inconclusive);
        assert!((r.forward_order - 2.0).abs() < 0.3, "{r:?}");
        assert_eq!(r.target_order, 2);
    }

    #[test]
    fn order_study_needs_three_levels() {
        let cfg = OrderStudyConfig { n_cells: 16, levels: 2, ..Default::default() };
        assert!(temporal_order_study(&cfg, &builtin_tableau("imex-euler").unwrap()).is_err());
    }

    #[test]
    fn single_grid_tracking_table_has_one_row() {
        let cfg = RunConfig { t_final: 0.5, ..Default::default() };
        let rows = tracking_table(&cfg, &[40]).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].n_cells, 40);
        assert!(rows[0].converged && rows[0].final_cost < cfg.tol);
        assert!(tracking_table(&cfg, &[]).is_err());
    }

    #[test]
    fn gradient_report_at_the_optimum_is_zero() {
        let cfg = RunConfig::default();
        let (problem, _) = tracking_problem(&RunConfig { t_final: 0.5, ..cfg }, 24).unwrap();
        let u_star = problem.forward.grid.sample(smooth_control);
        let r = gradient_report(&problem, &u_star, 1e-5, AdjointForm::Ark).unwrap();
        assert!(r.rows.iter().all(|row| row.adjoint.abs() < 1e-9 && row.fd.abs() < 1e-9));
        assert_eq!(r.theta, 1e-5);
    }

    #[test]
    fn gradient_report_smooth_case() {
        let (problem, u0) = gradient_check_problem(&RunConfig::default(), 30).unwrap();
        let r = gradient_report(&problem, &u0, 1e-5, AdjointForm::Ark).unwrap();
        assert!(r.max_rel_err < 1e-4, "{}", r.max_rel_err);
        assert!(r.mean_rel_err <= r.max_rel_err);
        assert!(r.richardson_estimate < 1e-4);
    }

    #[test]
    fn forms_agree_on_smooth_problem() {
        let cfg = RunConfig { tableau: "ssp2-222".into(), ..Default::default() };
        let (problem, u0) = gradient_check_problem(&cfg, 20).unwrap();
        let f = form_agreement(&problem, &u0).unwrap();
        assert!(f.ark_available);
        assert!(f.max_rel < 1e-11);
        let cfg = RunConfig { tableau: "ars-222".into(), ..Default::default() };
        let (problem, u0) = gradient_check_problem(&cfg, 20).unwrap();
        assert!(!form_agreement(&problem, &u0).unwrap().ark_available);
    }
}
