//! Tracking functional, reduced cost, finite-difference oracle and the
//! fixed-step steepest descent on the initial control.

use alloc::vec::Vec;

use crate::adjoint::{assemble_gradient, solve_adjoint, AdjointForm};
use crate::error::{Error, Result};
use crate::forward::{solve_forward, solve_forward_with_speed, ForwardProblem, Storage, Trajectory};
use crate::tableau::ImexTableau;

/// `J = dx/2 Σ (u_i − u_d,i)²`
pub fn cost(u_t: &[f64], u_d: &[f64], dx: f64) -> Result<f64> {
    if u_t.len() != u_d.len() {
        return Err(Error::SizeMismatch { expected: u_d.len(), found: u_t.len() });
    }
    Ok(0.5 * dx * u_t.iter().zip(u_d).map(|(u, d)| (u - d) * (u - d)).sum::<f64>())
}

/// A tracking problem: forward setup, tableau and desired terminal state.
#[derive(Debug, Clone)]
pub struct ControlProblem {
    pub forward: ForwardProblem,
    pub tableau: ImexTableau,
    pub u_d: Vec<f64>,
}

impl ControlProblem {
    pub fn new(forward: ForwardProblem, tableau: ImexTableau, u_d: Vec<f64>) -> Result<Self> {
        let p = Self { forward, tableau, u_d };
        p.validate()?;
        Ok(p)
    }

    /// Desired state taken as the terminal state of a forward solve from
    /// `target_u0` on the same grid and tableau.
    pub fn tracking(forward: ForwardProblem, tableau: ImexTableau, target_u0: &[f64]) -> Result<Self> {
        let traj = solve_forward(&forward, &tableau, target_u0, Storage::TerminalOnly)?;
        let u_d = traj.terminal().u.clone();
        Self::new(forward, tableau, u_d)
    }

    pub fn validate(&self) -> Result<()> {
        self.forward.validate()?;
        if self.forward.t_final <= 0.0 {
            return Err(Error::InvalidParameter { name: "t_final", reason: "must be positive".into() });
        }
        self.forward.grid.check_len(self.u_d.len())?;
        if let Some(index) = self.u_d.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite { what: "u_d", index });
        }
        Ok(())
    }

    pub fn dx(&self) -> f64 {
        self.forward.grid.dx()
    }
}

fn terminal_cost(problem: &ControlProblem, traj: &Trajectory) -> Result<f64> {
    let j = cost(&traj.terminal().u, &problem.u_d, problem.dx())?;
    if j.is_finite() {
        Ok(j)
    } else {
        Err(Error::Divergence { step: traj.n_steps(), stage: 0 })
    }
}

/// Forward solve then cost at `T`; the speed follows `u0`.
pub fn reduced_cost(problem: &ControlProblem, u0: &[f64]) -> Result<f64> {
    let traj = solve_forward(&problem.forward, &problem.tableau, u0, Storage::TerminalOnly)?;
    terminal_cost(problem, &traj)
}

/// Reduced cost with the relaxation speed (and hence the step schedule) fixed.
pub fn reduced_cost_at_speed(problem: &ControlProblem, u0: &[f64], a: f64) -> Result<f64> {
    let traj = solve_forward_with_speed(&problem.forward, &problem.tableau, u0, a, Storage::TerminalOnly)?;
    terminal_cost(problem, &traj)
}

/// Cost and adjoint gradient at one control.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientEval {
    pub cost: f64,
    pub gradient: Vec<f64>,
    /// Speed the forward solve used; the gradient treats it as a constant.
    pub a: f64,
    pub form_used: AdjointForm,
}

pub fn gradient(problem: &ControlProblem, u0: &[f64], form: AdjointForm, storage: Storage) -> Result<GradientEval> {
    let traj = solve_forward(&problem.forward, &problem.tableau, u0, storage)?;
    let cost = terminal_cost(problem, &traj)?;
    let rec = solve_adjoint(&traj, &problem.u_d, form)?;
    Ok(GradientEval {
        cost,
        gradient: assemble_gradient(&rec, u0, &problem.forward.model),
        a: traj.a(),
        form_used: rec.form_used,
    })
}

fn check_theta(theta: f64) -> Result<()> {
    if theta.is_finite() && theta > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter { name: "theta", reason: alloc::format!("must be positive, got {theta}") })
    }
}

/// One central difference `(J(u0 + θ e_i) − J(u0 − θ e_i)) / 2θ` at fixed speed `a`.
pub fn fd_gradient_component(problem: &ControlProblem, u0: &[f64], a: f64, i: usize, theta: f64) -> Result<f64> {
    check_theta(theta)?;
    problem.forward.grid.check_len(u0.len())?;
    let mut w = u0.to_vec();
    w[i] = u0[i] + theta;
    let plus = reduced_cost_at_speed(problem, &w, a)?;
    w[i] = u0[i] - theta;
    let minus = reduced_cost_at_speed(problem, &w, a)?;
    Ok((plus - minus) / (2.0 * theta))
}

/// Central-difference gradient. The speed is frozen at its value for `u0`,
/// matching what the adjoint differentiates.
pub fn fd_gradient(problem: &ControlProblem, u0: &[f64], theta: f64) -> Result<Vec<f64>> {
    check_theta(theta)?;
    let a = problem.forward.speed_for(u0)?;
    (0..u0.len()).map(|i| fd_gradient_component(problem, u0, a, i, theta)).collect()
}

/// Wall-clock source; the core crate has none of its own.
pub trait Clock {
    /// Seconds since an arbitrary fixed origin.
    fn now_s(&self) -> f64;
}

/// Reports zero elapsed time.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoClock;

impl Clock for NoClock {
    fn now_s(&self) -> f64 {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DescentOptions {
    /// Fixed step in `(0, 1)`.
    pub alpha: f64,
    /// Stop once `J < tol`.
    pub tol: f64,
    pub max_iter: usize,
    pub form: AdjointForm,
    pub storage: Storage,
}

impl Default for DescentOptions {
    fn default() -> Self {
        Self { alpha: 0.1, tol: 1e-2, max_iter: 500, form: AdjointForm::Ark, storage: Storage::Full }
    }
}

impl DescentOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidParameter { name: "alpha", reason: alloc::format!("must lie in (0, 1), got {}", self.alpha) });
        }
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(Error::InvalidParameter { name: "tol", reason: alloc::format!("must be positive, got {}", self.tol) });
        }
        if let Storage::TerminalOnly | Storage::Checkpoints(0) = self.storage {
            return Err(Error::InvalidParameter { name: "storage", reason: "descent needs stage storage".into() });
        }
        Ok(())
    }
}

/// One optimizer iterate as exported to the trace CSV.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub iter: usize,
    pub cost: f64,
    pub grad_norm: f64,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerReport {
    pub iterations: usize,
    pub final_cost: f64,
    /// `iterations + 1` entries, the first at the starting control.
    pub cost_history: Vec<f64>,
    pub step_size: f64,
    /// `final_cost < tol`
    pub converged: bool,
    pub wall_time: f64,
    pub trace: Vec<TraceRow>,
}

/// Fixed-step steepest descent `u0 ← u0 − α ∇J / dx`.
///
/// The assembled gradient is that of the `dx`-weighted sum, so dividing by
/// `dx` gives the grid-independent L² gradient and keeps `α` meaningful
/// across resolutions.
pub fn steepest_descent(
    problem: &ControlProblem,
    u0_start: &[f64],
    opts: &DescentOptions,
    clock: &dyn Clock,
) -> Result<(Vec<f64>, OptimizerReport)> {
    problem.validate()?;
    opts.validate()?;
    problem.forward.grid.check_len(u0_start.len())?;
    let t0 = clock.now_s();
    let inv_dx = 1.0 / problem.dx();
    let mut u = u0_start.to_vec();
    let mut history = Vec::new();
    let mut trace = Vec::new();
    let mut iterations = 0;
    loop {
        let eval = gradient(problem, &u, opts.form, opts.storage)?;
        let grad_norm = libm::sqrt(eval.gradient.iter().map(|g| g * g).sum::<f64>());
        history.push(eval.cost);
        trace.push(TraceRow { iter: iterations, cost: eval.cost, grad_norm, wall_time_s: clock.now_s() - t0 });
        if eval.cost < opts.tol || iterations >= opts.max_iter {
            break;
        }
        for (u, g) in u.iter_mut().zip(&eval.gradient) {
            *u -= opts.alpha * inv_dx * g;
        }
        iterations += 1;
    }
    let final_cost = *history.last().expect("history holds the starting cost");
    Ok((
        u,
        OptimizerReport {
            iterations,
            final_cost,
            cost_history: history,
            step_size: opts.alpha,
            converged: final_cost < opts.tol,
            wall_time: clock.now_s() - t0,
            trace,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::make_grid;
    use crate::tableau::builtin_tableau;
    use core::f64::consts::PI;

    #[test]
    fn cost_examples() {
        assert_eq!(cost(&[0.2, 0.7], &[0.2, 0.7], 0.3).unwrap(), 0.0);
        let j = cost(&[1.0; 100], &[0.0; 100], 0.01).unwrap();
        assert!((j - 0.5).abs() < 1e-14);
        assert_eq!(cost(&[3.0, 4.0], &[0.0, 0.0], 2.0).unwrap(), 25.0);
        assert!(matches!(cost(&[1.0], &[1.0, 2.0], 1.0), Err(Error::SizeMismatch { .. })));
    }

    fn problem(n: usize, t: f64) -> ControlProblem {
        let grid = make_grid(0.0, 2.0 * PI, n).unwrap();
        let fwd = ForwardProblem::burgers(grid.clone(), t);
        ControlProblem::tracking(fwd, builtin_tableau("imex-euler").unwrap(), &grid.sample(|x| 0.5 + x.sin()))
            .unwrap()
    }

    #[test]
    fn generating_control_reproduces_target() {
        let p = problem(40, 0.5);
        let u0 = p.forward.grid.sample(|x| 0.5 + x.sin());
        assert!(reduced_cost(&p, &u0).unwrap() <= 1e-20);
        assert!(reduced_cost(&p, &[0.5; 40]).unwrap() > 0.0);
    }

    #[test]
    fn nonpositive_horizon_rejected() {
        let grid = make_grid(0.0, 1.0, 8).unwrap();
        let fwd = ForwardProblem::burgers(grid, 0.0);
        let err = ControlProblem::new(fwd, builtin_tableau("imex-euler").unwrap(), alloc::vec![0.0; 8]);
        assert!(matches!(err, Err(Error::InvalidParameter { name: "t_final", .. })));
    }

    #[test]
    fn already_optimal_start_takes_no_iterations() {
        let p = problem(30, 0.5);
        let u0 = p.forward.grid.sample(|x| 0.5 + x.sin());
        let (u, rep) = steepest_descent(&p, &u0, &DescentOptions::default(), &NoClock).unwrap();
        assert_eq!(rep.iterations, 0);
        assert!(rep.converged);
        assert_eq!(rep.cost_history.len(), 1);
        assert_eq!(u, u0);
    }

    #[test]
    fn max_iter_zero_is_not_an_error() {
        let p = problem(30, 0.5);
        let opts = DescentOptions { max_iter: 0, ..Default::default() };
        let (_, rep) = steepest_descent(&p, &[0.5; 30], &opts, &NoClock).unwrap();
        assert_eq!(rep.iterations, 0);
        assert!(!rep.converged);
        assert_eq!(rep.cost_history.len(), 1);
    }

    #[test]
    fn descent_options_validated() {
        let p = problem(10, 0.5);
        for bad in [
            DescentOptions { alpha: 1.0, ..Default::default() },
            DescentOptions { tol: 0.0, ..Default::default() },
            DescentOptions { storage: Storage::TerminalOnly, ..Default::default() },
        ] {
            assert!(steepest_descent(&p, &[0.5; 10], &bad, &NoClock).is_err());
        }
    }

    #[test]
    fn fd_rejects_bad_theta() {
        let p = problem(10, 0.5);
        assert!(fd_gradient(&p, &[0.5; 10], 0.0).is_err());
    }
}
