//! IMEX Runge–Kutta integration of the semi-discrete relaxation system
//!
//! ```text
//! y' = −D_x g(y) + r(y) / eps,     r(u, v) = (0, f(u) − v)
//! ```
//!
//! Transport is explicit, the source implicit. Because `r` is linear in `v`
//! and has no `u` component, every implicit stage is solved in closed form.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::model::{relax_init, subchar_speed, FluxModel, Grid, RelaxConfig, RelaxState};
use crate::spatial::{SpatialOp, SpatialScheme};
use crate::tableau::ImexTableau;

/// How the time step is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepRule {
    /// `h = c * dx / a`, last step shortened to land on `T`.
    Cfl(f64),
    /// A fixed number of equal steps.
    Steps(usize),
}

/// How the relaxation speed `a` is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum SpeedRule {
    /// Subcharacteristic bound of each control, fixed for that solve.
    #[default]
    PerSolve,
    /// One speed for every solve.
    Pinned(f64),
}

/// Everything needed for a forward solve except the tableau and control.
#[derive(Debug, Clone)]
pub struct ForwardProblem {
    pub grid: Grid,
    pub model: FluxModel,
    pub relax: RelaxConfig,
    pub t_final: f64,
    pub step_rule: StepRule,
    pub scheme: SpatialScheme,
    pub speed: SpeedRule,
}

impl ForwardProblem {
    /// Burgers flux, default relaxation parameters, `c_CFL = 0.5`, upwind.
    pub fn burgers(grid: Grid, t_final: f64) -> Self {
        Self {
            grid,
            model: FluxModel::Burgers,
            relax: RelaxConfig::default(),
            t_final,
            step_rule: StepRule::Cfl(0.5),
            scheme: SpatialScheme::Upwind1,
            speed: SpeedRule::PerSolve,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.relax.validate()?;
        if !(self.t_final.is_finite() && self.t_final >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "t_final",
                reason: alloc::format!("must be finite and non-negative, got {}", self.t_final),
            });
        }
        if let SpeedRule::Pinned(a) = self.speed {
            if !(a.is_finite() && a > 0.0) {
                return Err(Error::InvalidParameter { name: "speed", reason: alloc::format!("must be positive, got {a}") });
            }
        }
        match self.step_rule {
            StepRule::Cfl(c) if !(c.is_finite() && c > 0.0) => Err(Error::InvalidParameter {
                name: "c_cfl",
                reason: alloc::format!("must be positive, got {c}"),
            }),
            StepRule::Steps(0) if self.t_final > 0.0 => Err(Error::InvalidParameter {
                name: "steps",
                reason: "need at least one step".into(),
            }),
            _ => Ok(()),
        }
    }

    /// Relaxation speed for a given control, held fixed during the solve.
    pub fn speed_for(&self, u0: &[f64]) -> Result<f64> {
        match self.speed {
            SpeedRule::PerSolve => subchar_speed(&self.model, u0, &self.relax),
            SpeedRule::Pinned(a) => Ok(a),
        }
    }

    /// Pins the speed to the one `u0` would get.
    pub fn pin_speed_to(&mut self, u0: &[f64]) -> Result<f64> {
        let a = subchar_speed(&self.model, u0, &self.relax)?;
        self.speed = SpeedRule::Pinned(a);
        Ok(a)
    }

    /// Step sizes from `0` to `T` for speed `a`.
    pub fn step_sizes(&self, a: f64) -> Vec<f64> {
        let t = self.t_final;
        if t == 0.0 {
            return Vec::new();
        }
        match self.step_rule {
            StepRule::Steps(n) => vec![t / n as f64; n],
            StepRule::Cfl(c) => {
                let h = c * self.grid.dx() / a;
                let n = (libm::ceil(t / h - 1e-9) as usize).max(1);
                let mut steps = vec![h; n];
                steps[n - 1] = t - (n - 1) as f64 * h;
                steps
            }
        }
    }
}

/// Tableau, spatial operator, flux and relaxation rate of one solve.
#[derive(Debug, Clone)]
pub struct ImexScheme {
    pub tableau: ImexTableau,
    pub op: SpatialOp,
    pub model: FluxModel,
    pub epsilon: f64,
}

/// One step of the stage-value form: the new state and the stage values.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub next: RelaxState,
    pub stages: Vec<RelaxState>,
}

#[inline]
fn axpy(y: &mut [f64], alpha: f64, x: &[f64]) {
    for (y, x) in y.iter_mut().zip(x) {
        *y += alpha * x;
    }
}

fn check_finite(u: &[f64], v: &[f64], stage: usize) -> Result<()> {
    if u.iter().chain(v).all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::Divergence { step: 0, stage })
    }
}

impl ImexScheme {
    pub fn new(tableau: ImexTableau, op: SpatialOp, model: FluxModel, epsilon: f64) -> Self {
        Self { tableau, op, model, epsilon }
    }

    fn transport(&self, u: &[f64], v: &[f64]) -> RelaxState {
        let lin = self.op.linearize(u, v);
        let mut d = RelaxState::zeros(u.len());
        self.op.apply_linear(&lin, u, v, &mut d.u, &mut d.v);
        d
    }

    fn check_len(&self, y: &RelaxState) -> Result<()> {
        let n = self.op.n_cells();
        for len in [y.u.len(), y.v.len()] {
            if len != n {
                return Err(Error::SizeMismatch { expected: n, found: len });
            }
        }
        Ok(())
    }

    /// Stage-value form:
    ///
    /// ```text
    /// Y_i     = y_n − h Σ_j ã_ij D(Y_j) + h Σ_j a_ij r(Y_j)/eps
    /// y_{n+1} = y_n − h Σ_i ω̃_i D(Y_i) + h Σ_i ω_i r(Y_i)/eps
    /// ```
    pub fn step(&self, y: &RelaxState, h: f64) -> Result<StepOutput> {
        self.check_len(y)?;
        let tab = &self.tableau;
        let s = tab.stages();
        let eps = self.epsilon;
        let mut stages: Vec<RelaxState> = Vec::with_capacity(s);
        let mut transport: Vec<RelaxState> = Vec::with_capacity(s);
        let mut source: Vec<Vec<f64>> = Vec::with_capacity(s);
        for i in 0..s {
            let mut u = y.u.clone();
            let mut rhs = y.v.clone();
            for j in 0..i {
                let at = tab.a_tilde()[(i, j)];
                if at != 0.0 {
                    axpy(&mut u, -h * at, &transport[j].u);
                    axpy(&mut rhs, -h * at, &transport[j].v);
                }
                let ai = tab.a_impl()[(i, j)];
                if ai != 0.0 {
                    axpy(&mut rhs, h * ai, &source[j]);
                }
            }
            let aii = tab.a_impl()[(i, i)];
            let mut v = rhs.clone();
            let mut k = vec![0.0; u.len()];
            if aii == 0.0 {
                for c in 0..u.len() {
                    k[c] = (self.model.flux(u[c]) - v[c]) / eps;
                }
            } else {
                // V = rhs + h aii (f(U) − V)/eps
                let kappa = h * aii / eps;
                let denom = 1.0 + kappa;
                if denom == 0.0 || !denom.is_finite() {
                    return Err(Error::SingularStage { step: 0, stage: i });
                }
                let frac = kappa / denom;
                for c in 0..u.len() {
                    v[c] = rhs[c] + frac * (self.model.flux(u[c]) - rhs[c]);
                    k[c] = (v[c] - rhs[c]) / (h * aii);
                }
            }
            check_finite(&u, &v, i)?;
            transport.push(self.transport(&u, &v));
            source.push(k);
            stages.push(RelaxState { u, v });
        }
        let mut next = y.clone();
        for i in 0..s {
            let wt = tab.w_tilde()[i];
            if wt != 0.0 {
                axpy(&mut next.u, -h * wt, &transport[i].u);
                axpy(&mut next.v, -h * wt, &transport[i].v);
            }
            let w = tab.w()[i];
            if w != 0.0 {
                axpy(&mut next.v, h * w, &source[i]);
            }
        }
        check_finite(&next.u, &next.v, s)?;
        Ok(StepOutput { next, stages })
    }

    /// Slope form with `K̃_i = −D(Z_i)` and `K_i = r(Z_i)/eps`,
    /// `Z_i = y_n + h Σ_j ã_ij K̃_j + h Σ_j a_ij K_j`.
    pub fn step_kform(&self, y: &RelaxState, h: f64) -> Result<RelaxState> {
        self.check_len(y)?;
        let tab = &self.tableau;
        let s = tab.stages();
        let n = y.len();
        let mut kt: Vec<RelaxState> = Vec::with_capacity(s);
        let mut k: Vec<Vec<f64>> = Vec::with_capacity(s);
        for i in 0..s {
            let mut zu = y.u.clone();
            let mut zv = y.v.clone();
            for j in 0..i {
                let at = tab.a_tilde()[(i, j)];
                if at != 0.0 {
                    axpy(&mut zu, h * at, &kt[j].u);
                    axpy(&mut zv, h * at, &kt[j].v);
                }
                let ai = tab.a_impl()[(i, j)];
                if ai != 0.0 {
                    axpy(&mut zv, h * ai, &k[j]);
                }
            }
            // K_i = (f(Z_u) − base_v − h aii K_i)/eps
            let aii = tab.a_impl()[(i, i)];
            let denom = self.epsilon + h * aii;
            if denom == 0.0 || !denom.is_finite() {
                return Err(Error::SingularStage { step: 0, stage: i });
            }
            let mut ki = vec![0.0; n];
            for c in 0..n {
                ki[c] = (self.model.flux(zu[c]) - zv[c]) / denom;
                zv[c] += h * aii * ki[c];
            }
            check_finite(&zu, &zv, i)?;
            let mut d = self.transport(&zu, &zv);
            d.u.iter_mut().chain(d.v.iter_mut()).for_each(|x| *x = -*x);
            kt.push(d);
            k.push(ki);
        }
        let mut next = y.clone();
        for i in 0..s {
            axpy(&mut next.u, h * tab.w_tilde()[i], &kt[i].u);
            axpy(&mut next.v, h * tab.w_tilde()[i], &kt[i].v);
            axpy(&mut next.v, h * tab.w()[i], &k[i]);
        }
        check_finite(&next.u, &next.v, s)?;
        Ok(next)
    }
}

pub fn imex_step(
    tab: &ImexTableau,
    op: &SpatialOp,
    model: &FluxModel,
    eps: f64,
    y_n: &RelaxState,
    h: f64,
) -> Result<(RelaxState, Vec<RelaxState>)> {
    let scheme = ImexScheme::new(tab.clone(), op.clone(), model.clone(), eps);
    let out = scheme.step(y_n, h)?;
    Ok((out.next, out.stages))
}

pub fn imex_step_kform(
    tab: &ImexTableau,
    op: &SpatialOp,
    model: &FluxModel,
    eps: f64,
    y_n: &RelaxState,
    h: f64,
) -> Result<RelaxState> {
    ImexScheme::new(tab.clone(), op.clone(), model.clone(), eps).step_kform(y_n, h)
}

/// What a forward solve keeps in memory.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Storage {
    /// Initial and terminal states only.
    TerminalOnly,
    /// Every `k`-th step state; stages are recomputed from these on demand.
    Checkpoints(usize),
    /// Every step state and every stage state.
    Full,
}

/// Result of a forward solve.
#[derive(Debug, Clone)]
pub struct Trajectory {
    scheme: ImexScheme,
    times: Vec<f64>,
    step_sizes: Vec<f64>,
    storage: Storage,
    /// `(step index, state)` in increasing step order.
    states: Vec<(usize, RelaxState)>,
    stages: Vec<Vec<RelaxState>>,
    initial: RelaxState,
    terminal: RelaxState,
}

impl Trajectory {
    pub fn scheme(&self) -> &ImexScheme {
        &self.scheme
    }

    pub fn tableau_name(&self) -> &str {
        self.scheme.tableau.name()
    }

    pub fn a(&self) -> f64 {
        self.scheme.op.a()
    }

    pub fn epsilon(&self) -> f64 {
        self.scheme.epsilon
    }

    pub fn grid(&self) -> &Grid {
        self.scheme.op.grid()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn step_sizes(&self) -> &[f64] {
        &self.step_sizes
    }

    /// Nominal step size (the first one).
    pub fn h(&self) -> f64 {
        self.step_sizes.first().copied().unwrap_or(0.0)
    }

    pub fn n_steps(&self) -> usize {
        self.step_sizes.len()
    }

    pub fn storage(&self) -> Storage {
        self.storage
    }

    pub fn initial(&self) -> &RelaxState {
        &self.initial
    }

    pub fn terminal(&self) -> &RelaxState {
        &self.terminal
    }

    /// Stored step states with their step index.
    pub fn stored_states(&self) -> impl Iterator<Item = (usize, &RelaxState)> {
        self.states.iter().map(|(n, s)| (*n, s))
    }

    /// Stage states of step `n` when stored in full.
    pub fn stages(&self, n: usize) -> Option<&[RelaxState]> {
        self.stages.get(n).map(Vec::as_slice)
    }

    /// Calls `visit(n, h_n, y_n, stages_n)` for `n = N−1, …, 0`, recomputing
    /// stages from checkpoints when they were not stored.
    pub fn visit_backward<F>(&self, mut visit: F) -> Result<()>
    where
        F: FnMut(usize, f64, &RelaxState, &[RelaxState]) -> Result<()>,
    {
        let n_steps = self.n_steps();
        match self.storage {
            Storage::TerminalOnly => {
                if n_steps == 0 {
                    Ok(())
                } else {
                    Err(Error::MissingStages)
                }
            }
            Storage::Full => {
                for n in (0..n_steps).rev() {
                    visit(n, self.step_sizes[n], &self.states[n].1, &self.stages[n])?;
                }
                Ok(())
            }
            Storage::Checkpoints(_) => {
                let checkpoints: Vec<usize> =
                    self.states.iter().map(|(n, _)| *n).filter(|&n| n < n_steps).collect();
                for (ci, &start) in checkpoints.iter().enumerate().rev() {
                    let end = checkpoints.get(ci + 1).copied().unwrap_or(n_steps);
                    let mut y = self.states[ci].1.clone();
                    let mut segment = Vec::with_capacity(end - start);
                    for m in start..end {
                        let out = self.scheme.step(&y, self.step_sizes[m]).map_err(|e| e.at_step(m))?;
                        segment.push((y, out.stages));
                        y = out.next;
                    }
                    for (offset, (y, stages)) in segment.iter().enumerate().rev() {
                        let m = start + offset;
                        visit(m, self.step_sizes[m], y, stages)?;
                    }
                }
                Ok(())
            }
        }
    }
}

/// Forward solve with the speed computed from `u0`.
pub fn solve_forward(
    problem: &ForwardProblem,
    tab: &ImexTableau,
    u0: &[f64],
    storage: Storage,
) -> Result<Trajectory> {
    problem.validate()?;
    let a = problem.speed_for(u0)?;
    solve_forward_with_speed(problem, tab, u0, a, storage)
}

/// Forward solve with a prescribed relaxation speed.
pub fn solve_forward_with_speed(
    problem: &ForwardProblem,
    tab: &ImexTableau,
    u0: &[f64],
    a: f64,
    storage: Storage,
) -> Result<Trajectory> {
    problem.validate()?;
    problem.grid.check_len(u0.len())?;
    if let Some(index) = u0.iter().position(|x| !x.is_finite()) {
        return Err(Error::NonFinite { what: "u0", index });
    }
    if let Storage::Checkpoints(0) = storage {
        return Err(Error::InvalidParameter { name: "storage", reason: "checkpoint interval must be positive".into() });
    }
    let op = SpatialOp::new(problem.grid.clone(), a, problem.scheme)?;
    let scheme = ImexScheme::new(tab.clone(), op, problem.model.clone(), problem.relax.epsilon);
    let step_sizes = problem.step_sizes(a);
    let n_steps = step_sizes.len();
    let mut times = Vec::with_capacity(n_steps + 1);
    let mut t = 0.0;
    times.push(t);
    for (n, h) in step_sizes.iter().enumerate() {
        t = if n + 1 == n_steps { problem.t_final } else { t + h };
        times.push(t);
    }

    let initial = relax_init(u0, &problem.model);
    let mut states = Vec::new();
    let mut stages = Vec::new();
    let mut y = initial.clone();
    for (n, &h) in step_sizes.iter().enumerate() {
        let keep = match storage {
            Storage::Full => true,
            Storage::Checkpoints(k) => n % k == 0,
            Storage::TerminalOnly => false,
        };
        let out = scheme.step(&y, h).map_err(|e| e.at_step(n))?;
        if keep {
            states.push((n, y));
        }
        if storage == Storage::Full {
            stages.push(out.stages);
        }
        y = out.next;
    }
    if storage != Storage::TerminalOnly {
        states.push((n_steps, y.clone()));
    }
    Ok(Trajectory { scheme, times, step_sizes, storage, states, stages, initial, terminal: y })
}
