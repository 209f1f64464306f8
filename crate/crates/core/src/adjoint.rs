//! Discrete adjoint of the IMEX forward scheme.
//!
//! Write one forward step as `y_{n+1} = Φ(y_n)` with explicit part
//! `F(y) = −D_x g(y)` and implicit part `G(y) = r(y)/eps`. With
//! `F_i = F'(Y_i)` and `G_i = G'(Y_i)` at the stored stages, the costate
//! recursion `p_n = Φ'(y_n)ᵀ p_{n+1}` can be organised in three equivalent
//! ways:
//!
//! * ζ-form (transpose of the stage-value form):
//!   `ζ_i = h(ω̃_i F_iᵀ + ω_i G_iᵀ) p_{n+1} + h Σ_j (ã_ji F_iᵀ + a_ji G_iᵀ) ζ_j`,
//!   `p_n = p_{n+1} + Σ_i ζ_i`.
//! * ξ-form (transpose of the slope form): multipliers `ξ̃_i`, `ξ_i` of the
//!   two slope equations; valid for any weights.
//! * ARK form: the ξ-form rescaled by `P̃_i = ξ̃_i/(h ω̃_i)`,
//!   `P_i = ξ_i/(h ω_i)`, which uses the coefficients `α̃, α, β̃, β` and
//!   needs every weight to be nonzero.
//!
//! With `g'(y)ᵀ = [[0, a²], [1, 0]]` folded into the transpose of the
//! characteristic operator, `F_iᵀ = −D'(Y_i)ᵀ` and
//! `G_iᵀ (p, q) = (f'(U_i) q, −q) / eps`.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::forward::{ImexScheme, Trajectory};
use crate::model::{FluxModel, RelaxState};
use crate::spatial::Linearization;
use crate::tableau::{adjoint_coeffs, AdjointCoeffs};

/// Costates `(p, q)` dual to `(u, v)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostateState {
    pub p: Vec<f64>,
    pub q: Vec<f64>,
}

impl CostateState {
    pub fn zeros(n: usize) -> Self {
        Self { p: vec![0.0; n], q: vec![0.0; n] }
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        crate::model::max_abs_diff(&self.p, &other.p).max(crate::model::max_abs_diff(&self.q, &other.q))
    }

    pub fn max_abs(&self) -> f64 {
        self.p.iter().chain(&self.q).fold(0.0, |m, x| m.max(x.abs()))
    }

    fn axpy(&mut self, alpha: f64, x: &CostateState) {
        for (y, x) in self.p.iter_mut().zip(&x.p) {
            *y += alpha * x;
        }
        for (y, x) in self.q.iter_mut().zip(&x.q) {
            *y += alpha * x;
        }
    }

    fn scaled(&self, alpha: f64) -> Self {
        Self { p: self.p.iter().map(|x| alpha * x).collect(), q: self.q.iter().map(|x| alpha * x).collect() }
    }
}

impl From<RelaxState> for CostateState {
    fn from(s: RelaxState) -> Self {
        Self { p: s.u, q: s.v }
    }
}

/// Organisation of the backward sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AdjointForm {
    #[default]
    Ark,
    Xi,
    Zeta,
}

/// Stage costates of one backward step, in the variables of its form.
#[derive(Debug, Clone, PartialEq)]
pub enum StageCostates {
    Ark { p_tilde: Vec<CostateState>, p: Vec<CostateState> },
    Xi { xi_tilde: Vec<CostateState>, xi: Vec<CostateState> },
    Zeta { zeta: Vec<CostateState> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdjointStep {
    pub p_n: CostateState,
    pub stages: StageCostates,
}

/// Per-stage linearization data of one forward step.
struct StageJacobians {
    lins: Vec<Linearization>,
    fprime: Vec<Vec<f64>>,
}

impl StageJacobians {
    fn new(scheme: &ImexScheme, stages: &[RelaxState]) -> Result<Self> {
        let s = scheme.tableau.stages();
        if stages.len() != s {
            return Err(Error::InvalidParameter {
                name: "stages",
                reason: alloc::format!("expected {s} stage states, got {}", stages.len()),
            });
        }
        let n = scheme.op.n_cells();
        for y in stages {
            if y.u.len() != n || y.v.len() != n {
                return Err(Error::SizeMismatch { expected: n, found: y.u.len().min(y.v.len()) });
            }
        }
        Ok(Self {
            lins: stages.iter().map(|y| scheme.op.linearize(&y.u, &y.v)).collect(),
            fprime: stages.iter().map(|y| y.u.iter().map(|&u| scheme.model.flux_deriv(u)).collect()).collect(),
        })
    }

    /// `F_iᵀ x = −D'(Y_i)ᵀ x`
    fn explicit_t(&self, scheme: &ImexScheme, i: usize, x: &CostateState) -> CostateState {
        let mut out = CostateState::zeros(x.len());
        scheme.op.apply_linear_transpose(&self.lins[i], &x.p, &x.q, &mut out.p, &mut out.q);
        out.p.iter_mut().chain(out.q.iter_mut()).for_each(|v| *v = -*v);
        out
    }

    /// `G_iᵀ x` given `x_q / eps` directly.
    fn implicit_t_scaled(&self, i: usize, q_over_eps: &[f64]) -> CostateState {
        CostateState {
            p: self.fprime[i].iter().zip(q_over_eps).map(|(f, q)| f * q).collect(),
            q: q_over_eps.iter().map(|q| -q).collect(),
        }
    }

    fn implicit_t(&self, i: usize, x: &CostateState, eps: f64) -> CostateState {
        let scaled: Vec<f64> = x.q.iter().map(|q| q / eps).collect();
        self.implicit_t_scaled(i, &scaled)
    }

    /// Solves `z − h aii G_iᵀ z = rhs`; returns `z` and `G_iᵀ z`.
    fn solve_implicit(
        &self,
        i: usize,
        rhs: CostateState,
        h: f64,
        aii: f64,
        eps: f64,
    ) -> Result<(CostateState, CostateState)> {
        let denom = eps + h * aii;
        if denom == 0.0 || !denom.is_finite() {
            return Err(Error::SingularStage { step: 0, stage: i });
        }
        let kappa = h * aii / eps;
        let q_over_eps: Vec<f64> = rhs.q.iter().map(|q| q / denom).collect();
        let q: Vec<f64> = rhs.q.iter().map(|q| q * (eps / denom)).collect();
        let p: Vec<f64> = rhs
            .p
            .iter()
            .zip(&self.fprime[i])
            .zip(&q)
            .map(|((p, f), q)| p + kappa * f * q)
            .collect();
        let gz = self.implicit_t_scaled(i, &q_over_eps);
        Ok((CostateState { p, q }, gz))
    }
}

fn check_finite(x: &CostateState, stage: usize) -> Result<()> {
    if x.p.iter().chain(&x.q).all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Divergence { step: 0, stage })
    }
}

/// Backward step in the ζ-form.
pub fn adjoint_step_zeta(
    scheme: &ImexScheme,
    stages: &[RelaxState],
    p_next: &CostateState,
    h: f64,
) -> Result<AdjointStep> {
    let jac = StageJacobians::new(scheme, stages)?;
    let tab = &scheme.tableau;
    let (at, a) = (tab.a_tilde(), tab.a_impl());
    let s = tab.stages();
    let eps = scheme.epsilon;
    let n = p_next.len();
    let mut zeta = vec![CostateState::zeros(n); s];
    for i in (0..s).rev() {
        let mut acc_f = p_next.scaled(tab.w_tilde()[i]);
        let mut acc_g = p_next.scaled(tab.w()[i]);
        for j in i + 1..s {
            if at[(j, i)] != 0.0 {
                acc_f.axpy(at[(j, i)], &zeta[j]);
            }
            if a[(j, i)] != 0.0 {
                acc_g.axpy(a[(j, i)], &zeta[j]);
            }
        }
        let mut rhs = jac.explicit_t(scheme, i, &acc_f).scaled(h);
        rhs.axpy(h, &jac.implicit_t(i, &acc_g, eps));
        let (z, _) = jac.solve_implicit(i, rhs, h, a[(i, i)], eps)?;
        check_finite(&z, i)?;
        zeta[i] = z;
    }
    let mut p_n = p_next.clone();
    for z in &zeta {
        p_n.axpy(1.0, z);
    }
    Ok(AdjointStep { p_n, stages: StageCostates::Zeta { zeta } })
}

/// Backward step in the ξ-form (no restriction on the weights).
pub fn adjoint_step_xi(
    scheme: &ImexScheme,
    stages: &[RelaxState],
    p_next: &CostateState,
    h: f64,
) -> Result<AdjointStep> {
    let jac = StageJacobians::new(scheme, stages)?;
    let tab = &scheme.tableau;
    let (at, a) = (tab.a_tilde(), tab.a_impl());
    let s = tab.stages();
    let eps = scheme.epsilon;
    let n = p_next.len();
    let mut xi_tilde = vec![CostateState::zeros(n); s];
    let mut xi = vec![CostateState::zeros(n); s];
    // θ_i = F_iᵀ ξ̃_i + G_iᵀ ξ_i
    let mut theta = vec![CostateState::zeros(n); s];
    for i in (0..s).rev() {
        let mut xt = p_next.scaled(tab.w_tilde()[i]);
        let mut base = p_next.scaled(tab.w()[i]);
        for j in i + 1..s {
            if at[(j, i)] != 0.0 {
                xt.axpy(at[(j, i)], &theta[j]);
            }
            if a[(j, i)] != 0.0 {
                base.axpy(a[(j, i)], &theta[j]);
            }
        }
        let xt = xt.scaled(h);
        let ft = jac.explicit_t(scheme, i, &xt);
        let mut base = base.scaled(h);
        base.axpy(h * a[(i, i)], &ft);
        let (x, gx) = jac.solve_implicit(i, base, h, a[(i, i)], eps)?;
        check_finite(&x, i)?;
        let mut th = ft;
        th.axpy(1.0, &gx);
        theta[i] = th;
        xi_tilde[i] = xt;
        xi[i] = x;
    }
    let mut p_n = p_next.clone();
    for th in &theta {
        p_n.axpy(1.0, th);
    }
    Ok(AdjointStep { p_n, stages: StageCostates::Xi { xi_tilde, xi } })
}

/// Backward step in the ARK form, driven by the adjoint coefficients.
pub fn adjoint_step_ark(
    coeffs: &AdjointCoeffs,
    scheme: &ImexScheme,
    stages: &[RelaxState],
    p_next: &CostateState,
    h: f64,
) -> Result<AdjointStep> {
    let jac = StageJacobians::new(scheme, stages)?;
    let tab = &scheme.tableau;
    let s = tab.stages();
    let eps = scheme.epsilon;
    let n = p_next.len();
    let (wt, w) = (tab.w_tilde(), tab.w());
    // ω_j − α_ij etc. are the couplings seen from p_{n+1}
    let ct = |i: usize, j: usize| wt[j] - coeffs.alpha_tilde[(i, j)];
    let c = |i: usize, j: usize| w[j] - coeffs.alpha[(i, j)];
    let dt = |i: usize, j: usize| wt[j] - coeffs.beta_tilde[(i, j)];
    let d = |i: usize, j: usize| w[j] - coeffs.beta[(i, j)];

    let mut p_tilde = vec![CostateState::zeros(n); s];
    let mut p_stage = vec![CostateState::zeros(n); s];
    let mut ft = vec![CostateState::zeros(n); s];
    let mut gt = vec![CostateState::zeros(n); s];
    for i in (0..s).rev() {
        let mut pt = p_next.clone();
        for j in i + 1..s {
            pt.axpy(h * ct(i, j), &ft[j]);
            pt.axpy(h * c(i, j), &gt[j]);
        }
        check_finite(&pt, i)?;
        ft[i] = jac.explicit_t(scheme, i, &pt);
        let mut rhs = p_next.clone();
        for j in i..s {
            rhs.axpy(h * dt(i, j), &ft[j]);
        }
        for j in i + 1..s {
            rhs.axpy(h * d(i, j), &gt[j]);
        }
        let (pi, gpi) = jac.solve_implicit(i, rhs, h, d(i, i), eps)?;
        check_finite(&pi, i)?;
        gt[i] = gpi;
        p_tilde[i] = pt;
        p_stage[i] = pi;
    }
    let mut p_n = p_next.clone();
    for i in 0..s {
        p_n.axpy(h * wt[i], &ft[i]);
        p_n.axpy(h * w[i], &gt[i]);
    }
    Ok(AdjointStep { p_n, stages: StageCostates::Ark { p_tilde, p: p_stage } })
}

/// Gradient of `J = dx/2 Σ (u_i − u_d,i)²` with respect to the terminal
/// state; the `v` costate starts at zero.
pub fn terminal_costate(u_t: &[f64], u_d: &[f64], dx: f64) -> Result<CostateState> {
    if u_t.len() != u_d.len() {
        return Err(Error::SizeMismatch { expected: u_t.len(), found: u_d.len() });
    }
    Ok(CostateState {
        p: u_t.iter().zip(u_d).map(|(u, d)| dx * (u - d)).collect(),
        q: vec![0.0; u_t.len()],
    })
}

/// Outcome of a full backward sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjointSweepRecord {
    pub form_used: AdjointForm,
    /// `p_0 … p_N` when history was requested, otherwise `[p_0]`.
    pub costates: Vec<CostateState>,
    /// Stage costates of steps `0 … N−1` when history was requested.
    pub stage_costates: Vec<StageCostates>,
}

impl AdjointSweepRecord {
    pub fn initial(&self) -> &CostateState {
        &self.costates[0]
    }
}

/// Backward sweep from the tracking-functional terminal condition.
/// [`AdjointForm::Ark`] falls back to the ξ-form for tableaus with a zero
/// weight; `form_used` records what ran.
pub fn solve_adjoint(traj: &Trajectory, u_d: &[f64], form: AdjointForm) -> Result<AdjointSweepRecord> {
    solve_adjoint_with(traj, u_d, form, false)
}

pub fn solve_adjoint_with(
    traj: &Trajectory,
    u_d: &[f64],
    form: AdjointForm,
    keep_history: bool,
) -> Result<AdjointSweepRecord> {
    let p_t = terminal_costate(&traj.terminal().u, u_d, traj.grid().dx())?;
    sweep_from(traj, p_t, form, keep_history)
}

/// Backward sweep from an arbitrary terminal costate.
pub fn sweep_from(
    traj: &Trajectory,
    p_t: CostateState,
    form: AdjointForm,
    keep_history: bool,
) -> Result<AdjointSweepRecord> {
    let scheme = traj.scheme();
    if p_t.p.len() != scheme.op.n_cells() || p_t.q.len() != scheme.op.n_cells() {
        return Err(Error::SizeMismatch { expected: scheme.op.n_cells(), found: p_t.p.len() });
    }
    let (form_used, coeffs) = match form {
        AdjointForm::Ark => match adjoint_coeffs(&scheme.tableau) {
            Ok(k) => (AdjointForm::Ark, Some(k)),
            Err(Error::ZeroWeight { .. }) => (AdjointForm::Xi, None),
            Err(e) => return Err(e),
        },
        other => (other, None),
    };
    let mut history = Vec::new();
    let mut stage_history = Vec::new();
    let mut p = p_t;
    traj.visit_backward(|n, h, _y, stages| {
        let step = match (form_used, &coeffs) {
            (AdjointForm::Ark, Some(k)) => adjoint_step_ark(k, scheme, stages, &p, h),
            (AdjointForm::Zeta, _) => adjoint_step_zeta(scheme, stages, &p, h),
            _ => adjoint_step_xi(scheme, stages, &p, h),
        }
        .map_err(|e| e.at_step(n))?;
        if keep_history {
            history.push(core::mem::replace(&mut p, step.p_n));
            stage_history.push(step.stages);
        } else {
            p = step.p_n;
        }
        Ok(())
    })?;
    history.push(p);
    history.reverse();
    stage_history.reverse();
    Ok(AdjointSweepRecord { form_used, costates: history, stage_costates: stage_history })
}

/// Reduced gradient `∇J_i = p_{0,i} + f'(u_{0,i}) q_{0,i}`, from `v_0 = f(u_0)`.
pub fn assemble_gradient(record: &AdjointSweepRecord, u0: &[f64], model: &FluxModel) -> Vec<f64> {
    let p0 = record.initial();
    u0.iter()
        .zip(&p0.p)
        .zip(&p0.q)
        .map(|((&u, p), q)| p + model.flux_deriv(u) * q)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::{solve_forward, ForwardProblem, Storage};
    use crate::model::make_grid;
    use crate::spatial::SpatialOp;
    use crate::tableau::builtin_tableau;
    use core::f64::consts::PI;

    #[test]
    fn terminal_costate_examples() {
        let z = terminal_costate(&[0.3, 0.1], &[0.3, 0.1], 0.5).unwrap();
        assert_eq!(z, CostateState::zeros(2));
        let t = terminal_costate(&[1.5; 4], &[0.5; 4], 0.1).unwrap();
        assert!(t.p.iter().all(|&p| (p - 0.1).abs() < 1e-16));
        assert!(t.q.iter().all(|&q| q == 0.0));
    }

    #[test]
    fn gradient_assembly() {
        let rec = AdjointSweepRecord {
            form_used: AdjointForm::Ark,
            costates: vec![CostateState { p: vec![1.0, 2.0], q: vec![0.0, 0.0] }],
            stage_costates: Vec::new(),
        };
        assert_eq!(assemble_gradient(&rec, &[0.4, -3.0], &FluxModel::Burgers), vec![1.0, 2.0]);
        let rec = AdjointSweepRecord {
            costates: vec![CostateState { p: vec![1.0, 2.0], q: vec![0.5, -1.0] }],
            ..rec
        };
        let g = assemble_gradient(&rec, &[0.4, -3.0], &FluxModel::Linear { speed: 3.0 });
        assert_eq!(g, vec![2.5, -1.0]);
    }

    fn sweep(name: &str, form: AdjointForm, p_t: CostateState) -> AdjointSweepRecord {
        let grid = make_grid(0.0, 2.0 * PI, 20).unwrap();
        let p = ForwardProblem::burgers(grid, 0.4);
        let u0 = p.grid.sample(|x| 0.5 + x.sin());
        let traj = solve_forward(&p, &builtin_tableau(name).unwrap(), &u0, Storage::Full).unwrap();
        sweep_from(&traj, p_t, form, true).unwrap()
    }

    #[test]
    fn zero_terminal_costate_gives_zero_sweep() {
        for form in [AdjointForm::Ark, AdjointForm::Xi, AdjointForm::Zeta] {
            let rec = sweep("ssp2-222", form, CostateState::zeros(20));
            assert!(rec.costates.iter().all(|c| c.max_abs() == 0.0));
        }
    }

    #[test]
    fn ark_falls_back_on_zero_weights() {
        let rec = sweep("ars-222", AdjointForm::Ark, CostateState::zeros(20));
        assert_eq!(rec.form_used, AdjointForm::Xi);
        let rec = sweep("ssp2-222", AdjointForm::Ark, CostateState::zeros(20));
        assert_eq!(rec.form_used, AdjointForm::Ark);
    }

    #[test]
    fn stage_count_is_checked() {
        let grid = make_grid(0.0, 1.0, 4).unwrap();
        let scheme = ImexScheme::new(
            builtin_tableau("ars-222").unwrap(),
            SpatialOp::new(grid, 1.0, Default::default()).unwrap(),
            FluxModel::Burgers,
            1e-3,
        );
        let err = adjoint_step_xi(&scheme, &[RelaxState::zeros(4)], &CostateState::zeros(4), 0.1);
        assert!(matches!(err, Err(Error::InvalidParameter { name: "stages", .. })));
    }
}
