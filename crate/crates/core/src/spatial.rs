//! Discrete transport operator `D_x g(y)` for `g(u, v) = (v, a² u)` and its
//! transpose.
//!
//! The operator works in the characteristic variables `w⁺ = v + a u`
//! (speed `+a`) and `w⁻ = v − a u` (speed `−a`). At interface `i+½` the
//! value of `w⁺` is taken from cell `i` and the value of `w⁻` from cell
//! `i+1`; the interface flux is `(½(W⁺ + W⁻), ½a(W⁺ − W⁻))`. Boundaries are
//! periodic.
//!
//! With `Muscl2` the interface values are reconstructed linearly with a
//! minmod-limited slope. The transpose then refers to the linearization with
//! the limiter choices frozen at a given state.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::model::{Grid, RelaxState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Limiter {
    #[default]
    Minmod,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SpatialScheme {
    /// First-order upwind in characteristic variables.
    #[default]
    Upwind1,
    /// Second-order limited reconstruction.
    Muscl2(Limiter),
}

/// Which one-sided difference the limiter picked in a cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Slope {
    Zero,
    Backward,
    Forward,
}

/// Minmod choice between the backward difference `back` and the forward
/// difference `fwd`. Opposite signs and zeros give the zero slope; equal
/// magnitudes pick the backward difference.
#[inline]
pub fn minmod_choice(back: f64, fwd: f64) -> Slope {
    if back * fwd <= 0.0 {
        Slope::Zero
    } else if back.abs() <= fwd.abs() {
        Slope::Backward
    } else {
        Slope::Forward
    }
}

/// Linearization of the operator around a state.
#[derive(Debug, Clone, PartialEq)]
pub enum Linearization {
    /// The operator is linear already.
    Linear,
    FrozenSlopes { plus: Vec<Slope>, minus: Vec<Slope> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpatialOp {
    grid: Grid,
    a: f64,
    scheme: SpatialScheme,
}

#[inline]
fn prev(i: usize, n: usize) -> usize {
    if i == 0 {
        n - 1
    } else {
        i - 1
    }
}

#[inline]
fn next(i: usize, n: usize) -> usize {
    if i + 1 == n {
        0
    } else {
        i + 1
    }
}

#[inline]
fn slope_value(w: &[f64], i: usize, s: Slope) -> f64 {
    let n = w.len();
    match s {
        Slope::Zero => 0.0,
        Slope::Backward => w[i] - w[prev(i, n)],
        Slope::Forward => w[next(i, n)] - w[i],
    }
}

/// Adds `coef * d slope_i / d w` into `acc`.
#[inline]
fn scatter_slope(acc: &mut [f64], i: usize, s: Slope, coef: f64) {
    let n = acc.len();
    match s {
        Slope::Zero => {}
        Slope::Backward => {
            acc[i] += coef;
            acc[prev(i, n)] -= coef;
        }
        Slope::Forward => {
            acc[next(i, n)] += coef;
            acc[i] -= coef;
        }
    }
}

fn limiter_choices(w: &[f64]) -> Vec<Slope> {
    let n = w.len();
    (0..n)
        .map(|i| minmod_choice(w[i] - w[prev(i, n)], w[next(i, n)] - w[i]))
        .collect()
}

impl SpatialOp {
    pub fn new(grid: Grid, a: f64, scheme: SpatialScheme) -> Result<Self> {
        if !(a.is_finite() && a > 0.0) {
            return Err(Error::InvalidParameter {
                name: "a",
                reason: alloc::format!("speed must be positive and finite, got {a}"),
            });
        }
        Ok(Self { grid, a, scheme })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn scheme(&self) -> SpatialScheme {
        self.scheme
    }

    pub fn n_cells(&self) -> usize {
        self.grid.n_cells()
    }

    /// Linearization of `D_x g` at `state` (limiter choices frozen).
    pub fn linearize(&self, u: &[f64], v: &[f64]) -> Linearization {
        match self.scheme {
            SpatialScheme::Upwind1 => Linearization::Linear,
            SpatialScheme::Muscl2(Limiter::Minmod) => {
                let a = self.a;
                let wp: Vec<f64> = u.iter().zip(v).map(|(u, v)| v + a * u).collect();
                let wm: Vec<f64> = u.iter().zip(v).map(|(u, v)| v - a * u).collect();
                Linearization::FrozenSlopes { plus: limiter_choices(&wp), minus: limiter_choices(&wm) }
            }
        }
    }

    /// `D_x g(y)` evaluated through a linearization; for the state the
    /// linearization was taken at this equals the nonlinear operator.
    pub fn apply_linear(&self, lin: &Linearization, u: &[f64], v: &[f64], du: &mut [f64], dv: &mut [f64]) {
        let n = u.len();
        let a = self.a;
        let inv_dx = 1.0 / self.grid.dx();
        let wp: Vec<f64> = u.iter().zip(v).map(|(u, v)| v + a * u).collect();
        let wm: Vec<f64> = u.iter().zip(v).map(|(u, v)| v - a * u).collect();
        // face i sits at x_{i+1/2}
        let mut fu = vec![0.0; n];
        let mut fv = vec![0.0; n];
        for i in 0..n {
            let ip = next(i, n);
            let (mut wl, mut wr) = (wp[i], wm[ip]);
            if let Linearization::FrozenSlopes { plus, minus } = lin {
                wl += 0.5 * slope_value(&wp, i, plus[i]);
                wr -= 0.5 * slope_value(&wm, ip, minus[ip]);
            }
            fu[i] = 0.5 * (wl + wr);
            fv[i] = 0.5 * a * (wl - wr);
        }
        for i in 0..n {
            let im = prev(i, n);
            du[i] = (fu[i] - fu[im]) * inv_dx;
            dv[i] = (fv[i] - fv[im]) * inv_dx;
        }
    }

    /// Transpose of [`apply_linear`](Self::apply_linear) for the same linearization.
    pub fn apply_linear_transpose(
        &self,
        lin: &Linearization,
        p: &[f64],
        q: &[f64],
        dp: &mut [f64],
        dq: &mut [f64],
    ) {
        let n = p.len();
        let a = self.a;
        let inv_dx = 1.0 / self.grid.dx();
        let mut gp = vec![0.0; n];
        let mut gm = vec![0.0; n];
        for i in 0..n {
            let ip = next(i, n);
            let lu = (p[i] - p[ip]) * inv_dx;
            let lv = (q[i] - q[ip]) * inv_dx;
            let mu_l = 0.5 * lu + 0.5 * a * lv;
            let mu_r = 0.5 * lu - 0.5 * a * lv;
            gp[i] += mu_l;
            gm[ip] += mu_r;
            if let Linearization::FrozenSlopes { plus, minus } = lin {
                scatter_slope(&mut gp, i, plus[i], 0.5 * mu_l);
                scatter_slope(&mut gm, ip, minus[ip], -0.5 * mu_r);
            }
        }
        for i in 0..n {
            dp[i] = a * (gp[i] - gm[i]);
            dq[i] = gp[i] + gm[i];
        }
    }

    /// `D_x g(y)` per cell.
    pub fn apply_dx(&self, state: &RelaxState) -> Result<RelaxState> {
        self.grid.check_len(state.u.len())?;
        self.grid.check_len(state.v.len())?;
        let lin = self.linearize(&state.u, &state.v);
        let mut out = RelaxState::zeros(state.len());
        self.apply_linear(&lin, &state.u, &state.v, &mut out.u, &mut out.v);
        Ok(out)
    }

    /// Exact transpose of [`apply_dx`](Self::apply_dx). Only defined for the
    /// linear scheme; use [`apply_dx_transpose_at`](Self::apply_dx_transpose_at)
    /// for MUSCL.
    pub fn apply_dx_transpose(&self, costate: &RelaxState) -> Result<RelaxState> {
        if self.scheme != SpatialScheme::Upwind1 {
            return Err(Error::InvalidParameter {
                name: "scheme",
                reason: "limited schemes need a linearization state".into(),
            });
        }
        self.transpose_with(&Linearization::Linear, costate)
    }

    /// Transpose of the linearization of `D_x g` at `state`.
    pub fn apply_dx_transpose_at(&self, state: &RelaxState, costate: &RelaxState) -> Result<RelaxState> {
        self.grid.check_len(state.len())?;
        let lin = self.linearize(&state.u, &state.v);
        self.transpose_with(&lin, costate)
    }

    fn transpose_with(&self, lin: &Linearization, costate: &RelaxState) -> Result<RelaxState> {
        self.grid.check_len(costate.u.len())?;
        self.grid.check_len(costate.v.len())?;
        let mut out = RelaxState::zeros(costate.len());
        self.apply_linear_transpose(lin, &costate.u, &costate.v, &mut out.u, &mut out.v);
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::make_grid;
    use core::f64::consts::PI;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn op(n: usize, a: f64, scheme: SpatialScheme) -> SpatialOp {
        SpatialOp::new(make_grid(0.0, 2.0 * PI, n).unwrap(), a, scheme).unwrap()
    }

    fn random_state(rng: &mut ChaCha8Rng, n: usize) -> RelaxState {
        RelaxState {
            u: (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
            v: (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
        }
    }

    fn dot(a: &RelaxState, b: &RelaxState) -> f64 {
        a.u.iter().zip(&b.u).chain(a.v.iter().zip(&b.v)).map(|(x, y)| x * y).sum()
    }

    fn norm(a: &RelaxState) -> f64 {
        dot(a, a).sqrt()
    }

    const SCHEMES: [SpatialScheme; 2] = [SpatialScheme::Upwind1, SpatialScheme::Muscl2(Limiter::Minmod)];

    #[test]
    fn constants_are_annihilated() {
        for scheme in SCHEMES {
            let o = op(16, 1.3, scheme);
            let s = RelaxState { u: vec![0.7; 16], v: vec![-0.2; 16] };
            let d = o.apply_dx(&s).unwrap();
            assert!(d.u.iter().chain(&d.v).all(|&x| x == 0.0));
            let t = o.apply_dx_transpose_at(&s, &s).unwrap();
            assert!(t.u.iter().chain(&t.v).all(|x| x.abs() < 1e-13));
        }
    }

    #[test]
    fn upwind_golden_four_cells() {
        let o = SpatialOp::new(make_grid(0.0, 4.0, 4).unwrap(), 1.0, SpatialScheme::Upwind1).unwrap();
        let s = RelaxState { u: vec![0.0, 1.0, 0.0, 0.0], v: vec![0.0; 4] };
        let d = o.apply_dx(&s).unwrap();
        // w⁺ = u, w⁻ = −u; faces: Fu = {−½, ½, 0, 0}, Fv = {½, ½, 0, 0}
        assert_eq!(d.u, vec![-0.5, 1.0, -0.5, 0.0]);
        assert_eq!(d.v, vec![0.5, 0.0, -0.5, 0.0]);
    }

    #[test]
    fn transpose_matches_assembled_matrix() {
        for scheme in SCHEMES {
            let o = SpatialOp::new(make_grid(0.0, 4.0, 4).unwrap(), 1.0, scheme).unwrap();
            let base = RelaxState { u: vec![0.1, 0.9, 0.4, -0.3], v: vec![0.2, -0.5, 0.0, 0.3] };
            let lin = o.linearize(&base.u, &base.v);
            let n = 4;
            // column k of the 8x8 matrix is the operator applied to unit vector k
            let mut m = [[0.0; 8]; 8];
            for k in 0..2 * n {
                let mut e = RelaxState::zeros(n);
                if k < n { e.u[k] = 1.0 } else { e.v[k - n] = 1.0 }
                let mut out = RelaxState::zeros(n);
                o.apply_linear(&lin, &e.u, &e.v, &mut out.u, &mut out.v);
                for r in 0..2 * n {
                    m[r][k] = if r < n { out.u[r] } else { out.v[r - n] };
                }
            }
            for k in 0..2 * n {
                let mut e = RelaxState::zeros(n);
                if k < n { e.u[k] = 1.0 } else { e.v[k - n] = 1.0 }
                let mut out = RelaxState::zeros(n);
                o.apply_linear_transpose(&lin, &e.u, &e.v, &mut out.u, &mut out.v);
                for r in 0..2 * n {
                    let got = if r < n { out.u[r] } else { out.v[r - n] };
                    assert!((got - m[k][r]).abs() < 1e-15, "{scheme:?} ({r},{k})");
                }
            }
        }
    }

    #[test]
    fn dot_product_test() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for scheme in SCHEMES {
            for n in [4, 16, 64] {
                let o = op(n, 1.7, scheme);
                for _ in 0..20 {
                    let base = random_state(&mut rng, n);
                    let z = random_state(&mut rng, n);
                    let w = random_state(&mut rng, n);
                    let lin = o.linearize(&base.u, &base.v);
                    let mut dz = RelaxState::zeros(n);
                    o.apply_linear(&lin, &z.u, &z.v, &mut dz.u, &mut dz.v);
                    let mut tw = RelaxState::zeros(n);
                    o.apply_linear_transpose(&lin, &w.u, &w.v, &mut tw.u, &mut tw.v);
                    let gap = (dot(&dz, &w) - dot(&z, &tw)).abs();
                    assert!(gap <= 1e-12 * norm(&z) * norm(&w), "{scheme:?} n={n}: {gap}");
                }
            }
        }
    }

    #[test]
    fn upwind_is_conservative() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in [4, 16, 64, 256] {
            let o = op(n, 0.8, SpatialScheme::Upwind1);
            let d = o.apply_dx(&random_state(&mut rng, n)).unwrap();
            assert!(d.u.iter().sum::<f64>().abs() <= 1e-13 * n as f64);
            assert!(d.v.iter().sum::<f64>().abs() <= 1e-13 * n as f64);
        }
    }

    #[test]
    fn single_right_moving_mode() {
        let a = 1.0;
        let o = op(512, a, SpatialScheme::Upwind1);
        let x = o.grid().centers().to_vec();
        let s = RelaxState {
            u: x.iter().map(|x| x.sin()).collect(),
            v: x.iter().map(|x| a * x.sin()).collect(),
        };
        let d = o.apply_dx(&s).unwrap();
        let err = x.iter().zip(&d.u).map(|(x, du)| (du - a * x.cos()).abs()).fold(0.0, f64::max);
        assert!(err < 0.05, "{err}");
    }

    fn derivative_error(n: usize, scheme: SpatialScheme) -> f64 {
        let a = 1.5;
        let o = op(n, a, scheme);
        let dx = o.grid().dx();
        // mixed mode with both characteristic families present
        let s = RelaxState {
            u: o.grid().sample(|x| x.sin() + 0.3 * (2.0 * x).cos()),
            v: o.grid().sample(|x| 0.5 * x.cos()),
        };
        let d = o.apply_dx(&s).unwrap();
        let x = o.grid().centers();
        // L1 error of the u-component, exact (v)_x = −½ sin x
        x.iter().zip(&d.u).map(|(x, du)| (du + 0.5 * x.sin()).abs() * dx).sum()
    }

    #[test]
    fn convergence_rates() {
        for (scheme, rate) in [(SpatialScheme::Upwind1, 2.0), (SpatialScheme::Muscl2(Limiter::Minmod), 4.0)] {
            for n in [64, 128, 256] {
                let ratio = derivative_error(n, scheme) / derivative_error(2 * n, scheme);
                assert!((ratio - rate).abs() <= 0.2 * rate, "{scheme:?} n={n}: {ratio}");
            }
        }
    }

    #[test]
    fn size_mismatch_is_rejected() {
        let o = op(8, 1.0, SpatialScheme::Upwind1);
        let s = RelaxState::zeros(7);
        assert_eq!(o.apply_dx(&s), Err(Error::SizeMismatch { expected: 8, found: 7 }));
        assert!(o.apply_dx_transpose(&s).is_err());
        let m = op(8, 1.0, SpatialScheme::Muscl2(Limiter::Minmod));
        assert!(m.apply_dx_transpose(&RelaxState::zeros(8)).is_err());
    }

    #[test]
    fn minmod_ties() {
        assert_eq!(minmod_choice(0.0, 1.0), Slope::Zero);
        assert_eq!(minmod_choice(-1.0, 1.0), Slope::Zero);
        assert_eq!(minmod_choice(1.0, 1.0), Slope::Backward);
        assert_eq!(minmod_choice(2.0, 1.0), Slope::Forward);
    }
}
