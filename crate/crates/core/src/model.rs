//! Grid, flux models and the relaxation state.

use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};

/// Uniform periodic 1-D mesh. Cell `n_cells - 1` neighbours cell `0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    x_min: f64,
    x_max: f64,
    n_cells: usize,
    dx: f64,
    centers: Vec<f64>,
}

impl Grid {
    pub fn new(x_min: f64, x_max: f64, n_cells: usize) -> Result<Self> {
        if !(x_min.is_finite() && x_max.is_finite()) {
            return Err(Error::InvalidGrid("interval bounds must be finite".to_string()));
        }
        if x_max <= x_min {
            return Err(Error::InvalidGrid(alloc::format!(
                "degenerate interval [{x_min}, {x_max}]"
            )));
        }
        if n_cells < 2 {
            return Err(Error::InvalidGrid(alloc::format!(
                "need at least 2 cells, got {n_cells}"
            )));
        }
        let dx = (x_max - x_min) / n_cells as f64;
        let centers = (0..n_cells).map(|i| x_min + (i as f64 + 0.5) * dx).collect();
        Ok(Self { x_min, x_max, n_cells, dx, centers })
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    /// Samples `profile` at the cell centers.
    pub fn sample(&self, profile: impl Fn(f64) -> f64) -> Vec<f64> {
        self.centers.iter().map(|&x| profile(x)).collect()
    }

    pub(crate) fn check_len(&self, len: usize) -> Result<()> {
        if len == self.n_cells {
            Ok(())
        } else {
            Err(Error::SizeMismatch { expected: self.n_cells, found: len })
        }
    }
}

pub fn make_grid(x_min: f64, x_max: f64, n_cells: usize) -> Result<Grid> {
    Grid::new(x_min, x_max, n_cells)
}

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A user supplied flux `f` together with its derivative `f'`.
#[derive(Clone)]
pub struct CustomFlux {
    name: String,
    flux: ScalarFn,
    deriv: ScalarFn,
}

impl CustomFlux {
    pub fn new(
        name: impl Into<String>,
        flux: impl Fn(f64) -> f64 + Send + Sync + 'static,
        deriv: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self { name: name.into(), flux: Arc::new(flux), deriv: Arc::new(deriv) }
    }
}

impl fmt::Debug for CustomFlux {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomFlux").field("name", &self.name).finish_non_exhaustive()
    }
}

/// Scalar flux function of the conservation law `u_t + f(u)_x = 0`.
#[derive(Debug, Clone)]
pub enum FluxModel {
    /// `f(u) = u^2 / 2`
    Burgers,
    /// `f(u) = speed * u`
    Linear { speed: f64 },
    Custom(CustomFlux),
}

impl FluxModel {
    #[inline]
    pub fn flux(&self, u: f64) -> f64 {
        match self {
            FluxModel::Burgers => 0.5 * u * u,
            FluxModel::Linear { speed } => speed * u,
            FluxModel::Custom(c) => (c.flux)(u),
        }
    }

    #[inline]
    pub fn flux_deriv(&self, u: f64) -> f64 {
        match self {
            FluxModel::Burgers => u,
            FluxModel::Linear { speed } => *speed,
            FluxModel::Custom(c) => (c.deriv)(u),
        }
    }

    pub fn name(&self) -> &str {
        match self {
            FluxModel::Burgers => "burgers",
            FluxModel::Linear { .. } => "linear",
            FluxModel::Custom(c) => &c.name,
        }
    }
}

pub fn burgers_model() -> FluxModel {
    FluxModel::Burgers
}

/// Cell fields `(u, v)` of the relaxation system.
#[derive(Debug, Clone, PartialEq)]
pub struct RelaxState {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

impl RelaxState {
    pub fn new(u: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        if u.len() != v.len() {
            return Err(Error::SizeMismatch { expected: u.len(), found: v.len() });
        }
        Ok(Self { u, v })
    }

    pub fn zeros(n: usize) -> Self {
        Self { u: alloc::vec![0.0; n], v: alloc::vec![0.0; n] }
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.u.iter().chain(&self.v).all(|x| x.is_finite())
    }

    /// Largest absolute componentwise difference over both fields.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        max_abs_diff(&self.u, &other.u).max(max_abs_diff(&self.v, &other.v))
    }
}

pub(crate) fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// Relaxation parameters. The speed `a` itself is computed per solve by
/// [`subchar_speed`] and then held fixed in time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelaxConfig {
    /// Relaxation rate `eps > 0`.
    pub epsilon: f64,
    /// Multiplier applied to `max |f'(u)|`, at least 1.
    pub safety: f64,
    /// Lower bound on the speed.
    pub a_floor: f64,
}

impl Default for RelaxConfig {
    fn default() -> Self {
        Self { epsilon: 1e-6, safety: 1.2, a_floor: 0.1 }
    }
}

impl RelaxConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Error::InvalidParameter {
                name: "epsilon",
                reason: alloc::format!("must be positive and finite, got {}", self.epsilon),
            });
        }
        if !(self.safety.is_finite() && self.safety >= 1.0) {
            return Err(Error::InvalidParameter {
                name: "safety",
                reason: alloc::format!("must be >= 1, got {}", self.safety),
            });
        }
        if !(self.a_floor.is_finite() && self.a_floor > 0.0) {
            return Err(Error::InvalidParameter {
                name: "a_floor",
                reason: alloc::format!("must be positive, got {}", self.a_floor),
            });
        }
        Ok(())
    }
}

/// Relaxation speed satisfying the subcharacteristic condition
/// `a >= max_i |f'(u_i)|` on the given field:
/// `a = max(a_floor, safety * max_i |f'(u_i)|)`.
pub fn subchar_speed(model: &FluxModel, u_field: &[f64], cfg: &RelaxConfig) -> Result<f64> {
    if u_field.is_empty() {
        return Err(Error::InvalidParameter { name: "u_field", reason: "empty field".to_string() });
    }
    let mut max_speed = 0.0_f64;
    for (index, &u) in u_field.iter().enumerate() {
        if !u.is_finite() {
            return Err(Error::NonFinite { what: "u_field", index });
        }
        max_speed = max_speed.max(model.flux_deriv(u).abs());
    }
    Ok(cfg.a_floor.max(cfg.safety * max_speed))
}

/// Equilibrium initial state `v = f(u0)`.
pub fn relax_init(u0: &[f64], model: &FluxModel) -> RelaxState {
    RelaxState { u: u0.to_vec(), v: u0.iter().map(|&u| model.flux(u)).collect() }
}
