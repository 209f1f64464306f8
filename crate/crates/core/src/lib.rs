//! Optimal control of scalar 1-D conservation laws through the Jin–Xin
//! relaxation system.
//!
//! The conservation law `u_t + f(u)_x = 0` is replaced by the linear
//! relaxation system
//!
//! ```text
//! u_t + v_x         = 0
//! v_t + a^2 u_x     = (f(u) - v) / eps
//! ```
//!
//! which is discretized with a characteristic upwind (or MUSCL) operator in
//! space and an IMEX Runge–Kutta pair in time: transport explicit, stiff
//! relaxation source implicit. The matching discrete adjoint gives exact
//! gradients of a discrete tracking functional with respect to the initial
//! control `u0`.
//!
//! The crate is `no_std` and needs only `alloc`. File formats, experiment
//! harnesses and the CLI live in the `relaxopt` companion crate.
//!
//! * [`model`]: grid, flux models, relaxation state and speed
//! * [`tableau`]: IMEX Butcher pairs, adjoint coefficients, order checker
//! * [`spatial`]: the discrete transport operator and its transpose
//! * [`forward`]: IMEX time stepping and trajectories
//! * [`adjoint`]: backward sweeps (ARK, ξ and ζ forms) and gradients
//! * [`optimize`]: tracking functional, FD oracle and steepest descent
#![cfg_attr(not(test), no_std)]
#![allow(clippy::needless_range_loop)]

extern crate alloc;

pub mod adjoint;
pub mod error;
pub mod forward;
pub mod model;
pub mod optimize;
pub mod spatial;
pub mod tableau;

pub use adjoint::{
    assemble_gradient, solve_adjoint, terminal_costate, AdjointForm, AdjointSweepRecord,
    CostateState,
};
pub use error::{Error, Result};
pub use forward::{solve_forward, ForwardProblem, ImexScheme, SpeedRule, StepRule, Storage, Trajectory};
pub use model::{burgers_model, make_grid, relax_init, subchar_speed, FluxModel, Grid, RelaxConfig, RelaxState};
pub use optimize::{
    cost, fd_gradient, reduced_cost, steepest_descent, ControlProblem, DescentOptions,
    OptimizerReport,
};
pub use spatial::{Limiter, SpatialOp, SpatialScheme};
pub use tableau::{adjoint_coeffs, builtin_tableau, check_order, AdjointCoeffs, ImexTableau, OrderReport};
