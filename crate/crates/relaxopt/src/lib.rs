//! Experiments, file formats and the command-line tool around
//! [`relaxopt_core`].
//!
//! * [`config`]: run configuration (`key = value` files and overrides)
//! * [`tableau_file`]: plain-text IMEX tableau files
//! * [`studies`]: order studies, the tracking table, gradient reports
//! * [`output`]: CSV exports
//! * [`cli`]: the `relaxopt` binary

pub mod cli;
pub mod config;
pub mod error;
pub mod output;
pub mod studies;
pub mod tableau_file;

pub use error::{AppError, AppResult};
pub use relaxopt_core as numerics;
