//! Kinetic BGK relaxation solver for scalar conservation laws
//! `∂_t ρ + div A(ρ) = 0` whose relaxation target is a minimizer of a
//! piecewise-constant entropy ladder at fixed mass, plus the diagnostics used
//! to check the structure of the resulting approximate solutions.

pub mod bgk;
pub mod cli;
pub mod config;
pub mod diagnostics;
pub mod error;
pub mod io;
pub mod model;
pub mod phase_grid;
pub mod projection;
pub mod reference;

pub use error::{Error, Result};
