use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument fell outside the domain where the operation is defined.
    #[error("{what} = {value} is outside {domain}")]
    Domain {
        what: &'static str,
        value: f64,
        domain: String,
    },

    /// A configuration value is missing or inconsistent.
    #[error("invalid configuration field `{field}`: {message}")]
    Config { field: String, message: String },

    /// Time step exceeds the upwind stability limit.
    #[error("CFL violation: courant number {courant:.6} > 1 (dt = {dt}, dx = {dx}, max |A'| = {speed})")]
    Cfl {
        courant: f64,
        dt: f64,
        dx: f64,
        speed: f64,
    },

    #[error("non-finite value in kinetic state after step {step}")]
    NonFinite { step: usize },

    #[error("precondition failed: {0}")]
    Precondition(String),

    /// The flux-derivative extensions did not span a well-conditioned subspace.
    #[error("degenerate flux basis in direction {direction}: gram condition number {condition:e}")]
    Degenerate { direction: usize, condition: f64 },

    #[error("{path}: {message}")]
    Input { path: PathBuf, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn domain(what: &'static str, value: f64, domain: impl Into<String>) -> Self {
        Error::Domain {
            what,
            value,
            domain: domain.into(),
        }
    }
}
