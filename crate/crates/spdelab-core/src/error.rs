//! Crate-wide error type.
//!
//! Every fallible operation returns [`Result`]. The variants mirror the
//! failure classes of the public API: bad configuration, bad call
//! arguments, numerical blow-up during a simulation, estimator
//! pathologies (non-finite samples), quadrature/scheme construction
//! problems, regression failures and fixed-point divergence.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid model or run configuration (rejected at construction).
    #[error("config error: {0}")]
    Config(String),

    /// Invalid argument to an operation (dimension mismatch, t < 0, ...).
    #[error("argument error: {0}")]
    Argument(String),

    /// A path produced a non-finite state component.
    #[error("simulation error at step {step}: {what}")]
    Simulation { step: usize, what: String },

    /// An estimator met non-finite samples or an empty batch.
    #[error("estimator error: {what} ({n_bad} bad samples)")]
    Estimator { what: String, n_bad: usize },

    /// Quadrature scheme construction or use failed its contract.
    #[error("scheme error: {0}")]
    Scheme(String),

    /// A regression had too few usable points or a degenerate design.
    #[error("fit error: {0}")]
    Fit(String),

    /// A fixed-point iteration failed to contract.
    #[error("divergence error: {0}")]
    Divergence(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
    pub fn argument(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }
    pub fn estimator(msg: impl Into<String>, n_bad: usize) -> Self {
        Error::Estimator { what: msg.into(), n_bad }
    }
}
