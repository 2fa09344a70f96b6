use thiserror::Error;

/// Errors raised by the toolkit.
///
/// Nonconvergence is not an error: solvers report it through their report types.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("input error: {0}")]
    Input(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("unsupported configuration: {0}")]
    Unsupported(String),
    #[error("unstable discretization pair: inf-sup constant {gamma:.3e} below {threshold}")]
    UnstablePair { gamma: f64, threshold: f64 },
    #[error("internal error: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;
