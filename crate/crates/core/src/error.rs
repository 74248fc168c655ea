//! Error type shared by all modules.

use thiserror::Error;

#[derive(Error, Debug)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("chemical potential |mu| = {mu} must stay below the mass gap m = {mass}")]
    CondensationThreshold { mu: f64, mass: f64 },

    #[error("complex time {0} lies outside the closed strip 0 <= Im t <= beta")]
    StripViolation(String),

    #[error("Euclidean word times must be ordered on the circle: {0}")]
    OrderingViolation(String),

    #[error("argument must be kappa-real (|Im| = {0:.3e} exceeds tolerance)")]
    NotKappaReal(f64),

    #[error("covariance matrix is not PSD: min eigenvalue {0:.3e} below the -1e-10 floor")]
    NotPositiveSemidefinite(f64),

    #[error("degree {0} exceeds the supported maximum {1}")]
    DegreeTooLarge(usize, usize),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("malformed ensemble file: {0}")]
    MalformedFile(String),
}

pub type Result<T> = std::result::Result<T, Error>;
