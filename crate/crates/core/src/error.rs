use thiserror::Error;

/// Errors raised by the modelling and solver layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),

    #[error("invalid case: {0}")]
    Validation(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("reduced susceptance matrix is singular: {0}")]
    SingularNetwork(String),

    #[error("injections do not balance (net {net:.3e} MW)")]
    Imbalance { net: f64 },

    #[error("degenerate denominator: {0}")]
    Degenerate(&'static str),

    #[error("probability {0} is outside (0, 1)")]
    Domain(f64),

    #[error("covariance matrix is singular (determinant {det:.3e})")]
    SingularCovariance { det: f64 },

    #[error("tightened limits cross: {0}")]
    Infeasible(String),

    #[error("quadrature did not converge (estimated error {error:.3e})")]
    Quadrature { error: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("case hash mismatch: expected {expected}, found {found}")]
    CaseMismatch { expected: String, found: String },

    #[error("scenario seed mismatch: expected {expected}, found {found}")]
    SeedMismatch { expected: u64, found: u64 },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
