use thiserror::Error;

/// Errors surfaced by the evaluation routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Gx2Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The chosen method cannot handle these parameters.
    #[error("method {method} is not applicable: {reason} (alternatives: {alternatives})")]
    Inapplicable {
        method: &'static str,
        reason: String,
        alternatives: &'static str,
    },

    /// Numerical integration gave up; the best estimate is kept.
    #[error("integration did not converge: estimate {estimate}, residual {residual:e}")]
    NoConvergence { estimate: f64, residual: f64 },

    #[error("point {point} lies outside the usable part of the transform grid")]
    OutsideGrid { point: f64 },

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("root finding failed: {0}")]
    RootNotFound(String),
}

pub type Result<T> = std::result::Result<T, Gx2Error>;
