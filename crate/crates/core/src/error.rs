use thiserror::Error;

/// Errors surfaced by kernel operations.
///
/// Numerical identities that merely fail to hold are not errors; they are
/// reported through the verification machinery. These variants are for
/// operations whose preconditions are violated or whose certified accuracy
/// has collapsed to nothing.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum KernelError {
    #[error("division by an element that is zero at the working precision")]
    DivisionByZero,

    #[error("propagated precision exhausted: {0}")]
    PrecisionExhausted(String),

    #[error("domain error: {0}")]
    DomainError(String),

    #[error("element is not invertible at the working precision")]
    NonInvertible,

    #[error("series is not invertible: no nonzero leading coefficient in the window")]
    NotInvertible,

    #[error("degree window exhausted: {0}")]
    WindowExhausted(String),

    #[error("trace of the input is not rational at precision; input left the phi-image by {0} digits")]
    NotInPhiImage(i64),

    #[error("certified accuracy floor too low: {0}")]
    AccuracyFloorTooLow(String),

    #[error("element has a pole at t = 0")]
    PoleAtZero,

    #[error("element is not in N_rig: {0}")]
    NotInNrig(String),

    #[error("h = {h} is too small for weight {k}: need h >= max(1, k)")]
    HTooSmall { h: i64, k: i64 },

    #[error("element is not psi-fixed: worst deviation valuation {0}")]
    NotPsiFixed(i64),

    #[error("operator series did not converge: last term valuation {last}, required {required}")]
    SeriesNotConverged { last: i64, required: i64 },

    #[error("no solution in window: {0}")]
    NoSolutionInWindow(String),

    #[error("mismatched structures: {0}")]
    Mismatch(String),
}

pub type Result<T> = std::result::Result<T, KernelError>;
