use thiserror::Error;

/// Which end of the open distortion interval `(d_min, gamma_x)` was violated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bound {
    /// The MMSE floor `d_min^(k)`.
    Lower,
    /// The signal variance `gamma_x`.
    Upper,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("signal variance gamma_x must be positive, got {0}")]
    NonPositiveSignalVariance(f64),

    #[error("dimension must be at least 2, got {0}")]
    DimensionTooSmall(usize),

    #[error("dimension mismatch: signal has ell = {signal}, noise has ell = {noise}")]
    DimensionMismatch { signal: usize, noise: usize },

    #[error("parameter {name} is not finite ({value})")]
    NonFinite { name: &'static str, value: f64 },

    #[error("{source_name} covariance is not positive semidefinite: {eigenvalue} = {value:e} < 0")]
    NotPsd {
        source_name: &'static str,
        eigenvalue: String,
        value: f64,
    },

    #[error("index {name} = {value} outside [{lo}, {hi}]")]
    IndexOutOfRange {
        name: &'static str,
        value: usize,
        lo: usize,
        hi: usize,
    },

    #[error("{}", distortion_message(*.k, *.d, *.bound, *.limit))]
    DistortionOutOfRange {
        k: usize,
        d: f64,
        bound: Bound,
        limit: f64,
    },

    #[error("degenerate spectrum: {0}")]
    DegenerateSpectrum(String),

    #[error("case precondition violated: {0}")]
    CasePrecondition(String),

    #[error("logarithm argument is not positive in {0}")]
    LogDomain(&'static str),

    #[error("matrix is singular or not positive definite: {0}")]
    NotPositiveDefinite(&'static str),

    #[error("lambda_w = {lambda_w} must lie in (0, {upper})")]
    LambdaWOutOfRange { lambda_w: f64, upper: f64 },

    #[error("internal consistency check failed: {0}")]
    Inconsistent(String),
}

fn distortion_message(k: usize, d: f64, bound: Bound, limit: f64) -> String {
    match bound {
        Bound::Lower => {
            format!("distortion d_{k} = {d} must exceed d_min^({k}) = {limit} (open interval)")
        }
        Bound::Upper => {
            format!("distortion d_{k} = {d} must be below gamma_x = {limit} (open interval)")
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
