use alloc::string::String;
use alloc::vec::Vec;

/// Errors raised by the numerical routines of this crate.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    /// A theorem hypothesis does not hold for the given input, so the check
    /// it backs has nothing to say.
    #[error("not applicable: {0}")]
    NotApplicable(String),

    #[error("divergent moment: {0}")]
    DivergentMoment(String),

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence {
        iterations: usize,
        residual: f64,
        best: Vec<f64>,
    },
}

pub type Result<T> = core::result::Result<T, Error>;

macro_rules! bail {
    ($variant:ident, $($arg:tt)*) => {
        return Err($crate::error::Error::$variant(alloc::format!($($arg)*)))
    };
}
pub(crate) use bail;
