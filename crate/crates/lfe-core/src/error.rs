//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by the panel, estimation, and inference routines.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument is outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A configuration value is inconsistent or out of range.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// A data file does not match the documented CSV layout.
    #[error("format error: {0}")]
    Format(String),

    /// The recursive least-squares state of a cohort became numerically
    /// singular where a forecast was required.
    #[error("singular belief state for cohort born at s={birth} at time t={time} (condition number > {cond_limit:e})")]
    SingularBelief {
        birth: usize,
        time: usize,
        cond_limit: f64,
    },

    /// A standalone recursive least-squares update hit a singular
    /// second-moment matrix past the gain plateau.
    #[error("singular RLS state at age {age} (condition number > {cond_limit:e})")]
    SingularState { age: usize, cond_limit: f64 },

    /// The profiled regressor has no variation, so beta cannot be identified.
    #[error("degenerate regressor: {0}")]
    DegenerateRegressor(String),

    /// The demeaned panel carries no variation at all.
    #[error("degenerate data: {0}")]
    DegenerateData(String),

    /// A candidate gain fits the panel exactly, which makes the F ratio infinite.
    #[error("perfect fit at gamma={gamma}: residual variance is zero")]
    PerfectFit { gamma: f64 },

    /// A numerical routine produced a non-finite value or failed to factorize.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// The hypothesis beta = 0 cannot be tested with Wald/t statistics because
    /// gamma is not identified under that null; the supF test handles it.
    #[error("the restriction beta = 0 is not testable by Wald/t statistics (gamma is unidentified under this null); use the supF test")]
    BetaZeroNotTestable,

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
