//! Numerical toolkit for cohort panels with learning from experience.
//!
//! Cohorts update beliefs about a macro series through an age-dependent
//! gain recursion; a panel of their reported expectations identifies the
//! sensitivity parameter `beta` and the gain parameter `gamma` by
//! profiled nonlinear least squares. The crate provides:
//!
//! - [`learning`]: gain sequences, belief recursions, closed-form weights,
//!   and forecast-panel generation;
//! - [`panel`]: the cohort-panel data model, demeaning transforms, the
//!   simulation scenarios, and CSV ingestion;
//! - [`estimator`]: the profiled least-squares fit with numerical-Hessian
//!   standard errors;
//! - [`inference`]: Wald and t tests, and the supF test of `beta = 0` with
//!   Gaussian-process critical values and a multiplier bootstrap;
//! - [`theory`]: closed-form limit quantities used as test oracles;
//! - [`montecarlo`]: the parallel replication harness and its summaries.

pub mod error;
pub mod estimator;
pub mod inference;
pub mod learning;
pub mod linalg;
pub mod montecarlo;
pub mod panel;
pub mod seed;
pub mod theory;

/// Symmetric 2x2 matrix in the `(beta, gamma)` parameter ordering.
pub type Matrix2 = [[f64; 2]; 2];

pub use error::{Error, Result};
pub use estimator::{fit, FitResult, GammaBounds, SearchConfig, Theta};
pub use inference::{
    gp_critical_values, supf_statistic, supf_test, t_test, wald, Alternative, LinearRestriction,
    Parameter, SupFResult,
};
pub use learning::{ForecastModel, ForecastTiming, GainFamily, GainSpec, Plm};
pub use panel::{
    demean_cohort, demean_time, load_panel_csv, simulate_dgp, write_panel_csv, CohortPanel,
    DgpConfig, Scenario,
};
pub use theory::LimitParams;
