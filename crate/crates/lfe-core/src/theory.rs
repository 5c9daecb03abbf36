//! Closed-form limit quantities of the estimator's asymptotics.
//!
//! These expressions serve as independent oracles: the covariance kernel
//! `phi`, its derivative analogues `upsilon_k`, the limiting Hessian
//! `C(theta)`, and the power-law weight approximation `h_{j,s}`. None of
//! them is used inside the estimation path itself.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma, ln_gamma};

use crate::error::{Error, Result};
use crate::estimator::Theta;
use crate::Matrix2;

/// Covariance kernel `phi(g1, g2) = g1 g2 / (g1 + g2 - 1)`, defined for
/// `g1 + g2 > 1`.
pub fn phi(g1: f64, g2: f64) -> Result<f64> {
    if !(g1 + g2 > 1.0) {
        return Err(Error::Domain(format!(
            "kernel pole: phi requires g1 + g2 > 1, got {g1} + {g2}"
        )));
    }
    Ok(g1 * g2 / (g1 + g2 - 1.0))
}

/// Limit covariances `Upsilon_k(g1, g2)` of the k-th derivative processes;
/// `k = 0` is the kernel itself.
pub fn upsilon(k: u32, g1: f64, g2: f64) -> Result<f64> {
    if k == 0 {
        return phi(g1, g2);
    }
    if !(g1 + g2 > 1.0) {
        return Err(Error::Domain(format!(
            "kernel pole: upsilon requires g1 + g2 > 1, got {g1} + {g2}"
        )));
    }
    let kf = f64::from(k);
    // grouped so the expression is symmetric in its arguments to the bit
    let num = kf * (1.0 - (g1 - g2).powi(2)) + ((g1 - 1.0) * g1 + (g2 - 1.0) * g2);
    Ok(kf * gamma(2.0 * kf - 1.0) * num / (g1 + g2 - 1.0).powi(2 * k as i32 + 1))
}

/// Long-run variance and cohort-range factor entering the limiting Hessian.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitParams {
    /// Long-run variance of the macro series, the sum of its autocovariances.
    pub omega2: f64,
    /// Factor `(lambda_1 - lambda_2)(1 - lambda_3)` built from the age-range
    /// and sample-size ratios.
    pub lambda2: f64,
}

impl LimitParams {
    pub fn new(omega2: f64, lambda2: f64) -> Result<Self> {
        if !(omega2 > 0.0) {
            return Err(Error::Domain(format!("omega2 must be positive, got {omega2}")));
        }
        if !(lambda2 > 0.0 && lambda2 <= 1.0) {
            return Err(Error::Domain(format!("lambda2 must lie in (0, 1], got {lambda2}")));
        }
        Ok(Self { omega2, lambda2 })
    }

    /// Finite-sample plug-in `(ln u - ln l)/ln n * (1 - u/n)`.
    pub fn lambda2_plugin(n: usize, u: usize, l: usize) -> f64 {
        let (n, u, l) = (n as f64, u as f64, l as f64);
        (u.ln() - l.ln()) / n.ln() * (1.0 - u / n)
    }

    /// Long-run variance of a unit-variance AR(1) process with coefficient
    /// `ar`: the autocovariances are `ar^|j|`, summing to `(1+ar)/(1-ar)`.
    pub fn omega2_ar1(ar: f64) -> f64 {
        (1.0 + ar) / (1.0 - ar)
    }
}

/// Limiting Hessian `C(theta)` of the scaled objective, a positive-definite
/// 2x2 matrix in the (beta, gamma) ordering.
pub fn hessian_c(theta: &Theta, lim: &LimitParams) -> Result<Matrix2> {
    let (beta, g) = (theta.beta, theta.gamma);
    if beta == 0.0 {
        return Err(Error::DegenerateRegressor(
            "the limiting Hessian is singular at beta = 0 (beta and gamma are not separately identified)".into(),
        ));
    }
    if !(g > 2.0 / 3.0) {
        return Err(Error::Domain(format!("hessian_c requires gamma > 2/3, got {g}")));
    }
    let scale = lim.omega2 * lim.lambda2 * phi(g, g)?;
    let off = beta / g * (g - 1.0) / (2.0 * g - 1.0);
    let gg = beta * beta / g * (1.0 / g + 2.0 * (g - 1.0)) / (2.0 * g - 1.0).powi(2);
    Ok([[scale, scale * off], [scale * off, scale * gg]])
}

/// Power-law weight `h_{j,s}(gamma) = (gamma / s^gamma) j^{gamma-1}` and its
/// gamma-derivatives; `k = 0` returns the weight itself.
pub fn h_weight(j: usize, s: usize, gamma: f64, k: u32) -> Result<f64> {
    if j < 1 || j > s {
        return Err(Error::Domain(format!("h_weight requires 1 <= j <= s, got j={j}, s={s}")));
    }
    let (jf, sf) = (j as f64, s as f64);
    let h = gamma / sf.powf(gamma) * jf.powf(gamma - 1.0);
    if k == 0 {
        return Ok(h);
    }
    let log_ratio = (jf / sf).ln();
    Ok(h * log_ratio.powi(k as i32 - 1) * (log_ratio + f64::from(k) / gamma))
}

/// Approximate (derivative-of-)forecast `r^(k)` as the `h`-weighted sum over
/// a centered window `y*_{t-s+1}, ..., y*_t`.
pub fn r_approx(gamma: f64, k: u32, centered_window: &[f64]) -> Result<f64> {
    let s = centered_window.len();
    if s == 0 {
        return Err(Error::Domain("r_approx needs a non-empty window".into()));
    }
    let mut acc = 0.0;
    for (idx, y) in centered_window.iter().enumerate() {
        acc += h_weight(idx + 1, s, gamma, k)? * y;
    }
    Ok(acc)
}

/// Weight `kappa_{j,s}(gamma)` for `floor(gamma) < j <= s` through the
/// Gamma-function identity, an independent route to the product formula.
pub fn kappa_via_gamma(j: usize, s: usize, g: f64) -> Result<f64> {
    let start = g.floor() as usize;
    if !(j > start && j <= s) {
        return Err(Error::Domain(format!(
            "gamma-identity weight requires floor(gamma) < j <= s, got j={j}, s={s}, gamma={g}"
        )));
    }
    let (jf, sf) = (j as f64, s as f64);
    let log = ln_gamma(jf + 1.0) - ln_gamma(sf + 1.0) + ln_gamma(sf + 1.0 - g)
        - ln_gamma(jf + 1.0 - g);
    Ok(g / jf * log.exp())
}
