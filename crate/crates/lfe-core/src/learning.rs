//! Adaptive learning recursions with age-dependent gain.
//!
//! Agents born in period `s` update a belief about the macro series after
//! each observation, weighting the latest forecast error by a gain that
//! decreases with their age `t - s` beyond an initial plateau. Two
//! perceived laws of motion are supported: a constant level (scalar
//! recursion, closed-form weights) and a regression updated by recursive
//! least squares. The forecast panel generator turns a macro series into
//! the matrix of cohort forecasts that the estimator consumes.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Condition-number ceiling beyond which an RLS second-moment matrix is
/// treated as singular.
pub const COND_LIMIT: f64 = 1e12;

/// Scale of the identity used to initialize the RLS second-moment matrix.
pub const R_INIT_SCALE: f64 = 1e-6;

/// Gain-sequence family.
///
/// `Baseline` plateaus at 1 while the age is at most `gamma`; `CodeVariant`
/// plateaus at 1/2 while the age is at most `2 * gamma`. Both decay like
/// `gamma / age` afterwards.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GainFamily {
    Baseline,
    CodeVariant,
}

/// A gain-sequence family together with its gain parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainSpec {
    pub family: GainFamily,
    pub gamma: f64,
}

impl GainSpec {
    pub fn new(family: GainFamily, gamma: f64) -> Result<Self> {
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(Error::Domain(format!(
                "gain parameter must be a positive finite real, got {gamma}"
            )));
        }
        Ok(Self { family, gamma })
    }

    /// Gain applied at the given age (the age of the update, starting at 1).
    pub fn gain(&self, age: usize) -> Result<f64> {
        if age == 0 {
            return Err(Error::Domain("gain is defined for positive ages only".into()));
        }
        let a = age as f64;
        Ok(match self.family {
            GainFamily::Baseline => {
                if a > self.gamma {
                    self.gamma / a
                } else {
                    1.0
                }
            }
            GainFamily::CodeVariant => {
                if a > 2.0 * self.gamma {
                    self.gamma / a
                } else {
                    0.5
                }
            }
        })
    }

    /// Last age at which the plateau value applies.
    pub fn plateau_horizon(&self) -> f64 {
        match self.family {
            GainFamily::Baseline => self.gamma,
            GainFamily::CodeVariant => 2.0 * self.gamma,
        }
    }
}

/// Belief level of an agent forecasting with a constant perceived law of motion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarBelief {
    pub level: f64,
    pub age: usize,
}

impl ScalarBelief {
    pub fn new(level: f64) -> Self {
        Self { level, age: 0 }
    }

    /// One update of the learning recursion; the age advances by exactly one.
    pub fn update(&self, y: f64, spec: &GainSpec) -> Result<ScalarBelief> {
        let gain = spec.gain(self.age + 1)?;
        Ok(ScalarBelief {
            level: self.level + gain * (y - self.level),
            age: self.age + 1,
        })
    }
}

/// Closed-form weights placed on the observation window by an agent of age
/// `age` under the baseline gain family.
///
/// Entry `j` of `kappa` (for `j` from `floor(gamma)` to `age`) multiplies the
/// observation made `age - j` periods before the present. Weights are
/// nonnegative and sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    pub gamma: f64,
    pub age: usize,
    /// First index carrying weight, `floor(gamma)`.
    pub start: usize,
    pub kappa: Vec<f64>,
}

impl WeightVector {
    pub fn len(&self) -> usize {
        self.kappa.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kappa.is_empty()
    }

    /// Weighted mean of an observation window `y_{t-age+start}, ..., y_t`.
    pub fn dot(&self, window: &[f64]) -> Result<f64> {
        if window.len() != self.kappa.len() {
            return Err(Error::Domain(format!(
                "window length {} does not match weight length {} (gamma={}, age={})",
                window.len(),
                self.kappa.len(),
                self.gamma,
                self.age
            )));
        }
        Ok(self
            .kappa
            .iter()
            .zip(window)
            .map(|(k, y)| k * y)
            .sum())
    }
}

/// Weights `kappa_{j,age}(gamma)` for `j = floor(gamma)..=age`.
///
/// The leading entry collects the whole suffix product (the plateau absorbs
/// everything older); the suffix products are accumulated by one backward
/// scan per age.
pub fn weights_kappa(gamma: f64, age: usize) -> Result<WeightVector> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::Domain(format!(
            "gain parameter must be a positive finite real, got {gamma}"
        )));
    }
    let start = gamma.floor() as usize;
    if age < start {
        return Err(Error::Domain(format!(
            "agent of age {age} is younger than the discard horizon floor(gamma)={start}"
        )));
    }
    let len = age - start + 1;
    let mut kappa = vec![0.0; len];
    // Backward scan: suffix holds prod_{i=j+1}^{age} (1 - gamma/i).
    let mut suffix = 1.0;
    for j in (start..=age).rev() {
        kappa[j - start] = if j == start {
            suffix
        } else {
            gamma / j as f64 * suffix
        };
        if j > start {
            suffix *= 1.0 - gamma / j as f64;
        }
    }
    Ok(WeightVector { gamma, age, start, kappa })
}

/// Forecast of an agent whose window `y_{t-age+floor(gamma)}, ..., y_t` is
/// given; the age is implied by the window length.
pub fn forecast_scalar(gamma: f64, window: &[f64]) -> Result<f64> {
    if window.is_empty() {
        return Err(Error::Domain("forecast window must be non-empty".into()));
    }
    let start = if gamma > 0.0 { gamma.floor() as usize } else { 0 };
    let age = window.len() - 1 + start;
    weights_kappa(gamma, age)?.dot(window)
}

/// Recursive least-squares belief state: coefficient vector `phi` and
/// second-moment matrix `r`.
#[derive(Debug, Clone, PartialEq)]
pub struct RlsBelief {
    pub phi: Array1<f64>,
    pub r: Array2<f64>,
    pub age: usize,
}

impl RlsBelief {
    /// Fresh state of dimension `dim`: zero coefficients and a scaled
    /// identity second-moment matrix, invertible from the first step.
    pub fn new(dim: usize) -> Self {
        Self {
            phi: Array1::zeros(dim),
            r: Array2::eye(dim) * R_INIT_SCALE,
            age: 0,
        }
    }

    pub fn with_parts(phi: Array1<f64>, r: Array2<f64>, age: usize) -> Self {
        Self { phi, r, age }
    }

    pub fn dim(&self) -> usize {
        self.phi.len()
    }

    /// Forecast `phi . x`.
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.phi.iter().zip(x).map(|(p, v)| p * v).sum()
    }

    /// Whether the current second-moment matrix is safe to invert.
    pub fn is_wellposed(&self) -> bool {
        invert_with_cond(&self.r).is_some()
    }

    /// One RLS step. The second-moment update runs unconditionally; the
    /// coefficient update uses the refreshed matrix, as the recursion
    /// prescribes. While the gain plateau is active a singular matrix only
    /// postpones the coefficient update; past the plateau it is an error.
    pub fn update(&self, x: &[f64], y: f64, spec: &GainSpec) -> Result<RlsBelief> {
        let d = self.dim();
        if x.len() != d {
            return Err(Error::Domain(format!(
                "regressor dimension {} does not match state dimension {d}",
                x.len()
            )));
        }
        let age = self.age + 1;
        let gain = spec.gain(age)?;
        let mut r_new = self.r.clone();
        for i in 0..d {
            for j in 0..d {
                r_new[(i, j)] += gain * (x[i] * x[j] - r_new[(i, j)]);
            }
        }
        let resid = y - self.predict(x);
        let phi_new = match invert_with_cond(&r_new) {
            Some(r_inv) => {
                let mut phi = self.phi.clone();
                for i in 0..d {
                    let mut rx = 0.0;
                    for j in 0..d {
                        rx += r_inv[(i, j)] * x[j];
                    }
                    phi[i] += gain * rx * resid;
                }
                phi
            }
            None if (age as f64) <= spec.plateau_horizon() => self.phi.clone(),
            None => {
                return Err(Error::SingularState { age, cond_limit: COND_LIMIT });
            }
        };
        Ok(RlsBelief { phi: phi_new, r: r_new, age })
    }
}

/// Inverse of a small matrix by Gauss-Jordan elimination with partial
/// pivoting. Returns `None` when the 1-norm condition number exceeds
/// [`COND_LIMIT`] or a pivot vanishes.
fn invert_with_cond(a: &Array2<f64>) -> Option<Array2<f64>> {
    let d = a.nrows();
    let mut work = a.clone();
    let mut inv = Array2::eye(d);
    for col in 0..d {
        let mut pivot = col;
        for row in col + 1..d {
            if work[(row, col)].abs() > work[(pivot, col)].abs() {
                pivot = row;
            }
        }
        let p = work[(pivot, col)];
        if p == 0.0 || !p.is_finite() {
            return None;
        }
        if pivot != col {
            for j in 0..d {
                work.swap((pivot, j), (col, j));
                inv.swap((pivot, j), (col, j));
            }
        }
        let p = work[(col, col)];
        for j in 0..d {
            work[(col, j)] /= p;
            inv[(col, j)] /= p;
        }
        for row in 0..d {
            if row != col {
                let f = work[(row, col)];
                if f != 0.0 {
                    for j in 0..d {
                        work[(row, j)] -= f * work[(col, j)];
                        inv[(row, j)] -= f * inv[(col, j)];
                    }
                }
            }
        }
    }
    let cond = norm1(a) * norm1(&inv);
    if !cond.is_finite() || cond > COND_LIMIT {
        return None;
    }
    Some(inv)
}

fn norm1(a: &Array2<f64>) -> f64 {
    let mut best = 0.0_f64;
    for col in a.columns() {
        best = best.max(col.iter().map(|v| v.abs()).sum());
    }
    best
}

/// Perceived law of motion used by the cohorts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Plm {
    /// Constant level; the scalar recursion applies.
    Constant,
    /// Scalar regression on a supplied exogenous series.
    Regression,
    /// AR(1) regression on an intercept and the lagged macro series.
    Ar1,
}

/// Timing convention for reading a forecast off the belief path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ForecastTiming {
    /// Forecast at `t` uses the belief formed at the end of `t - 1`.
    OneStep,
    /// Forecast at `t` uses the belief formed at the end of `t` and the
    /// regressor of `t + 1`.
    EndOfPeriod,
}

/// Forecast-panel configuration: law of motion, gain family, timing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForecastModel {
    pub plm: Plm,
    pub gain: GainFamily,
    pub timing: ForecastTiming,
}

impl ForecastModel {
    pub fn new(plm: Plm, gain: GainFamily, timing: ForecastTiming) -> Self {
        Self { plm, gain, timing }
    }
}

/// Cohort forecast panel `a_{t,s}(gamma)` for `t = u+1..=n` and ages
/// `l..=u`, as an `(n-u) x (u-l+1)` matrix with ages along the columns.
///
/// `y[i]` holds the macro value of period `i + 1`; the optional regressor
/// series is indexed the same way. Every cohort alive in the panel is born
/// at period 1 or later, so no pre-sample data is ever needed.
pub fn forecast_panel(
    model: &ForecastModel,
    gamma: f64,
    y: &[f64],
    x: Option<&[f64]>,
    l: usize,
    u: usize,
) -> Result<Array2<f64>> {
    let n = y.len();
    if !(1 <= l && l < u && u < n) {
        return Err(Error::Config(format!(
            "age bounds must satisfy 1 <= l < u < n, got l={l}, u={u}, n={n}"
        )));
    }
    let spec = GainSpec::new(model.gain, gamma)?;
    if let Plm::Regression = model.plm {
        match x {
            Some(series) if series.len() == n => {}
            Some(series) => {
                return Err(Error::Config(format!(
                    "regressor series has length {}, expected {n}",
                    series.len()
                )));
            }
            None => {
                return Err(Error::Config(
                    "regression law of motion needs a regressor series".into(),
                ));
            }
        }
        if model.timing == ForecastTiming::EndOfPeriod {
            return Err(Error::Config(
                "end-of-period timing needs the regressor at t+1, which the series does not carry; use one-step timing or the ar1 law of motion".into(),
            ));
        }
    }
    let m = u - l + 1;
    let mut out = Array2::zeros((n - u, m));
    for birth in 1..=(n - l) {
        let t_first = (u + 1).max(birth + l);
        let t_last = n.min(birth + u);
        if t_first > t_last {
            continue;
        }
        match model.plm {
            Plm::Constant => {
                constant_path(&spec, model.timing, y, birth, t_first, t_last, l, u, &mut out)
            }
            Plm::Regression => rls_path::<1>(
                &spec,
                model.timing,
                y,
                RegressorSeries::Supplied(x.unwrap()),
                birth,
                t_first,
                t_last,
                l,
                u,
                &mut out,
            )?,
            Plm::Ar1 => rls_path::<2>(
                &spec,
                model.timing,
                y,
                RegressorSeries::LaggedMacro,
                birth,
                t_first,
                t_last,
                l,
                u,
                &mut out,
            )?,
        }
    }
    Ok(out)
}

fn timing_lag(timing: ForecastTiming) -> usize {
    match timing {
        ForecastTiming::OneStep => 1,
        ForecastTiming::EndOfPeriod => 0,
    }
}

/// Scalar recursion for one cohort. The belief at age zero is the birth
/// observation itself, which is the initial value implied by the weight
/// representation; with a baseline gain and gamma >= 1 the first plateau
/// update wipes it anyway.
#[allow(clippy::too_many_arguments)]
fn constant_path(
    spec: &GainSpec,
    timing: ForecastTiming,
    y: &[f64],
    birth: usize,
    t_first: usize,
    t_last: usize,
    l: usize,
    u: usize,
    out: &mut Array2<f64>,
) {
    let lag = timing_lag(timing);
    let tau_last = t_last - lag;
    let mut level = y[birth - 1];
    let mut data_age = 0usize;
    let emit = |out: &mut Array2<f64>, level: f64, tau: usize| {
        let t = tau + lag;
        if t >= t_first && t <= t_last {
            out[(t - u - 1, t - birth - l)] = level;
        }
    };
    emit(out, level, birth);
    for tau in birth + 1..=tau_last {
        data_age += 1;
        // gain() only errors at age zero, which the loop never produces
        let gain = spec.gain(data_age).expect("positive age");
        level += gain * (y[tau - 1] - level);
        emit(out, level, tau);
    }
}

enum RegressorSeries<'a> {
    Supplied(&'a [f64]),
    LaggedMacro,
}

impl RegressorSeries<'_> {
    /// Regressor vector of period `t` (1-based), `D` entries.
    fn at<const D: usize>(&self, t: usize, y: &[f64]) -> [f64; D] {
        let mut v = [0.0; D];
        match self {
            RegressorSeries::Supplied(x) => v[0] = x[t - 1],
            RegressorSeries::LaggedMacro => {
                v[0] = 1.0;
                v[1] = y[t - 2];
            }
        }
        v
    }
}

/// Fixed-dimension RLS path for one cohort; avoids heap traffic in the
/// per-gamma inner loop of the grid search.
#[allow(clippy::too_many_arguments)]
fn rls_path<const D: usize>(
    spec: &GainSpec,
    timing: ForecastTiming,
    y: &[f64],
    xs: RegressorSeries<'_>,
    birth: usize,
    t_first: usize,
    t_last: usize,
    l: usize,
    u: usize,
    out: &mut Array2<f64>,
) -> Result<()> {
    let lag = timing_lag(timing);
    let tau_last = t_last - lag;
    let mut phi = [0.0_f64; D];
    let mut r = [[0.0_f64; D]; D];
    for (i, row) in r.iter_mut().enumerate() {
        row[i] = R_INIT_SCALE;
    }
    if lag == 1 && t_first == birth + 1 {
        // an age-one forecast reads the age-zero state, which is well posed
        // by construction and predicts zero
        let x_fc = xs.at::<D>(t_first, y);
        out[(t_first - u - 1, t_first - birth - l)] = dot::<D>(&phi, &x_fc);
    }
    for tau in birth + 1..=tau_last {
        let age = tau - birth;
        let gain = spec.gain(age).expect("positive age");
        let x = xs.at::<D>(tau, y);
        for i in 0..D {
            for j in 0..D {
                r[i][j] += gain * (x[i] * x[j] - r[i][j]);
            }
        }
        let resid = y[tau - 1] - dot::<D>(&phi, &x);
        let valid = match solve_fixed::<D>(&r, &x) {
            Some(rx) => {
                for i in 0..D {
                    phi[i] += gain * rx[i] * resid;
                }
                true
            }
            None if (age as f64) <= spec.plateau_horizon() => false,
            None => {
                return Err(Error::SingularBelief {
                    birth,
                    time: tau,
                    cond_limit: COND_LIMIT,
                });
            }
        };
        let t = tau + lag;
        if t >= t_first && t <= t_last {
            if !valid {
                return Err(Error::SingularBelief {
                    birth,
                    time: t,
                    cond_limit: COND_LIMIT,
                });
            }
            let x_fc = match timing {
                ForecastTiming::OneStep => xs.at::<D>(t, y),
                ForecastTiming::EndOfPeriod => xs.at::<D>(t + 1, y),
            };
            out[(t - u - 1, t - birth - l)] = dot::<D>(&phi, &x_fc);
        }
    }
    Ok(())
}

fn dot<const D: usize>(a: &[f64; D], b: &[f64; D]) -> f64 {
    let mut s = 0.0;
    for i in 0..D {
        s += a[i] * b[i];
    }
    s
}

/// Solves `R v = x` for symmetric `R` of dimension 1 or 2, refusing
/// ill-conditioned systems.
fn solve_fixed<const D: usize>(r: &[[f64; D]; D], x: &[f64; D]) -> Option<[f64; D]> {
    let mut v = [0.0; D];
    match D {
        1 => {
            let rr = r[0][0];
            if !(rr.is_finite() && rr > 0.0) {
                return None;
            }
            v[0] = x[0] / rr;
        }
        2 => {
            let (a, b, d) = (r[0][0], r[0][1], r[1][1]);
            let det = a * d - b * b;
            // eigenvalue ratio of the symmetric 2x2 as the condition number
            let half_tr = 0.5 * (a + d);
            let disc = (half_tr * half_tr - det).max(0.0).sqrt();
            let (emax, emin) = (half_tr + disc, half_tr - disc);
            if !(det.is_finite() && emin > 0.0 && emax <= COND_LIMIT * emin) {
                return None;
            }
            v[0] = (d * x[0] - b * x[1]) / det;
            v[1] = (a * x[1] - b * x[0]) / det;
        }
        _ => unreachable!("regressor dimension is 1 or 2"),
    }
    Some(v)
}
