//! Profiled nonlinear least squares for the cohort panel model.
//!
//! The objective `Q(theta) = sum (z~ - beta a~(gamma))^2` over the
//! time-demeaned panel is linear in `beta`, so `beta` is concentrated out
//! analytically and a one-dimensional search over `gamma` remains: a coarse
//! grid followed by golden-section refinement. The objective has kinks at
//! integer gains, so the integer nearest the refined point is probed as an
//! extra candidate. Standard errors come from the four-point numerical
//! Hessian of the full objective.

use ndarray::Array2;
use serde_json::json;
use std::cell::RefCell;
use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::learning::{forecast_panel, ForecastModel};
use crate::linalg::invert_2x2;
use crate::panel::{demean_time, CohortPanel};
use crate::Matrix2;

/// Parameter pair in the `(beta, gamma)` ordering used by all 2x2
/// matrices in this crate.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Theta {
    pub beta: f64,
    pub gamma: f64,
}

/// Admissible range for the gain parameter.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GammaBounds {
    pub lo: f64,
    pub hi: f64,
}

impl Default for GammaBounds {
    /// `[2/3 + 1e-6, 10]`: the interior of the widest range the theory
    /// allows, open at 2/3.
    fn default() -> Self {
        Self { lo: 2.0 / 3.0 + 1e-6, hi: 10.0 }
    }
}

impl GammaBounds {
    pub fn validate(&self) -> Result<()> {
        if !(self.lo.is_finite() && self.hi.is_finite() && 0.0 < self.lo && self.lo < self.hi) {
            return Err(Error::Config(format!(
                "gamma bounds must satisfy 0 < lo < hi, got [{}, {}]",
                self.lo, self.hi
            )));
        }
        Ok(())
    }

    pub fn linspace(&self, points: usize) -> Vec<f64> {
        let p = points.max(2);
        (0..p)
            .map(|i| self.lo + (self.hi - self.lo) * i as f64 / (p - 1) as f64)
            .collect()
    }
}

/// Search configuration for the profiled minimization.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SearchConfig {
    pub bounds: GammaBounds,
    /// Coarse grid size for the initial scan.
    pub grid_points: usize,
    /// Absolute tolerance of the golden-section bracket on gamma.
    pub tol_gamma: f64,
    /// Step of the numerical Hessian; `None` uses `(n ln n)^(-1/4)`.
    pub hessian_step: Option<f64>,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            bounds: GammaBounds::default(),
            grid_points: 60,
            tol_gamma: 1e-6,
            hessian_step: None,
        }
    }
}

/// Fit output: estimates, objective value, error variance, numerical
/// Hessian, standard errors, and search diagnostics.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub theta: Theta,
    pub q_min: f64,
    /// Error-variance estimate `q_min / ((n-u) m)`.
    pub s2: f64,
    pub hessian: Matrix2,
    pub se_beta: Option<f64>,
    pub se_gamma: Option<f64>,
    /// Profiled objective on the coarse grid, `(gamma, Q*(gamma))`.
    pub gamma_grid: Vec<(f64, f64)>,
    pub iterations: usize,
    pub converged: bool,
    /// False when the gain estimate sits at the boundary of its range;
    /// standard errors are then unreliable.
    pub interior: bool,
    pub hessian_step: f64,
    pub hessian_step_clipped: bool,
    pub nu_n: f64,
    pub cells: usize,
}

impl FitResult {
    pub fn se(&self, which: crate::inference::Parameter) -> Option<f64> {
        match which {
            crate::inference::Parameter::Beta => self.se_beta,
            crate::inference::Parameter::Gamma => self.se_gamma,
        }
    }

    /// JSON view with the documented field set.
    pub fn to_json(&self) -> serde_json::Value {
        json!({
            "beta": self.theta.beta,
            "gamma": self.theta.gamma,
            "s2": self.s2,
            "se_beta": self.se_beta,
            "se_gamma": self.se_gamma,
            "hessian": self.hessian,
            "q_min": self.q_min,
            "converged": self.converged,
            "interior": self.interior,
        })
    }
}

#[derive(Clone, Copy)]
pub(crate) struct GammaStats {
    /// Sum of squared demeaned forecasts.
    pub saa: f64,
    /// Cross moment of demeaned forecasts and demeaned cells.
    pub saz: f64,
}

/// Evaluation engine for the profiled objective: demeans the panel once and
/// memoizes the per-gamma moments so grid search, refinement, and the
/// numerical Hessian share forecast panels.
pub struct ProfiledObjective<'a> {
    panel: &'a CohortPanel,
    model: ForecastModel,
    zt: Array2<f64>,
    szz: f64,
    cache: RefCell<HashMap<u64, GammaStats>>,
}

impl<'a> ProfiledObjective<'a> {
    pub fn new(panel: &'a CohortPanel, model: &ForecastModel) -> Result<Self> {
        let zt = demean_time(&panel.z);
        let szz = zt.iter().map(|v| v * v).sum();
        Ok(Self { panel, model: *model, zt, szz, cache: RefCell::new(HashMap::new()) })
    }

    pub fn cells(&self) -> usize {
        self.panel.cells()
    }

    /// Sum of squared demeaned cells.
    pub fn szz(&self) -> f64 {
        self.szz
    }

    /// Mean square of the demeaned cells.
    pub fn sigma_tilde2(&self) -> f64 {
        self.szz / self.cells() as f64
    }

    pub fn demeaned_cells(&self) -> &Array2<f64> {
        &self.zt
    }

    /// Demeaned forecast panel and its moments at `gamma`; not cached.
    pub(crate) fn eval_full(&self, gamma: f64) -> Result<(Array2<f64>, GammaStats)> {
        let a = forecast_panel(
            &self.model,
            gamma,
            &self.panel.y,
            self.panel.x.as_deref(),
            self.panel.l,
            self.panel.u,
        )?;
        let a_scale = a.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let at = demean_time(&a);
        let mut saa = 0.0;
        let mut saz = 0.0;
        for (av, zv) in at.iter().zip(self.zt.iter()) {
            saa += av * av;
            saz += av * zv;
        }
        if !saa.is_finite() || !saz.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite forecast moments at gamma={gamma}"
            )));
        }
        let floor = (1e-13 * a_scale).powi(2) * self.cells() as f64;
        if !(saa > floor) {
            return Err(Error::DegenerateRegressor(format!(
                "demeaned forecasts carry no variation at gamma={gamma} (sum of squares {saa:e})"
            )));
        }
        let stats = GammaStats { saa, saz };
        self.cache.borrow_mut().insert(gamma.to_bits(), stats);
        Ok((at, stats))
    }

    pub(crate) fn stats(&self, gamma: f64) -> Result<GammaStats> {
        if let Some(hit) = self.cache.borrow().get(&gamma.to_bits()) {
            return Ok(*hit);
        }
        Ok(self.eval_full(gamma)?.1)
    }

    /// Profiled slope `beta(gamma) = sum a~ z~ / sum a~^2`.
    pub fn beta_hat(&self, gamma: f64) -> Result<f64> {
        let s = self.stats(gamma)?;
        Ok(s.saz / s.saa)
    }

    /// Profiled objective `Q*(gamma) = szz - saz^2 / saa`.
    pub fn q_star(&self, gamma: f64) -> Result<f64> {
        let s = self.stats(gamma)?;
        Ok(self.szz - s.saz * s.saz / s.saa)
    }

    /// Objective through the quadratic expansion in beta; exact algebra
    /// given the per-gamma moments.
    pub fn q_theta(&self, theta: &Theta) -> Result<f64> {
        let s = self.stats(theta.gamma)?;
        Ok(self.szz - 2.0 * theta.beta * s.saz + theta.beta * theta.beta * s.saa)
    }

    /// Objective by direct residual summation; used for the reported
    /// minimum so near-perfect fits stay nonnegative.
    pub fn q_direct(&self, theta: &Theta) -> Result<f64> {
        let (at, _) = self.eval_full(theta.gamma)?;
        let mut q = 0.0;
        for (av, zv) in at.iter().zip(self.zt.iter()) {
            let r = zv - theta.beta * av;
            q += r * r;
        }
        Ok(q)
    }
}

/// Least-squares objective `Q(theta)` on a panel, by direct summation.
pub fn objective_q(theta: &Theta, panel: &CohortPanel, model: &ForecastModel) -> Result<f64> {
    ProfiledObjective::new(panel, model)?.q_direct(theta)
}

/// Profiled slope at a given gain parameter.
pub fn profile_beta(gamma: f64, panel: &CohortPanel, model: &ForecastModel) -> Result<f64> {
    ProfiledObjective::new(panel, model)?.beta_hat(gamma)
}

/// Golden-section minimization over `[lo, hi]`, tracking the best point
/// ever evaluated. Returns `(x, f(x), iterations)`.
fn golden_section<F: FnMut(f64) -> Result<f64>>(
    mut f: F,
    lo: f64,
    hi: f64,
    tol: f64,
    max_iter: usize,
) -> Result<(f64, f64, usize)> {
    const INVPHI: f64 = 0.618_033_988_749_894_9;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - INVPHI * (b - a);
    let mut d = a + INVPHI * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    let (mut best_x, mut best_f) = if fc <= fd { (c, fc) } else { (d, fd) };
    let mut iters = 0;
    while (b - a).abs() > tol && iters < max_iter {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INVPHI * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INVPHI * (b - a);
            fd = f(d)?;
        }
        let (x, fx) = if fc <= fd { (c, fc) } else { (d, fd) };
        if fx < best_f {
            best_x = x;
            best_f = fx;
        }
        iters += 1;
    }
    Ok((best_x, best_f, iters))
}

/// Minimizes the profiled objective: best coarse-grid point, golden-section
/// refinement inside the surrounding bracket, and a probe of the integer
/// kink nearest the refined point (golden section cannot localize a kink
/// minimum). Returns `(gamma_hat, q_hat, iterations, converged)`.
pub(crate) fn minimize_q_star(
    obj: &ProfiledObjective<'_>,
    grid: &[(f64, f64)],
    search: &SearchConfig,
) -> Result<(f64, f64, usize, bool)> {
    let best_i = grid
        .iter()
        .enumerate()
        .min_by(|a, b| a.1 .1.partial_cmp(&b.1 .1).expect("finite objective"))
        .map(|(i, _)| i)
        .expect("non-empty grid");
    let (mut gamma_hat, mut q_hat) = grid[best_i];
    let bracket_lo = grid[best_i.saturating_sub(1)].0;
    let bracket_hi = grid[(best_i + 1).min(grid.len() - 1)].0;
    let mut iters = grid.len();
    let mut converged = true;
    if bracket_hi - bracket_lo > search.tol_gamma {
        let max_iter = 200;
        let (x, fx, golden_iters) =
            golden_section(|g| obj.q_star(g), bracket_lo, bracket_hi, search.tol_gamma, max_iter)?;
        converged = golden_iters < max_iter;
        iters += golden_iters;
        if fx < q_hat {
            gamma_hat = x;
            q_hat = fx;
        }
        let kink = x.round();
        if kink != x && kink > bracket_lo && kink < bracket_hi {
            let fk = obj.q_star(kink)?;
            iters += 1;
            if fk <= q_hat {
                gamma_hat = kink;
                q_hat = fk;
            }
        }
    }
    Ok((gamma_hat, q_hat, iters, converged))
}

/// Four-point second-order numerical derivative of `objective` at `at`
/// with a shared step: `M[i][j] = [Q(+ei+ej) - Q(-ei+ej) - Q(+ei-ej)
/// + Q(-ei-ej)] / (2 step)^2`. Symmetric by construction; exact on
/// quadratics.
pub fn numerical_hessian<F>(mut objective: F, at: &Theta, step: f64) -> Result<Matrix2>
where
    F: FnMut(&Theta) -> Result<f64>,
{
    if !(step > 0.0) || !step.is_finite() {
        return Err(Error::Domain(format!("hessian step must be positive, got {step}")));
    }
    let mut eval = |db: f64, dg: f64| -> Result<f64> {
        let v = objective(&Theta { beta: at.beta + db * step, gamma: at.gamma + dg * step })?;
        if !v.is_finite() {
            return Err(Error::Numeric(format!(
                "objective not finite at beta={}, gamma={}",
                at.beta + db * step,
                at.gamma + dg * step
            )));
        }
        Ok(v)
    };
    let denom = (2.0 * step) * (2.0 * step);
    let mut m = [[0.0_f64; 2]; 2];
    // diagonal entries collapse to central second differences with step 2h
    m[0][0] = (eval(2.0, 0.0)? - 2.0 * eval(0.0, 0.0)? + eval(-2.0, 0.0)?) / denom;
    m[1][1] = (eval(0.0, 2.0)? - 2.0 * eval(0.0, 0.0)? + eval(0.0, -2.0)?) / denom;
    let off = (eval(1.0, 1.0)? - eval(-1.0, 1.0)? - eval(1.0, -1.0)? + eval(-1.0, -1.0)?) / denom;
    m[0][1] = off;
    m[1][0] = off;
    Ok(m)
}

/// Fits the panel model by profiled nonlinear least squares.
pub fn fit(panel: &CohortPanel, model: &ForecastModel, search: &SearchConfig) -> Result<FitResult> {
    search.bounds.validate()?;
    if !(search.tol_gamma > 0.0) {
        return Err(Error::Config(format!(
            "tol_gamma must be positive, got {}",
            search.tol_gamma
        )));
    }
    let obj = ProfiledObjective::new(panel, model)?;
    let grid_gammas = search.bounds.linspace(search.grid_points);
    let mut grid = Vec::with_capacity(grid_gammas.len());
    for g in grid_gammas {
        grid.push((g, obj.q_star(g)?));
    }
    let (gamma_hat, _, iterations, converged) = minimize_q_star(&obj, &grid, search)?;
    let beta_hat = obj.beta_hat(gamma_hat)?;
    let theta = Theta { beta: beta_hat, gamma: gamma_hat };
    let q_min = obj.q_direct(&theta)?;
    let cells = obj.cells();
    let s2 = q_min / cells as f64;

    let (lo, hi) = (search.bounds.lo, search.bounds.hi);
    let margin = 10.0 * search.tol_gamma;
    let interior = gamma_hat > lo + margin && gamma_hat < hi - margin;

    let n = panel.n as f64;
    let nu_n = n * n.ln();
    let step0 = search.hessian_step.unwrap_or_else(|| nu_n.powf(-0.25));
    // keep gamma +- 2 step inside the admissible range
    let step = step0
        .min((hi - gamma_hat) / 2.0)
        .min((gamma_hat - lo) / 2.0)
        .max(search.tol_gamma);
    let hessian_step_clipped = step < step0;
    let clamp = |th: &Theta| Theta { beta: th.beta, gamma: th.gamma.clamp(lo, hi) };
    let hessian = numerical_hessian(|th| obj.q_theta(&clamp(th)), &theta, step)?;

    let (se_beta, se_gamma) = match invert_2x2(&hessian) {
        Some(inv) => {
            let se = |v: f64| {
                let var = 2.0 * s2 * v;
                if var >= 0.0 && var.is_finite() {
                    Some(var.sqrt())
                } else {
                    None
                }
            };
            (se(inv[0][0]), se(inv[1][1]))
        }
        None => (None, None),
    };

    Ok(FitResult {
        theta,
        q_min,
        s2,
        hessian,
        se_beta,
        se_gamma,
        gamma_grid: grid,
        iterations,
        converged,
        interior,
        hessian_step: step,
        hessian_step_clipped,
        nu_n,
        cells,
    })
}
