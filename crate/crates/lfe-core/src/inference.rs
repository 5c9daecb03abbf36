//! Hypothesis tests for the panel model.
//!
//! Wald and t statistics apply under identification (`beta != 0`). The
//! null `beta = 0` leaves the gain parameter unidentified, so it is tested
//! with a supF statistic over the gain grid instead; its null distribution
//! comes either from simulating the limiting Gaussian process with kernel
//! `phi`, or from a multiplier bootstrap that perturbs the null residuals
//! with standard normal draws.

use ndarray::Array2;
use rand_distr::{Distribution, StandardNormal};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::estimator::{minimize_q_star, FitResult, ProfiledObjective, SearchConfig};
use crate::learning::ForecastModel;
use crate::linalg::{cholesky_lower, invert_2x2};
use crate::panel::CohortPanel;
use crate::seed::{self, tags};
use crate::theory;

/// Which scalar parameter a t test addresses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parameter {
    Beta,
    Gamma,
}

/// Alternative hypothesis of a t test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Alternative {
    TwoSided,
    Greater,
    Less,
}

/// Linear restriction `R theta = rho` with `q` rows in the `(beta, gamma)`
/// ordering.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearRestriction {
    pub r: Vec<[f64; 2]>,
    pub rho: Vec<f64>,
}

impl LinearRestriction {
    /// Single restriction on one parameter.
    pub fn on(which: Parameter, value: f64) -> Self {
        let row = match which {
            Parameter::Beta => [1.0, 0.0],
            Parameter::Gamma => [0.0, 1.0],
        };
        Self { r: vec![row], rho: vec![value] }
    }

    /// Joint restriction pinning both parameters.
    pub fn joint(beta: f64, gamma: f64) -> Self {
        Self { r: vec![[1.0, 0.0], [0.0, 1.0]], rho: vec![beta, gamma] }
    }

    fn validate(&self) -> Result<()> {
        let q = self.rho.len();
        if q == 0 || q > 2 || self.r.len() != q {
            return Err(Error::Config(format!(
                "restriction must have 1 or 2 rows with matching right-hand side, got {} rows and {} values",
                self.r.len(),
                self.rho.len()
            )));
        }
        Ok(())
    }

    /// Whether the restriction forces `beta = 0`.
    fn pins_beta_to_zero(&self) -> bool {
        match self.rho.len() {
            1 => {
                let [rb, rg] = self.r[0];
                rg == 0.0 && rb != 0.0 && self.rho[0] == 0.0
            }
            2 => {
                // solve the 2x2 system for the implied parameter point
                let m = [[self.r[0][0], self.r[0][1]], [self.r[1][0], self.r[1][1]]];
                match invert_2x2(&m) {
                    Some(inv) => {
                        let beta = inv[0][0] * self.rho[0] + inv[0][1] * self.rho[1];
                        beta.abs() < 1e-12
                    }
                    None => false,
                }
            }
            _ => false,
        }
    }

    fn rank_deficient(&self) -> bool {
        match self.rho.len() {
            1 => self.r[0][0] == 0.0 && self.r[0][1] == 0.0,
            2 => {
                let det = self.r[0][0] * self.r[1][1] - self.r[0][1] * self.r[1][0];
                det.abs()
                    <= f64::EPSILON
                        * self
                            .r
                            .iter()
                            .flat_map(|row| row.iter())
                            .fold(0.0_f64, |m, v| m.max(v.abs()))
                            .powi(2)
            }
            _ => true,
        }
    }
}

/// Wald statistic for `R theta = rho` and its chi-square p-value with
/// `q` degrees of freedom.
pub fn wald(fit: &FitResult, spec: &LinearRestriction) -> Result<(f64, f64)> {
    spec.validate()?;
    if spec.rank_deficient() {
        return Err(Error::Config("restriction matrix is rank deficient".into()));
    }
    if spec.pins_beta_to_zero() {
        return Err(Error::BetaZeroNotTestable);
    }
    let minv = invert_2x2(&fit.hessian)
        .ok_or_else(|| Error::Numeric("numerical Hessian is singular".into()))?;
    if !(fit.s2 > 0.0) {
        return Err(Error::Numeric(format!(
            "error-variance estimate must be positive for Wald inference, got {}",
            fit.s2
        )));
    }
    let q = spec.rho.len();
    let dev: Vec<f64> = (0..q)
        .map(|i| {
            spec.r[i][0] * fit.theta.beta + spec.r[i][1] * fit.theta.gamma - spec.rho[i]
        })
        .collect();
    // R M^{-1} R^T, q x q
    let rmr = |i: usize, j: usize| {
        let mut acc = 0.0;
        for a in 0..2 {
            for b in 0..2 {
                acc += spec.r[i][a] * minv[a][b] * spec.r[j][b];
            }
        }
        acc
    };
    let quad = match q {
        1 => {
            let v = rmr(0, 0);
            if !(v > 0.0) {
                return Err(Error::Numeric("restricted covariance is not positive".into()));
            }
            dev[0] * dev[0] / v
        }
        _ => {
            let m = [[rmr(0, 0), rmr(0, 1)], [rmr(1, 0), rmr(1, 1)]];
            let inv = invert_2x2(&m)
                .ok_or_else(|| Error::Numeric("restricted covariance is singular".into()))?;
            let mut acc = 0.0;
            for i in 0..2 {
                for j in 0..2 {
                    acc += dev[i] * inv[i][j] * dev[j];
                }
            }
            acc
        }
    };
    let w = 0.5 * quad / fit.s2;
    if !w.is_finite() {
        return Err(Error::Numeric(format!("Wald statistic is not finite: {w}")));
    }
    let chi = ChiSquared::new(q as f64).expect("valid dof");
    Ok((w, 1.0 - chi.cdf(w)))
}

/// t statistic for a single parameter and its normal p-value under the
/// chosen alternative.
pub fn t_test(
    fit: &FitResult,
    which: Parameter,
    null: f64,
    alternative: Alternative,
) -> Result<(f64, f64)> {
    if which == Parameter::Beta && null == 0.0 {
        return Err(Error::BetaZeroNotTestable);
    }
    let est = match which {
        Parameter::Beta => fit.theta.beta,
        Parameter::Gamma => fit.theta.gamma,
    };
    // a numerically perfect fit drives the standard error to the rounding
    // floor; a deviation inside the estimate's own floating-point
    // resolution is an exact match, not a 0/0 ratio
    let resolution = 1e-12 * (est.abs() + null.abs() + 1.0);
    let t = if (est - null).abs() <= resolution {
        0.0
    } else {
        let se = fit.se(which).ok_or_else(|| {
            Error::Numeric("standard error unavailable (singular Hessian)".into())
        })?;
        if !(se > 0.0) {
            return Err(Error::Numeric(format!("standard error must be positive, got {se}")));
        }
        (est - null) / se
    };
    let norm = Normal::new(0.0, 1.0).expect("standard normal");
    let p = match alternative {
        Alternative::TwoSided => 2.0 * (1.0 - norm.cdf(t.abs())),
        Alternative::Greater => 1.0 - norm.cdf(t),
        Alternative::Less => norm.cdf(t),
    };
    Ok((t, p))
}

/// supF outcome: the statistic, its per-grid profile, and whatever null
/// approximations were attached.
#[derive(Debug, Clone)]
pub struct SupFResult {
    pub f_n: f64,
    pub gamma_hat: f64,
    /// Mean square of the demeaned cells (restricted fit).
    pub sigma_tilde2: f64,
    /// Profiled residual variance at the gain estimate.
    pub sigma_hat2: f64,
    /// `(gamma, F(gamma))` over the grid.
    pub profile: Vec<(f64, f64)>,
    /// Multiplier-bootstrap p-value, when the bootstrap was run.
    pub p_boot: Option<f64>,
    /// Number of bootstrap draws behind `p_boot`.
    pub b: usize,
    /// `(level, critical value)` pairs from the Gaussian-process
    /// tabulation, when attached.
    pub crit: Vec<(f64, f64)>,
}

/// Scaled score rows kept for the multiplier bootstrap: row `g` holds
/// `(z~ * a~(gamma_g)) / sqrt(sigma_tilde2 * sum a~(gamma_g)^2)` over the
/// flattened panel cells.
#[derive(Debug)]
pub struct SupfScores {
    rows: Array2<f64>,
    cells: usize,
}

/// Computes the supF statistic over the grid.
///
/// Both forms of the statistic are produced: the grid supremum of
/// `(n-u) m (sigma~^2 - sigma^2(gamma)) / sigma^2(gamma)` and the closed
/// form at the refined gain estimate; the reported `f_n` is the latter and
/// is checked against the grid supremum.
pub fn supf_statistic(
    panel: &CohortPanel,
    model: &ForecastModel,
    grid: &[f64],
) -> Result<(SupFResult, SupfScores)> {
    if grid.len() < 2 {
        return Err(Error::Config("supF needs a grid of at least two points".into()));
    }
    let obj = ProfiledObjective::new(panel, model)?;
    let cells = obj.cells();
    let sigma_tilde2 = obj.sigma_tilde2();
    let z_scale = panel.z.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if !(obj.szz() > (1e-13 * z_scale).powi(2) * cells as f64) {
        return Err(Error::DegenerateData(
            "the demeaned panel is identically zero; no variance to test".into(),
        ));
    }
    // residual variance below this share of the total is a perfect fit
    let perfect_fit_floor = 1e-12 * obj.szz();
    let zt = obj.demeaned_cells().clone();
    let mut rows = Array2::zeros((grid.len(), cells));
    let mut profile = Vec::with_capacity(grid.len());
    let mut grid_q = Vec::with_capacity(grid.len());
    for (gi, &gamma) in grid.iter().enumerate() {
        let (at, stats) = obj.eval_full(gamma)?;
        let q_star = obj.szz() - stats.saz * stats.saz / stats.saa;
        let sigma_hat2 = q_star / cells as f64;
        if !(q_star > perfect_fit_floor) {
            return Err(Error::PerfectFit { gamma });
        }
        let f = cells as f64 * (sigma_tilde2 - sigma_hat2) / sigma_hat2;
        profile.push((gamma, f));
        grid_q.push((gamma, q_star));
        let scale = 1.0 / (sigma_tilde2 * stats.saa).sqrt();
        for (c, (av, zv)) in at.iter().zip(zt.iter()).enumerate() {
            rows[(gi, c)] = av * zv * scale;
        }
    }
    // refine the gain estimate beyond the grid and take the closed form there
    let search = SearchConfig::default();
    let (gamma_hat, q_hat, _, _) = minimize_q_star(&obj, &grid_q, &search)?;
    let sigma_hat2 = q_hat / cells as f64;
    if !(q_hat > perfect_fit_floor) {
        return Err(Error::PerfectFit { gamma: gamma_hat });
    }
    let closed_form = cells as f64 * (sigma_tilde2 - sigma_hat2) / sigma_hat2;
    let grid_sup = profile.iter().map(|(_, f)| *f).fold(f64::NEG_INFINITY, f64::max);
    // the refinement only lowers the profiled variance, so the closed form
    // dominates the grid supremum up to rounding
    let f_n = closed_form.max(grid_sup);
    let result = SupFResult {
        f_n,
        gamma_hat,
        sigma_tilde2,
        sigma_hat2,
        profile,
        p_boot: None,
        b: 0,
        crit: Vec::new(),
    };
    Ok((result, SupfScores { rows, cells }))
}

/// Multiplier bootstrap for the supF statistic: every draw perturbs the
/// null residuals (the demeaned cells themselves) by i.i.d. standard
/// normal multipliers and takes the grid maximum of the squared normalized
/// scores. Returns the add-one p-value and the draws.
pub fn multiplier_bootstrap_supf(
    scores: &SupfScores,
    f_n: f64,
    b: usize,
    seed: u64,
) -> Result<(f64, Vec<f64>)> {
    if b == 0 {
        return Err(Error::Config("bootstrap needs at least one draw".into()));
    }
    // multipliers as a cells x b matrix, one derived stream per draw so the
    // result does not depend on evaluation order
    let mut eta = Array2::zeros((scores.cells, b));
    for draw in 0..b {
        let mut rng = seed::stream(seed, &[tags::BOOTSTRAP, draw as u64]);
        for c in 0..scores.cells {
            eta[(c, draw)] = StandardNormal.sample(&mut rng);
        }
    }
    let stat_matrix = scores.rows.dot(&eta); // grid x b
    let draws: Vec<f64> = (0..b)
        .map(|j| {
            stat_matrix
                .column(j)
                .iter()
                .map(|s| s * s)
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    let exceed = draws.iter().filter(|d| **d >= f_n).count();
    let p = (1 + exceed) as f64 / (b + 1) as f64;
    Ok((p, draws))
}

/// Full supF test: statistic plus multiplier-bootstrap p-value.
pub fn supf_test(
    panel: &CohortPanel,
    model: &ForecastModel,
    grid: &[f64],
    b: usize,
    seed: u64,
) -> Result<SupFResult> {
    let (mut result, scores) = supf_statistic(panel, model, grid)?;
    let (p, _draws) = multiplier_bootstrap_supf(&scores, result.f_n, b, seed)?;
    result.p_boot = Some(p);
    result.b = b;
    Ok(result)
}

/// Simulates critical values of the supF null distribution: Gaussian draws
/// with covariance kernel `phi` over the grid, maximizing the squared
/// normalized coordinates, and reading off empirical quantiles at the
/// requested levels.
pub fn gp_critical_values(
    grid: &[f64],
    draws: usize,
    levels: &[f64],
    seed: u64,
) -> Result<Vec<(f64, f64)>> {
    if grid.is_empty() {
        return Err(Error::Config("critical-value grid must be non-empty".into()));
    }
    if draws == 0 {
        return Err(Error::Config("need at least one simulation draw".into()));
    }
    for pair in grid.windows(2) {
        if !(pair[0] < pair[1]) {
            return Err(Error::Config("grid points must be strictly increasing".into()));
        }
    }
    if !(grid[0] > 0.5) {
        return Err(Error::Config(format!(
            "grid must lie inside (1/2, inf), got smallest point {}",
            grid[0]
        )));
    }
    for level in levels {
        if !(*level > 0.0 && *level < 1.0) {
            return Err(Error::Config(format!("levels must lie in (0,1), got {level}")));
        }
    }
    let n = grid.len();
    let mut kernel = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            kernel[(i, j)] = theory::phi(grid[i], grid[j])?;
        }
    }
    let diag: Vec<f64> = (0..n).map(|i| kernel[(i, i)]).collect();
    let max_diag = diag.iter().fold(0.0_f64, |m, v| m.max(*v));
    // dense grids make the kernel nearly singular; escalate diagonal jitter
    let mut jitter = 1e-10 * (1.0 + max_diag);
    let jitter_max = 1e-6 * (1.0 + max_diag);
    let chol = loop {
        let mut k = kernel.clone();
        for i in 0..n {
            k[(i, i)] += jitter;
        }
        if let Some(l) = cholesky_lower(&k) {
            break l;
        }
        jitter *= 10.0;
        if jitter > jitter_max {
            return Err(Error::Numeric(format!(
                "kernel factorization failed even with diagonal jitter {jitter:e}"
            )));
        }
    };
    let mut stats = Vec::with_capacity(draws);
    let mut z = vec![0.0_f64; n];
    for draw in 0..draws {
        let mut rng = seed::stream(seed, &[tags::GP_CRITVALS, draw as u64]);
        for v in z.iter_mut() {
            *v = StandardNormal.sample(&mut rng);
        }
        let mut best = f64::NEG_INFINITY;
        for i in 0..n {
            let mut s = 0.0;
            for j in 0..=i {
                s += chol[(i, j)] * z[j];
            }
            let v = s * s / diag[i];
            if v > best {
                best = v;
            }
        }
        stats.push(best);
    }
    stats.sort_by(|a, b| a.partial_cmp(b).expect("finite draws"));
    let out = levels
        .iter()
        .map(|&level| {
            let idx = (((1.0 - level) * draws as f64).ceil() as usize)
                .clamp(1, draws)
                - 1;
            (level, stats[idx])
        })
        .collect();
    Ok(out)
}
