//! Cohort panel data model, demeaning transforms, data generation, CSV I/O.
//!
//! A panel observes `m = u - l + 1` age groups at every period
//! `t = u+1, ..., n`: cell `(t, age)` holds the survey expectation of the
//! cohort born in period `s = t - age`. The accompanying macro series
//! `y_1, ..., y_n` (and optional regressor) is what the cohorts learned
//! from. Demeaning by period removes time fixed effects; demeaning by
//! cohort removes cohort fixed effects.

use ndarray::{Array2, Axis};
use rand::{Rng, RngExt};
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::learning::{forecast_panel, ForecastModel, ForecastTiming, GainFamily, Plm};
use crate::seed::{self, tags};

/// Rectangular cohort panel with its macro series.
#[derive(Debug, Clone, PartialEq)]
pub struct CohortPanel {
    pub n: usize,
    pub l: usize,
    pub u: usize,
    /// Survey expectations, `(n-u) x m`, rows `t = u+1..=n`, columns ages `l..=u`.
    pub z: Array2<f64>,
    /// Macro series; `y[i]` is the value of period `i + 1`.
    pub y: Vec<f64>,
    /// Optional regressor series, indexed like `y`.
    pub x: Option<Vec<f64>>,
}

impl CohortPanel {
    pub fn new(l: usize, u: usize, z: Array2<f64>, y: Vec<f64>, x: Option<Vec<f64>>) -> Result<Self> {
        let n = y.len();
        if !(1 <= l && l < u && u < n) {
            return Err(Error::Config(format!(
                "age bounds must satisfy 1 <= l < u < n, got l={l}, u={u}, n={n}"
            )));
        }
        let m = u - l + 1;
        if z.nrows() != n - u || z.ncols() != m {
            return Err(Error::Config(format!(
                "panel must be {} x {m}, got {} x {}",
                n - u,
                z.nrows(),
                z.ncols()
            )));
        }
        if let Some(xs) = &x {
            if xs.len() != n {
                return Err(Error::Config(format!(
                    "regressor series has length {}, expected {n}",
                    xs.len()
                )));
            }
        }
        Ok(Self { n, l, u, z, y, x })
    }

    /// Number of cohorts observed per period.
    pub fn m(&self) -> usize {
        self.u - self.l + 1
    }

    /// Total number of panel cells, `(n - u) m`.
    pub fn cells(&self) -> usize {
        (self.n - self.u) * self.m()
    }
}

/// Subtracts the cross-sectional mean over ages from every period row.
pub fn demean_time(panel: &Array2<f64>) -> Array2<f64> {
    let mut out = panel.clone();
    for mut row in out.rows_mut() {
        let mean = row.sum() / row.len() as f64;
        row.mapv_inplace(|v| v - mean);
    }
    out
}

/// Subtracts the time mean from every cohort column.
pub fn demean_cohort(panel: &Array2<f64>) -> Array2<f64> {
    let mut out = panel.clone();
    for mut col in out.axis_iter_mut(Axis(1)) {
        let mean = col.sum() / col.len() as f64;
        col.mapv_inplace(|v| v - mean);
    }
    out
}

/// Regressor scenario of the simulation study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    /// Constant regressor; the scalar recursion applies.
    S1,
    /// Strictly exogenous AR(1) regressor.
    S2,
    /// Weakly exogenous regressor, the lagged macro series.
    S3,
}

impl Scenario {
    pub fn id(self) -> u64 {
        match self {
            Scenario::S1 => 1,
            Scenario::S2 => 2,
            Scenario::S3 => 3,
        }
    }
}

/// Data-generating process configuration.
///
/// The default sample-size scheme is `n = 150 k`, `u = 75 k`, `l = 25`;
/// all fields may be overridden.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DgpConfig {
    pub scenario: Scenario,
    pub n: usize,
    pub u: usize,
    pub l: usize,
    pub beta0: f64,
    pub gamma0: f64,
    pub mu_y: f64,
    pub phi_y: f64,
    pub mu_x: f64,
    pub phi_x: f64,
    pub gain: GainFamily,
    /// Standard deviation of the cell noise; zero gives a noiseless panel.
    pub eps_sd: f64,
    pub seed: u64,
}

impl DgpConfig {
    /// Study defaults at scale factor `k`.
    pub fn scaled(scenario: Scenario, k: usize) -> Self {
        Self {
            scenario,
            n: 150 * k,
            u: 75 * k,
            l: 25,
            beta0: 0.6,
            gamma0: 3.0,
            mu_y: 0.0,
            phi_y: 0.5,
            mu_x: 0.0,
            phi_x: 0.5,
            gain: GainFamily::Baseline,
            eps_sd: 1.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(1 <= self.l && self.l < self.u && self.u < self.n) {
            return Err(Error::Config(format!(
                "age bounds must satisfy 1 <= l < u < n, got l={}, u={}, n={}",
                self.l, self.u, self.n
            )));
        }
        if self.phi_y.abs() >= 1.0 || self.phi_x.abs() >= 1.0 {
            return Err(Error::Config(format!(
                "AR(1) coefficients must satisfy |phi| < 1, got phi_y={}, phi_x={}",
                self.phi_y, self.phi_x
            )));
        }
        if !(self.gamma0 > 0.0) {
            return Err(Error::Config(format!("gamma0 must be positive, got {}", self.gamma0)));
        }
        if self.eps_sd < 0.0 {
            return Err(Error::Config(format!("eps_sd must be nonnegative, got {}", self.eps_sd)));
        }
        Ok(())
    }
}

/// Stationary AR(1) path with unit marginal variance:
/// `x_t = (1-ar) mu + ar x_{t-1} + sqrt(1-ar^2) w_t`, `x_0 ~ N(mu, 1)`.
///
/// Returns the pre-sample draw `x_0` and the path `x_1..=x_n`.
pub fn simulate_ar1<R: Rng>(rng: &mut R, n: usize, mu: f64, ar: f64) -> (f64, Vec<f64>) {
    let x0 = mu + rng.sample::<f64, _>(StandardNormal);
    let innov_sd = (1.0 - ar * ar).sqrt();
    let mut path = Vec::with_capacity(n);
    let mut prev = x0;
    for _ in 0..n {
        let v: f64 = rng.sample(StandardNormal);
        prev = (1.0 - ar) * mu + ar * prev + innov_sd * v;
        path.push(prev);
    }
    (x0, path)
}

/// Simulates a cohort panel: macro series, per-scenario regressor, beliefs
/// generated by the scalar-regressor learning recursion, and cells
/// `z_{t,s} = alpha_t + beta0 a_{t,s} + eps` with period effects
/// `alpha_t ~ UNIF[0,1]`. Fully reproducible from the seed.
pub fn simulate_dgp(cfg: &DgpConfig) -> Result<CohortPanel> {
    cfg.validate()?;
    let mut rng = seed::stream(cfg.seed, &[tags::DGP]);
    let (y0, y) = simulate_ar1(&mut rng, cfg.n, cfg.mu_y, cfg.phi_y);
    let x = match cfg.scenario {
        Scenario::S1 => None,
        Scenario::S2 => Some(simulate_ar1(&mut rng, cfg.n, cfg.mu_x, cfg.phi_x).1),
        Scenario::S3 => {
            // x_t = y_{t-1}; the stationary pre-sample draw supplies x_1
            let mut lagged = Vec::with_capacity(cfg.n);
            lagged.push(y0);
            lagged.extend_from_slice(&y[..cfg.n - 1]);
            Some(lagged)
        }
    };
    let ones;
    let x_beliefs: &[f64] = match &x {
        Some(series) => series,
        None => {
            ones = vec![1.0; cfg.n];
            &ones
        }
    };
    let model = ForecastModel::new(Plm::Regression, cfg.gain, ForecastTiming::OneStep);
    let beliefs = forecast_panel(&model, cfg.gamma0, &y, Some(x_beliefs), cfg.l, cfg.u)?;

    let uniform = Uniform::new(0.0, 1.0).expect("valid uniform bounds");
    let rows = cfg.n - cfg.u;
    let m = cfg.u - cfg.l + 1;
    let alpha: Vec<f64> = (0..rows).map(|_| uniform.sample(&mut rng)).collect();
    let mut z = Array2::zeros((rows, m));
    for t in 0..rows {
        for a in 0..m {
            let eps: f64 = rng.sample(StandardNormal);
            z[(t, a)] = alpha[t] + cfg.beta0 * beliefs[(t, a)] + cfg.eps_sd * eps;
        }
    }
    CohortPanel::new(cfg.l, cfg.u, z, y, x)
}

fn format_float(v: f64) -> String {
    // shortest representation that parses back to the same bits
    format!("{v}")
}

/// Writes the panel and macro CSV files (`t,s,z` and `t,y[,x]`).
pub fn write_panel_csv(panel: &CohortPanel, panel_path: &Path, macro_path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(panel_path)?;
    w.write_record(["t", "s", "z"])?;
    for t in (panel.u + 1)..=panel.n {
        for s in (t - panel.u)..=(t - panel.l) {
            let age = t - s;
            let v = panel.z[(t - panel.u - 1, age - panel.l)];
            w.write_record([t.to_string(), s.to_string(), format_float(v)])?;
        }
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(macro_path)?;
    match &panel.x {
        Some(x) => {
            w.write_record(["t", "y", "x"])?;
            for t in 1..=panel.n {
                w.write_record([t.to_string(), format_float(panel.y[t - 1]), format_float(x[t - 1])])?;
            }
        }
        None => {
            w.write_record(["t", "y"])?;
            for t in 1..=panel.n {
                w.write_record([t.to_string(), format_float(panel.y[t - 1])])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn parse_int(field: &str, row: usize, file: &Path, name: &str) -> Result<usize> {
    field.trim().parse::<usize>().map_err(|_| {
        Error::Format(format!(
            "{}: data row {row}: column `{name}` must be a positive integer, got `{field}`",
            file.display()
        ))
    })
}

fn parse_float(field: &str, row: usize, file: &Path, name: &str) -> Result<f64> {
    field.trim().parse::<f64>().map_err(|_| {
        Error::Format(format!(
            "{}: data row {row}: column `{name}` must be a real number, got `{field}`",
            file.display()
        ))
    })
}

/// Loads a panel from a long-format CSV (`t,s,z`) plus its macro CSV
/// (`t,y` or `t,y,x`). The panel must form a complete rectangle over a
/// contiguous age range; the first offending cell is named otherwise.
pub fn load_panel_csv(panel_path: &Path, macro_path: &Path) -> Result<CohortPanel> {
    // macro series first; it pins n
    let mut r = csv::Reader::from_path(macro_path)?;
    let headers: Vec<String> = r.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let has_x = match headers.iter().map(String::as_str).collect::<Vec<_>>()[..] {
        ["t", "y"] => false,
        ["t", "y", "x"] => true,
        _ => {
            return Err(Error::Format(format!(
                "{}: header must be `t,y` or `t,y,x`, got `{}`",
                macro_path.display(),
                headers.join(",")
            )));
        }
    };
    let mut macro_rows: BTreeMap<usize, (f64, Option<f64>)> = BTreeMap::new();
    for (idx, rec) in r.records().enumerate() {
        let rec = rec?;
        let row = idx + 1;
        let t = parse_int(&rec[0], row, macro_path, "t")?;
        let y = parse_float(&rec[1], row, macro_path, "y")?;
        let x = if has_x {
            Some(parse_float(&rec[2], row, macro_path, "x")?)
        } else {
            None
        };
        if macro_rows.insert(t, (y, x)).is_some() {
            return Err(Error::Format(format!(
                "{}: duplicate period t={t}",
                macro_path.display()
            )));
        }
    }
    let n = macro_rows.len();
    if n == 0 {
        return Err(Error::Format(format!("{}: no data rows", macro_path.display())));
    }
    let mut y = Vec::with_capacity(n);
    let mut x = if has_x { Some(Vec::with_capacity(n)) } else { None };
    for t in 1..=n {
        match macro_rows.get(&t) {
            Some((yv, xv)) => {
                y.push(*yv);
                if let (Some(xs), Some(xv)) = (&mut x, xv) {
                    xs.push(*xv);
                }
            }
            None => {
                return Err(Error::Format(format!(
                    "{}: periods must cover 1..={n} with no gaps; t={t} is missing",
                    macro_path.display()
                )));
            }
        }
    }

    // panel cells
    let mut r = csv::Reader::from_path(panel_path)?;
    let headers: Vec<String> = r.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if headers.iter().map(String::as_str).collect::<Vec<_>>()[..] != ["t", "s", "z"] {
        return Err(Error::Format(format!(
            "{}: header must be `t,s,z`, got `{}`",
            panel_path.display(),
            headers.join(",")
        )));
    }
    let mut cells: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    let mut age_min = usize::MAX;
    let mut age_max = 0usize;
    let mut t_min = usize::MAX;
    let mut t_max = 0usize;
    for (idx, rec) in r.records().enumerate() {
        let rec = rec?;
        let row = idx + 1;
        let t = parse_int(&rec[0], row, panel_path, "t")?;
        let s = parse_int(&rec[1], row, panel_path, "s")?;
        let z = parse_float(&rec[2], row, panel_path, "z")?;
        if s >= t {
            return Err(Error::Format(format!(
                "{}: data row {row}: birth period s={s} must precede t={t}",
                panel_path.display()
            )));
        }
        if t > n {
            return Err(Error::Format(format!(
                "{}: data row {row}: t={t} exceeds the macro sample length n={n}",
                panel_path.display()
            )));
        }
        if cells.insert((t, s), z).is_some() {
            return Err(Error::Format(format!(
                "{}: duplicate cell at t={t}, s={s}",
                panel_path.display()
            )));
        }
        let age = t - s;
        age_min = age_min.min(age);
        age_max = age_max.max(age);
        t_min = t_min.min(t);
        t_max = t_max.max(t);
    }
    if cells.is_empty() {
        return Err(Error::Format(format!("{}: no data rows", panel_path.display())));
    }
    let (l, u) = (age_min, age_max);
    if l >= u {
        return Err(Error::Format(format!(
            "{}: the panel must observe at least two age groups, found only age {l}",
            panel_path.display()
        )));
    }
    if t_min != u + 1 {
        return Err(Error::Format(format!(
            "{}: panel rows must start at t = u+1 = {}, found first row t={t_min}",
            panel_path.display(),
            u + 1
        )));
    }
    if t_max != n {
        return Err(Error::Format(format!(
            "{}: panel rows must end at t = n = {n}, found last row t={t_max}",
            panel_path.display()
        )));
    }
    let m = u - l + 1;
    let mut z = Array2::zeros((n - u, m));
    for t in (u + 1)..=n {
        for age in l..=u {
            let s = t - age;
            match cells.get(&(t, s)) {
                Some(v) => z[(t - u - 1, age - l)] = *v,
                None => {
                    return Err(Error::Format(format!(
                        "incomplete rectangle at t={t}, s={s}"
                    )));
                }
            }
        }
    }
    if cells.len() != (n - u) * m {
        // all rectangle cells were present, so something lies outside it
        let (&(t, s), _) = cells
            .iter()
            .find(|((t, s), _)| {
                let age = t - s;
                age < l || age > u
            })
            .expect("cell count mismatch implies an out-of-range cell");
        return Err(Error::Format(format!(
            "{}: cell at t={t}, s={s} falls outside the age rectangle {l}..={u}",
            panel_path.display()
        )));
    }
    CohortPanel::new(l, u, z, y, x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn demean_time_examples() {
        let m = array![[1.0, 2.0, 3.0]];
        let d = demean_time(&m);
        assert_eq!(d, array![[-1.0, 0.0, 1.0]]);

        let c = Array2::from_elem((4, 3), 7.5);
        assert!(demean_time(&c).iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn demean_time_is_invertible_with_row_means() {
        let m = array![[1.0, 2.0, 4.0], [0.5, -1.0, 3.5]];
        let d = demean_time(&m);
        for (i, row) in m.rows().into_iter().enumerate() {
            let mean = row.sum() / row.len() as f64;
            for (j, v) in row.iter().enumerate() {
                assert_abs_diff_eq!(d[(i, j)] + mean, *v, epsilon = 1e-15);
            }
        }
        for row in d.rows() {
            assert!(row.sum().abs() < 1e-12 * 3.0 * 4.0);
        }
    }

    #[test]
    fn demean_cohort_examples() {
        let m = array![[2.0], [4.0]];
        assert_eq!(demean_cohort(&m), array![[-1.0], [1.0]]);

        let c = Array2::from_elem((3, 2), -2.0);
        assert!(demean_cohort(&c).iter().all(|v| v.abs() < 1e-12));

        let m = array![[1.0, 5.0], [2.0, -3.0], [6.0, 0.0]];
        let once = demean_cohort(&m);
        let twice = demean_cohort(&once);
        assert_eq!(once, twice);
        for col in once.axis_iter(Axis(1)) {
            assert!(col.sum().abs() < 1e-12);
        }
    }

    #[test]
    fn ar1_with_zero_coefficient_has_unit_variance() {
        let mut rng = seed::stream(123, &[1]);
        let (_, path) = simulate_ar1(&mut rng, 100_000, 0.0, 0.0);
        let mean = path.iter().sum::<f64>() / path.len() as f64;
        let var = path.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / path.len() as f64;
        assert!((var - 1.0).abs() < 0.02, "variance {var}");
    }

    #[test]
    fn dgp_is_deterministic_in_the_seed() {
        let mut cfg = DgpConfig::scaled(Scenario::S2, 1);
        cfg.seed = 99;
        let a = simulate_dgp(&cfg).unwrap();
        let b = simulate_dgp(&cfg).unwrap();
        assert_eq!(a.z, b.z);
        assert_eq!(a.y, b.y);
        assert_eq!(a.x, b.x);
        cfg.seed = 100;
        let c = simulate_dgp(&cfg).unwrap();
        assert_ne!(a.z, c.z);
    }

    #[test]
    fn dgp_s3_regressor_is_lagged_macro() {
        let mut cfg = DgpConfig::scaled(Scenario::S3, 1);
        cfg.seed = 7;
        let p = simulate_dgp(&cfg).unwrap();
        let x = p.x.as_ref().unwrap();
        for t in 2..=p.n {
            assert_eq!(x[t - 1], p.y[t - 2]);
        }
    }

    #[test]
    fn dgp_without_signal_leaves_demeaned_noise() {
        // beta0 = 0: cells are alpha_t + eps, so the demeaned mean square is
        // (1 - 1/m) exactly in expectation
        let mut cfg = DgpConfig::scaled(Scenario::S1, 1);
        cfg.beta0 = 0.0;
        cfg.seed = 2024;
        let p = simulate_dgp(&cfg).unwrap();
        let zt = demean_time(&p.z);
        let msq = zt.iter().map(|v| v * v).sum::<f64>() / p.cells() as f64;
        let expect = 1.0 - 1.0 / p.m() as f64;
        assert!((msq - expect).abs() < 0.04, "mean square {msq} vs {expect}");
    }

    #[test]
    fn dgp_rejects_explosive_ar() {
        let mut cfg = DgpConfig::scaled(Scenario::S2, 1);
        cfg.phi_x = 1.0;
        assert!(simulate_dgp(&cfg).is_err());
    }

    #[test]
    fn csv_roundtrip_is_lossless() {
        let dir = tempfile::tempdir().unwrap();
        let panel_path = dir.path().join("panel.csv");
        let macro_path = dir.path().join("macro.csv");
        let mut cfg = DgpConfig::scaled(Scenario::S2, 1);
        cfg.seed = 5;
        let p = simulate_dgp(&cfg).unwrap();
        write_panel_csv(&p, &panel_path, &macro_path).unwrap();
        let q = load_panel_csv(&panel_path, &macro_path).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn csv_missing_cell_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let panel_path = dir.path().join("panel.csv");
        let macro_path = dir.path().join("macro.csv");
        std::fs::write(&macro_path, "t,y\n1,0.1\n2,0.2\n3,0.3\n4,0.4\n5,0.5\n").unwrap();
        // ages 1..=2, t = 3..=5, with (4, s=2) removed
        std::fs::write(
            &panel_path,
            "t,s,z\n3,1,1\n3,2,2\n4,3,4\n5,3,5\n5,4,6\n",
        )
        .unwrap();
        let err = load_panel_csv(&panel_path, &macro_path).unwrap_err();
        assert!(
            err.to_string().contains("incomplete rectangle at t=4, s=2"),
            "unexpected error: {err}"
        );
    }

    #[test]
    fn csv_header_mismatch_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let panel_path = dir.path().join("panel.csv");
        let macro_path = dir.path().join("macro.csv");
        std::fs::write(&macro_path, "t,y\n1,0.0\n2,0.0\n3,0.0\n").unwrap();
        std::fs::write(&panel_path, "t,cohort,z\n3,1,0.0\n").unwrap();
        let err = load_panel_csv(&panel_path, &macro_path).unwrap_err();
        assert!(err.to_string().contains("header"), "unexpected error: {err}");
    }

    #[test]
    fn csv_duplicate_cell_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let panel_path = dir.path().join("panel.csv");
        let macro_path = dir.path().join("macro.csv");
        std::fs::write(&macro_path, "t,y\n1,0.1\n2,0.2\n3,0.3\n").unwrap();
        std::fs::write(&panel_path, "t,s,z\n3,1,1\n3,1,2\n3,2,3\n").unwrap();
        let err = load_panel_csv(&panel_path, &macro_path).unwrap_err();
        assert!(err.to_string().contains("duplicate cell"), "unexpected error: {err}");
    }
}
