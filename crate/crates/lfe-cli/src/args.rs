//! Flag definitions and config-file merging.
//!
//! Every option resolves as: explicit flag, else config-file key of the
//! same name, else built-in default. The resolved configuration is always
//! echoed into the command's output for provenance.

use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::{Path, PathBuf};

use lfe_core::learning::{ForecastTiming, GainFamily, Plm};
use lfe_core::panel::Scenario;

use crate::CliError;

#[derive(Parser)]
#[command(
    name = "lfe",
    version,
    about = "Cohort panels with learning from experience: simulation, estimation, inference"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Simulate a cohort panel and write it as CSV files.
    Simulate(SimulateArgs),
    /// Estimate the sensitivity and gain parameters from panel CSVs.
    Estimate(EstimateArgs),
    /// Run a hypothesis test (t, Wald, or supF for beta = 0).
    Test(TestArgs),
    /// Tabulate supF critical values from the limiting Gaussian process.
    Critvals(CritvalsArgs),
    /// Run the Monte Carlo study and write its summary table.
    Study(StudyArgs),
    /// Tabulate the closed-form limit quantities over a gain grid.
    Theory(TheoryArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ScenarioArg {
    S1,
    S2,
    S3,
}

impl ScenarioArg {
    pub fn to_core(self) -> Scenario {
        match self {
            ScenarioArg::S1 => Scenario::S1,
            ScenarioArg::S2 => Scenario::S2,
            ScenarioArg::S3 => Scenario::S3,
        }
    }

    pub fn parse(s: &str) -> Result<Self, CliError> {
        match s.to_ascii_lowercase().as_str() {
            "s1" => Ok(ScenarioArg::S1),
            "s2" => Ok(ScenarioArg::S2),
            "s3" => Ok(ScenarioArg::S3),
            other => Err(CliError::input(format!("unknown scenario `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum GainArg {
    Baseline,
    CodeVariant,
}

impl GainArg {
    pub fn to_core(self) -> GainFamily {
        match self {
            GainArg::Baseline => GainFamily::Baseline,
            GainArg::CodeVariant => GainFamily::CodeVariant,
        }
    }

    pub fn parse(s: &str) -> Result<Self, CliError> {
        match s.to_ascii_lowercase().as_str() {
            "baseline" => Ok(GainArg::Baseline),
            "code-variant" => Ok(GainArg::CodeVariant),
            other => Err(CliError::input(format!("unknown gain family `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum PlmArg {
    Constant,
    Regression,
    Ar1,
}

impl PlmArg {
    pub fn to_core(self) -> Plm {
        match self {
            PlmArg::Constant => Plm::Constant,
            PlmArg::Regression => Plm::Regression,
            PlmArg::Ar1 => Plm::Ar1,
        }
    }

    pub fn parse(s: &str) -> Result<Self, CliError> {
        match s.to_ascii_lowercase().as_str() {
            "constant" => Ok(PlmArg::Constant),
            "regression" => Ok(PlmArg::Regression),
            "ar1" => Ok(PlmArg::Ar1),
            other => Err(CliError::input(format!("unknown perceived law of motion `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum TimingArg {
    OneStep,
    EndOfPeriod,
}

impl TimingArg {
    pub fn to_core(self) -> ForecastTiming {
        match self {
            TimingArg::OneStep => ForecastTiming::OneStep,
            TimingArg::EndOfPeriod => ForecastTiming::EndOfPeriod,
        }
    }

    pub fn parse(s: &str) -> Result<Self, CliError> {
        match s.to_ascii_lowercase().as_str() {
            "one-step" => Ok(TimingArg::OneStep),
            "end-of-period" => Ok(TimingArg::EndOfPeriod),
            other => Err(CliError::input(format!("unknown forecast timing `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum AlternativeArg {
    TwoSided,
    Greater,
    Less,
}

/// Options shared by every subcommand.
#[derive(Args, Debug, Clone)]
pub struct CommonArgs {
    /// TOML config file; flags override its keys.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Master seed; drawn from the operating system and recorded if absent.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker-thread cap for parallel sections.
    #[arg(long, value_name = "N")]
    pub threads: Option<usize>,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Regressor scenario.
    #[arg(long, value_enum)]
    pub scenario: Option<ScenarioArg>,
    /// Scale factor: n = 150k, u = 75k, l = 25.
    #[arg(short, long)]
    pub k: Option<usize>,
    /// Sample length override.
    #[arg(long)]
    pub n: Option<usize>,
    /// Oldest age override.
    #[arg(long)]
    pub u: Option<usize>,
    /// Youngest age override.
    #[arg(long)]
    pub l: Option<usize>,
    /// True gain parameter.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// True sensitivity parameter.
    #[arg(long)]
    pub beta: Option<f64>,
    /// Gain-sequence family.
    #[arg(long, value_enum)]
    pub gain: Option<GainArg>,
    #[arg(long)]
    pub mu_y: Option<f64>,
    #[arg(long)]
    pub phi_y: Option<f64>,
    #[arg(long)]
    pub mu_x: Option<f64>,
    #[arg(long)]
    pub phi_x: Option<f64>,
    /// Cell-noise standard deviation (0 gives a noiseless panel).
    #[arg(long)]
    pub eps_sd: Option<f64>,
    /// Output directory for panel.csv, macro.csv, simulate.json.
    #[arg(short, long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

/// Model and search options shared by `estimate` and `test`.
#[derive(Args, Debug)]
pub struct ModelArgs {
    /// Long-format panel CSV (t,s,z).
    #[arg(long, value_name = "FILE")]
    pub panel: Option<PathBuf>,
    /// Macro CSV (t,y or t,y,x).
    #[arg(long = "macro", value_name = "FILE")]
    pub macro_csv: Option<PathBuf>,
    /// Perceived law of motion.
    #[arg(long, value_enum)]
    pub plm: Option<PlmArg>,
    /// Gain-sequence family.
    #[arg(long, value_enum)]
    pub gain: Option<GainArg>,
    /// Forecast timing convention.
    #[arg(long, value_enum)]
    pub timing: Option<TimingArg>,
    /// Lower gain bound.
    #[arg(long)]
    pub gamma_min: Option<f64>,
    /// Upper gain bound.
    #[arg(long)]
    pub gamma_max: Option<f64>,
    /// Coarse-grid size of the profile search.
    #[arg(long)]
    pub grid_points: Option<usize>,
    /// Golden-section tolerance on gamma.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Numerical-Hessian step; defaults to (n ln n)^(-1/4).
    #[arg(long)]
    pub hessian_step: Option<f64>,
}

#[derive(Args, Debug)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Output JSON file; stdout if absent.
    #[arg(short, long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TestArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Null hypothesis: `beta=0`, `gamma=3`, `gamma<=1`, or
    /// `beta=0.6,gamma=3` for a joint Wald restriction.
    #[arg(long, value_name = "RESTRICTION")]
    pub null: Option<String>,
    /// Alternative for one-parameter t tests.
    #[arg(long, value_enum)]
    pub alternative: Option<AlternativeArg>,
    /// Bootstrap draws for the supF test.
    #[arg(short = 'B', long)]
    pub bootstrap: Option<usize>,
    /// Grid size of the supF profile.
    #[arg(long)]
    pub supf_grid_points: Option<usize>,
    /// Simulation draws behind the attached critical values.
    #[arg(long)]
    pub gp_draws: Option<usize>,
    /// Comma-separated significance levels for critical values.
    #[arg(long)]
    pub levels: Option<String>,
    /// Output JSON file; stdout if absent.
    #[arg(short, long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct CritvalsArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Gain grid as `lo:hi`; `1:1` degenerates to a single point.
    #[arg(long, value_name = "LO:HI")]
    pub grid: Option<String>,
    /// Number of grid points.
    #[arg(long)]
    pub grid_points: Option<usize>,
    /// Number of Gaussian-process draws.
    #[arg(long)]
    pub draws: Option<usize>,
    /// Comma-separated significance levels.
    #[arg(long)]
    pub levels: Option<String>,
    /// Output CSV file; stdout if absent.
    #[arg(short, long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct StudyArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, value_enum)]
    pub scenario: Option<ScenarioArg>,
    /// Comma-separated scale factors, e.g. `2,3,4`.
    #[arg(short, long, value_name = "LIST")]
    pub k: Option<String>,
    /// Monte Carlo replications per scale factor.
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long, value_enum)]
    pub gain: Option<GainArg>,
    #[arg(long)]
    pub mu_y: Option<f64>,
    #[arg(long)]
    pub phi_y: Option<f64>,
    #[arg(long)]
    pub mu_x: Option<f64>,
    #[arg(long)]
    pub phi_x: Option<f64>,
    #[arg(long)]
    pub eps_sd: Option<f64>,
    /// Nominal size of every test decision.
    #[arg(long)]
    pub level: Option<f64>,
    /// Bootstrap draws for supF decisions.
    #[arg(short = 'B', long)]
    pub bootstrap: Option<usize>,
    /// Grid size of the supF profile.
    #[arg(long)]
    pub supf_grid_points: Option<usize>,
    /// Coarse-grid size of the profile search.
    #[arg(long)]
    pub grid_points: Option<usize>,
    /// Skip the t tests.
    #[arg(long)]
    pub skip_t: bool,
    /// Skip the supF test.
    #[arg(long)]
    pub skip_supf: bool,
    /// Also write the full per-replication records as JSON.
    #[arg(long)]
    pub records: bool,
    /// Output directory for summary.csv and study.json.
    #[arg(short, long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TheoryArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Gain grid as `lo:hi`.
    #[arg(long, value_name = "LO:HI")]
    pub grid: Option<String>,
    /// Number of grid points.
    #[arg(long)]
    pub grid_points: Option<usize>,
    /// Sensitivity parameter for the limiting-Hessian columns.
    #[arg(long)]
    pub beta: Option<f64>,
    /// Long-run variance entering the limiting Hessian.
    #[arg(long)]
    pub omega2: Option<f64>,
    /// Age-range factor entering the limiting Hessian.
    #[arg(long)]
    pub lambda2: Option<f64>,
    /// Output CSV file; stdout if absent.
    #[arg(short, long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

/// Key-value view of the optional TOML config file.
pub struct FileConfig {
    table: toml::Table,
    path: Option<PathBuf>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            None => Ok(Self { table: toml::Table::new(), path: None }),
            Some(p) => {
                let body = std::fs::read_to_string(p).map_err(|e| {
                    CliError::input(format!("cannot read config {}: {e}", p.display()))
                })?;
                let table: toml::Table = body.parse().map_err(|e| {
                    CliError::input(format!("config {} is not valid TOML: {e}", p.display()))
                })?;
                Ok(Self { table, path: Some(p.to_path_buf()) })
            }
        }
    }

    fn context(&self, key: &str) -> String {
        match &self.path {
            Some(p) => format!("config {} key `{key}`", p.display()),
            None => format!("config key `{key}`"),
        }
    }

    pub fn f64(&self, key: &str) -> Result<Option<f64>, CliError> {
        match self.table.get(key) {
            None => Ok(None),
            Some(toml::Value::Float(v)) => Ok(Some(*v)),
            Some(toml::Value::Integer(v)) => Ok(Some(*v as f64)),
            Some(_) => Err(CliError::input(format!("{} must be a number", self.context(key)))),
        }
    }

    pub fn usize(&self, key: &str) -> Result<Option<usize>, CliError> {
        match self.table.get(key) {
            None => Ok(None),
            Some(toml::Value::Integer(v)) if *v >= 0 => Ok(Some(*v as usize)),
            Some(_) => {
                Err(CliError::input(format!("{} must be a nonnegative integer", self.context(key))))
            }
        }
    }

    pub fn u64(&self, key: &str) -> Result<Option<u64>, CliError> {
        match self.table.get(key) {
            None => Ok(None),
            Some(toml::Value::Integer(v)) if *v >= 0 => Ok(Some(*v as u64)),
            Some(_) => {
                Err(CliError::input(format!("{} must be a nonnegative integer", self.context(key))))
            }
        }
    }

    pub fn string(&self, key: &str) -> Result<Option<String>, CliError> {
        match self.table.get(key) {
            None => Ok(None),
            Some(toml::Value::String(v)) => Ok(Some(v.clone())),
            Some(_) => Err(CliError::input(format!("{} must be a string", self.context(key)))),
        }
    }

    pub fn bool(&self, key: &str) -> Result<Option<bool>, CliError> {
        match self.table.get(key) {
            None => Ok(None),
            Some(toml::Value::Boolean(v)) => Ok(Some(*v)),
            Some(_) => Err(CliError::input(format!("{} must be a boolean", self.context(key)))),
        }
    }

    pub fn path(&self, key: &str) -> Result<Option<PathBuf>, CliError> {
        Ok(self.string(key)?.map(PathBuf::from))
    }
}

/// Comma-separated list of levels, validated to lie in (0, 1).
pub fn parse_levels(raw: &str) -> Result<Vec<f64>, CliError> {
    let mut out = Vec::new();
    for part in raw.split(',') {
        let v: f64 = part
            .trim()
            .parse()
            .map_err(|_| CliError::input(format!("level `{part}` is not a number")))?;
        if !(v > 0.0 && v < 1.0) {
            return Err(CliError::input(format!("level {v} must lie in (0, 1)")));
        }
        out.push(v);
    }
    if out.is_empty() {
        return Err(CliError::input("at least one level is required".into()));
    }
    Ok(out)
}

/// Comma-separated list of positive integers.
pub fn parse_usize_list(raw: &str) -> Result<Vec<usize>, CliError> {
    let mut out = Vec::new();
    for part in raw.split(',') {
        let v: usize = part
            .trim()
            .parse()
            .map_err(|_| CliError::input(format!("`{part}` is not a positive integer")))?;
        out.push(v);
    }
    if out.is_empty() {
        return Err(CliError::input("at least one entry is required".into()));
    }
    Ok(out)
}

/// Grid specification `lo:hi`.
pub fn parse_grid_spec(raw: &str) -> Result<(f64, f64), CliError> {
    let parts: Vec<&str> = raw.split(':').collect();
    if parts.len() != 2 {
        return Err(CliError::input(format!("grid `{raw}` must have the form lo:hi")));
    }
    let lo: f64 = parts[0]
        .trim()
        .parse()
        .map_err(|_| CliError::input(format!("grid bound `{}` is not a number", parts[0])))?;
    let hi: f64 = parts[1]
        .trim()
        .parse()
        .map_err(|_| CliError::input(format!("grid bound `{}` is not a number", parts[1])))?;
    if !(lo > 0.5) {
        return Err(CliError::input(format!(
            "grid lower bound {lo} must exceed 1/2 (the kernel's domain)"
        )));
    }
    if hi < lo {
        return Err(CliError::input(format!("grid `{raw}` has hi < lo")));
    }
    Ok((lo, hi))
}
