//! `lfe`: estimation and inference for cohort panels with learning from
//! experience.

mod args;
mod commands;

use clap::Parser;
use std::fmt;
use std::process::ExitCode;

use args::{Cli, Command};

/// Command-level error with the exit code it maps to: input and format
/// problems exit 2, numerical and estimation failures exit 1.
#[derive(Debug)]
pub enum CliError {
    Input(String),
    Numeric(String),
}

impl CliError {
    pub fn input(msg: String) -> Self {
        CliError::Input(msg)
    }

    fn code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::Numeric(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Input(msg) | CliError::Numeric(msg) => write!(f, "{msg}"),
        }
    }
}

impl From<lfe_core::Error> for CliError {
    fn from(e: lfe_core::Error) -> Self {
        use lfe_core::Error as E;
        match e {
            E::Format(_) | E::Config(_) | E::Domain(_) | E::Io(_) | E::Csv(_)
            | E::BetaZeroNotTestable => CliError::Input(e.to_string()),
            E::Numeric(_)
            | E::SingularBelief { .. }
            | E::SingularState { .. }
            | E::DegenerateRegressor(_)
            | E::DegenerateData(_)
            | E::PerfectFit { .. } => CliError::Numeric(e.to_string()),
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let threads = match &cli.command {
        Command::Simulate(a) => a.common.threads,
        Command::Estimate(a) => a.common.threads,
        Command::Test(a) => a.common.threads,
        Command::Critvals(a) => a.common.threads,
        Command::Study(a) => a.common.threads,
        Command::Theory(a) => a.common.threads,
    };
    if let Some(n) = threads {
        if n == 0 {
            return Err(CliError::input("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::input(format!("cannot size the thread pool: {e}")))?;
    }
    match cli.command {
        Command::Simulate(a) => commands::cmd_simulate(a),
        Command::Estimate(a) => commands::cmd_estimate(a),
        Command::Test(a) => commands::cmd_test(a),
        Command::Critvals(a) => commands::cmd_critvals(a),
        Command::Study(a) => commands::cmd_study(a),
        Command::Theory(a) => commands::cmd_theory(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
