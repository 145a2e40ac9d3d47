//! `icarh` command-line interface.
//!
//! Exit codes: 0 success, 2 invalid input or configuration, 3 numeric failure
//! (including a replay that does not reproduce), 4 I/O.

mod commands;
mod manifest;

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Numeric(String),
    Io(String),
}

impl CliError {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }

    pub fn numeric(e: impl fmt::Display) -> Self {
        CliError::Numeric(e.to_string())
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Validation(m) => write!(f, "invalid input: {m}"),
            CliError::Numeric(m) => write!(f, "numeric failure: {m}"),
            CliError::Io(m) => write!(f, "I/O error: {m}"),
        }
    }
}

impl From<icarh::Error> for CliError {
    fn from(e: icarh::Error) -> Self {
        if e.is_io() {
            CliError::Io(e.to_string())
        } else if e.is_validation() {
            CliError::Validation(e.to_string())
        } else {
            CliError::Numeric(e.to_string())
        }
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "icarh",
    version,
    about = "Pathway-structured Bayesian model for time-course metabolomics"
)]
struct Cli {
    /// Worker threads for chains, replicates and analyses.
    #[arg(long, global = true, env = "ICARH_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum Command {
    /// Generate synthetic datasets with known pathway perturbations.
    Simulate(SimulateArgs),
    /// Fit the model by HMC.
    Fit(FitArgs),
    /// WAIC, posterior predictive covariance check, whitened residuals and coefficient summaries.
    Diagnose(DiagnoseArgs),
    /// Per-pathway test of phi_controls - phi_cases, with ROC when truth is given.
    Perturbation(PerturbationArgs),
    /// Find tau giving a target expected shrinkage.
    CalibrateTau(CalibrateArgs),
    /// Re-run a recorded command and compare output digests.
    Replay(ReplayArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate(_) => "simulate",
            Command::Fit(_) => "fit",
            Command::Diagnose(_) => "diagnose",
            Command::Perturbation(_) => "perturbation",
            Command::CalibrateTau(_) => "calibrate-tau",
            Command::Replay(_) => "replay",
        }
    }
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct SimulateArgs {
    /// Simulation configuration JSON; missing fields take their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Write into a non-empty output directory.
    #[arg(long)]
    pub force: bool,
    /// Number of datasets; more than one writes `replicate_NN` subdirectories.
    #[arg(long)]
    pub replicates: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Fraction of pathway members falsely reassigned in the fitted design.
    #[arg(long)]
    pub corruption: Option<f64>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PhiPriorArg {
    Beta,
    Uniform,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct FitArgs {
    /// Long-format data CSV (subject, time, group, kind, variable, value).
    #[arg(long)]
    pub data: PathBuf,
    /// Pathway JSON.
    #[arg(long)]
    pub pathways: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub force: bool,
    /// Degrees of freedom of the half-t local scales.
    #[arg(long, default_value_t = 1.0)]
    pub tau: f64,
    /// Iterations per chain, warmup included.
    #[arg(long, default_value_t = 2000)]
    pub iter: usize,
    #[arg(long, default_value_t = 1000)]
    pub warmup: usize,
    #[arg(long, default_value_t = 4)]
    pub chains: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Separate phi for cases and controls.
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    pub two_group: bool,
    /// Covariate whose profile replaces the intercept.
    #[arg(long)]
    pub treatment_covariate: Option<String>,
    #[arg(long, value_enum, default_value_t = PhiPriorArg::Beta)]
    pub phi_prior: PhiPriorArg,
    /// Fit the data on its original scale.
    #[arg(long)]
    pub no_standardize: bool,
    /// Nominal leapfrog steps per iteration.
    #[arg(long, default_value_t = 32)]
    pub steps: usize,
    #[arg(long, default_value_t = 0.8)]
    pub target_accept: f64,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct DiagnoseArgs {
    /// Output directory of a `fit` run.
    #[arg(long)]
    pub fit: PathBuf,
    /// Where to write reports; defaults to the fit directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Posterior predictive replicates (capped at the number of draws).
    #[arg(long, default_value_t = 100)]
    pub replicates: usize,
    /// Metabolite counts for the covariance check.
    #[arg(long, value_delimiter = ',', default_values_t = [4, 8, 12, 16, 20])]
    pub metabolites: Vec<usize>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Credible level for coefficient intervals.
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct PerturbationArgs {
    #[arg(long)]
    pub fit: PathBuf,
    /// Truth JSON with a `perturbed` array, as written by `simulate`.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct CalibrateArgs {
    /// Target expected shrinkage coefficient.
    #[arg(long)]
    pub target: f64,
    #[arg(long, default_value_t = 1.0)]
    pub sigma_beta: f64,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct ReplayArgs {
    /// Manifest written by a previous run.
    pub manifest: PathBuf,
    /// Output directory for the re-run.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub force: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: invalid input: --threads must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::from(3);
        }
    }
    match commands::run(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
