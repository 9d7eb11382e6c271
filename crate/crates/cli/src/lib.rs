//! The `cgdm` command-line tool: fit, forecast, simulate and gradient-check.
//!
//! Exit codes: 0 success, 1 input or configuration error, 2 the fit did not
//! converge (artifacts are still written), 3 the gradient check failed.

mod commands;
pub mod config;
pub mod svg;

use std::ffi::OsString;
use std::path::PathBuf;

use cgdm_core::{FillPolicy, Flow, LagPolicy};
use clap::{Args, Parser, Subcommand};

pub use config::RunConfig;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_NOT_CONVERGED: i32 = 2;
pub const EXIT_VERIFICATION: i32 = 3;

/// Seeds are stored as TOML integers, which are signed 64-bit.
const MAX_SEED: u64 = i64::MAX as u64;

#[derive(Debug, Parser)]
#[command(name = "cgdm", version, about = "Fit and forecast yearly counts with a logistic, power-law and autoregressive model")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the model to a CSV series and write params.toml, fitted.csv and fit.svg
    Fit(FitArgs),
    /// Forecast from fitted parameters and write forecast.csv, summary.toml and forecast.svg
    Forecast(ForecastArgs),
    /// Draw a synthetic series from a parameters file and write simulated.csv
    Simulate(SimulateArgs),
    /// Compare the analytic gradient with central finite differences
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
pub struct InputArgs {
    /// Year/count CSV file
    #[arg(long)]
    pub input: PathBuf,
    /// Flow to model: import, export or combined. May be omitted when the
    /// input holds a single flow
    #[arg(long)]
    pub flow: Option<Flow>,
    /// Missing years inside the range: error, zero or interpolate
    #[arg(long, default_value = "error")]
    pub fill: FillPolicy,
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    /// Directory for the written artifacts (created if missing)
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
    /// Skip the SVG chart
    #[arg(long)]
    pub no_plot: bool,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub output: OutputArgs,
    #[arg(long, default_value_t = 1e-3)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 200_000)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 1e-10)]
    pub tolerance: f64,
    /// Use fixed steps of the learning rate instead of the line search
    #[arg(long)]
    pub no_backtracking: bool,
    /// Pre-sample lag handling: strict or zero-pad
    #[arg(long, default_value = "strict")]
    pub lag_policy: LagPolicy,
    /// Drop points whose residual exceeds this many residual scales, then refit
    #[arg(long)]
    pub outlier_sigma: Option<f64>,
    /// Seed for the random initial AR weights
    #[arg(long, default_value_t = 0, value_parser = clap::value_parser!(u64).range(..=MAX_SEED))]
    pub seed: u64,
    /// Number of autoregressive lags
    #[arg(long, default_value_t = 3, conflicts_with = "init")]
    pub ar_order: usize,
    /// Start from the model in this parameters file instead of the default start
    #[arg(long)]
    pub init: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ForecastArgs {
    /// Parameters file written by `cgdm fit`
    #[arg(long)]
    pub params: PathBuf,
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub output: OutputArgs,
    /// Number of forecast years
    #[arg(long, default_value_t = cgdm_core::forecast::DEFAULT_HORIZON)]
    pub horizon: usize,
    /// Monte Carlo paths for the quantile bands (0 for none)
    #[arg(long, default_value_t = 1000)]
    pub sims: usize,
    #[arg(long, default_value_t = 0, value_parser = clap::value_parser!(u64).range(..=MAX_SEED))]
    pub seed: u64,
    /// Comma-separated quantile levels in (0, 1)
    #[arg(long, value_delimiter = ',', default_value = "0.05,0.5,0.95")]
    pub levels: Vec<f64>,
    /// Pre-sample lag handling; defaults to the policy the parameters were fitted with
    #[arg(long)]
    pub lag_policy: Option<LagPolicy>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Parameters file holding the generating model
    #[arg(long)]
    pub params: PathBuf,
    /// Number of years to generate
    #[arg(long)]
    pub length: usize,
    #[arg(long, default_value_t = 2000)]
    pub first_year: i32,
    /// Flow label written to every row
    #[arg(long, default_value = "combined")]
    pub flow: Flow,
    #[arg(long, default_value_t = 0, value_parser = clap::value_parser!(u64).range(..=MAX_SEED))]
    pub seed: u64,
    /// Directory for simulated.csv (created if missing)
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// Number of random problems
    #[arg(long, default_value_t = 50)]
    pub instances: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code. Errors are reported on stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let result = match &cli.command {
        Command::Fit(a) => commands::fit(a),
        Command::Forecast(a) => commands::forecast(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Gradcheck(a) => commands::gradcheck(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_INPUT
        }
    }
}
