use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, Parser, Serialize)]
#[command(name = "sqrtlasso", version, about = "Square-root lasso fitting, calibration and simulation")]
pub struct Cli {
    /// Cap on worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(tag = "subcommand", rename_all = "snake_case")]
pub enum Command {
    /// Fit an estimator to a CSV dataset.
    Fit(FitArgs),
    /// Compute the penalty level for a design.
    Calibrate(CalibrateArgs),
    /// Run a Monte Carlo experiment.
    Simulate(SimulateArgs),
    /// Restricted and sparse eigenvalue report for a small design.
    Diagnose(DiagnoseArgs),
    /// Duality certificate for a given coefficient vector.
    Check(CheckArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptionArg {
    Exact,
    SemiExact,
    Asymptotic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverArg {
    Coordinate,
    FirstOrder,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorrelationArg {
    Toeplitz,
    Equicorrelated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CoefScale {
    Raw,
    Normalized,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PenaltyArgs {
    /// How the penalty level is chosen.
    #[arg(long = "penalty-option", value_enum, default_value = "exact")]
    pub option: OptionArg,
    /// Noise law(s) for the exact / semi-exact options, comma separated
    /// (normal, t<k>, exp). Semi-exact defaults to t4,t8,normal.
    #[arg(long)]
    pub family: Option<String>,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, default_value_t = 1.1)]
    pub c: f64,
    /// Simulation draws for the exact / semi-exact options.
    #[arg(long, default_value_t = 10_000)]
    pub draws: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SolverArgs {
    #[arg(long, value_enum, default_value = "coordinate")]
    pub solver: SolverArg,
    /// Coordinate descent: stop when the largest change in a sweep is below this.
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    #[arg(long, default_value_t = 10_000)]
    pub max_sweeps: usize,
    /// First-order: relative duality-gap tolerance.
    #[arg(long, default_value_t = 1e-6)]
    pub gap_tol: f64,
    /// First-order: iteration cap.
    #[arg(long, default_value_t = 50_000)]
    pub max_iter: usize,
    /// First-order: initial smoothing (default 0.1 sqrt(n) / ||y||).
    #[arg(long)]
    pub mu0: Option<f64>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DataArgs {
    /// CSV with a header; first column `y`, remaining columns regressors.
    #[arg(long)]
    pub data: PathBuf,
    /// Use the columns as given instead of rescaling to E_n x^2 = 1
    /// (penalty loadings then carry the scale).
    #[arg(long)]
    pub no_normalize: bool,
    /// Center y and the columns before fitting.
    #[arg(long)]
    pub center: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// sqrt-lasso, sqrt-lasso-half, infeasible-lasso, one-step-lasso,
    /// two-step-lasso, cv-lasso or oracle; prefix with post- for an OLS refit.
    #[arg(long, default_value = "sqrt-lasso")]
    pub estimator: String,
    /// Refit OLS on the selected support.
    #[arg(long)]
    pub post: bool,
    #[command(flatten)]
    pub penalty: PenaltyArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Fixed penalty level; skips calibration (square-root lasso kinds).
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Known noise level (infeasible-lasso).
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Regressor indices (0-based, comma separated) for the oracle.
    #[arg(long)]
    pub support: Option<String>,
    /// Folds for cv-lasso.
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write the conic standard-form problem to this file.
    #[arg(long)]
    pub emit_conic: Option<PathBuf>,
    /// Write the coefficients as CSV (name,raw,normalized).
    #[arg(long)]
    pub coef_out: Option<PathBuf>,
    /// Output JSON path (default: stdout).
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct CalibrateArgs {
    /// Dataset whose design is calibrated (required except for the
    /// asymptotic option).
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub p: Option<usize>,
    #[arg(long = "option", value_enum, default_value = "exact")]
    pub option: OptionArg,
    #[arg(long)]
    pub family: Option<String>,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, default_value_t = 1.1)]
    pub c: f64,
    #[arg(long, default_value_t = 10_000)]
    pub draws: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub no_normalize: bool,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    #[arg(long, value_enum, default_value = "toeplitz")]
    pub design: CorrelationArg,
    /// Correlation parameter.
    #[arg(long, default_value_t = 0.5)]
    pub rho: f64,
    /// normal, t<k> (scaled to unit variance) or exp (centered).
    #[arg(long, default_value = "normal")]
    pub noise: String,
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    #[arg(long, default_value_t = 500)]
    pub p: usize,
    /// Number of leading unit coefficients.
    #[arg(long, default_value_t = 5)]
    pub s: usize,
    #[arg(long, default_value = "0.25,0.5,1,2,3")]
    pub sigma_grid: String,
    #[arg(long, default_value_t = 1000)]
    pub reps: usize,
    #[arg(long, default_value = "sqrt-lasso,post-sqrt-lasso,infeasible-lasso,post-infeasible-lasso")]
    pub estimators: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Keep one design for all replications.
    #[arg(long)]
    pub fix_design: bool,
    #[arg(long = "penalty-option", value_enum, default_value = "asymptotic")]
    pub option: OptionArg,
    #[arg(long)]
    pub family: Option<String>,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, default_value_t = 1.1)]
    pub c: f64,
    #[arg(long, default_value_t = 10_000)]
    pub draws: usize,
    #[arg(long, value_enum, default_value = "coordinate")]
    pub solver: SolverArg,
    /// Output directory for results.csv and summary.json.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct DiagnoseArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Support T as 0-based regressor indices, comma separated.
    #[arg(long)]
    pub support: String,
    /// Cone constant; defaults to (c+1)/(c-1).
    #[arg(long)]
    pub cbar: Option<f64>,
    #[arg(long, default_value_t = 1.1)]
    pub c: f64,
    /// Random directions for the restricted-eigenvalue search.
    #[arg(long, default_value_t = 100_000)]
    pub budget: usize,
    #[arg(long, default_value_t = 2_000)]
    pub polish: usize,
    /// Off-support sparsity for the sparse-eigenvalue check.
    #[arg(long, default_value_t = 1)]
    pub m: usize,
    /// Supports examined before switching to sampling.
    #[arg(long, default_value_t = 100_000)]
    pub max_supports: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct CheckArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Coefficient CSV with a header line. Reads the column named after
    /// --coef-scale (`raw` or `normalized`) when present, else the last column.
    #[arg(long)]
    pub coef: PathBuf,
    #[arg(long)]
    pub lambda: f64,
    /// Units of the coefficient file.
    #[arg(long, value_enum, default_value = "normalized")]
    pub coef_scale: CoefScale,
    #[arg(long)]
    pub output: Option<PathBuf>,
}
