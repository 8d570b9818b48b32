use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "tivac", version, about = "Time-varying, covariate-dependent correlation for bivariate longitudinal data")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Seed for every random stream (folds, bootstrap, simulation).
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Worker threads; 0 lets the runtime decide.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Directory for all outputs (created if missing).
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,

    /// JSON file with defaults for any option; command-line flags win.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Write zero timings and omit wall time so repeated runs are byte-identical.
    #[arg(long, global = true)]
    pub no_timing: bool,

    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a model and write model.json and coefficients.csv.
    Fit(FitCmd),
    /// Evaluate the correlation surface of a fitted model.
    Predict(PredictCmd),
    /// Nested-bootstrap simultaneous bands for each coefficient.
    Band(BandCmd),
    /// Generate datasets from a scenario file.
    Simulate(SimulateCmd),
    /// Compare estimators on simulated data.
    Benchmark(BenchmarkCmd),
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Long-format outcome file: subject_id,time,y1,y2.
    #[arg(long)]
    pub outcomes: PathBuf,

    /// Wide covariate file: subject_id,<name>,...
    #[arg(long)]
    pub covariates: PathBuf,

    /// Warn instead of failing on repeated times within a subject.
    #[arg(long)]
    pub allow_duplicate_times: bool,
}

#[derive(Debug, Args, Clone, Default)]
pub struct ModelArgs {
    /// Interior knots per coefficient (default: about 20 observations per interval, at most 10).
    #[arg(long)]
    pub knots: Option<usize>,

    /// B-spline order (4 = cubic).
    #[arg(long)]
    pub order: Option<usize>,

    /// Comma-separated smoothing-parameter grid searched by cross-validation.
    #[arg(long, value_delimiter = ',', conflicts_with = "lambdas")]
    pub lambda_grid: Option<Vec<f64>>,

    /// Fixed smoothing parameters, one per covariate; skips cross-validation.
    #[arg(long, value_delimiter = ',')]
    pub lambdas: Option<Vec<f64>>,

    /// Cross-validation folds.
    #[arg(long)]
    pub folds: Option<usize>,
}

#[derive(Debug, Args)]
pub struct FitCmd {
    #[command(flatten)]
    pub data: DataArgs,

    #[command(flatten)]
    pub model: ModelArgs,

    /// Points in the evaluation grid for coefficients.csv.
    #[arg(long)]
    pub grid_points: Option<usize>,
}

#[derive(Debug, Args)]
pub struct PredictCmd {
    /// Fitted model from `tivac fit`.
    #[arg(long)]
    pub model: PathBuf,

    /// Covariate vector, comma-separated; repeat for several.
    #[arg(long = "x", required = true, allow_hyphen_values = true)]
    pub x: Vec<String>,

    /// Sweep covariate K over LO..HI in N steps around the first --x: K:LO:HI:N.
    #[arg(long, allow_hyphen_values = true)]
    pub covariate_grid: Option<String>,

    /// Time points between the fitted range limits.
    #[arg(long, conflicts_with = "times")]
    pub grid_points: Option<usize>,

    /// Explicit comma-separated evaluation times.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub times: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
pub struct BandCmd {
    #[arg(long)]
    pub model: PathBuf,

    #[command(flatten)]
    pub data: DataArgs,

    /// Outer bootstrap replicates.
    #[arg(short = 'B', long)]
    pub outer: Option<usize>,

    /// Inner bootstrap replicates per outer replicate.
    #[arg(short = 'M', long)]
    pub inner: Option<usize>,

    /// One minus the simultaneous coverage level.
    #[arg(long, allow_hyphen_values = true)]
    pub alpha: Option<f64>,

    #[arg(long)]
    pub grid_points: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SimulateCmd {
    /// Scenario JSON: one object or an array.
    #[arg(long)]
    pub scenario: PathBuf,

    /// Only write this replication (default: all of them).
    #[arg(long)]
    pub replication: Option<usize>,
}

#[derive(Debug, Args)]
pub struct BenchmarkCmd {
    #[arg(long)]
    pub scenario: PathBuf,

    /// Comma-separated estimators: tivac, empirical.
    #[arg(long, value_delimiter = ',', default_value = "tivac,empirical")]
    pub methods: Vec<String>,

    /// Override the replication count of every scenario.
    #[arg(long)]
    pub replications: Option<usize>,

    #[command(flatten)]
    pub model: ModelArgs,
}
