use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "pbi", version, about = "Predictive resampling experiments: coverage, quantiles, diagnostics and path fans")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Forward paths of the Gaussian engine with pointwise bands
    Paths(PathsArgs),
    /// Coverage of PBP intervals for the mean under bias schedules
    Coverage(CoverageArgs),
    /// Coverage and bias of PBP quantile intervals
    Quantiles(QuantilesArgs),
    /// Repeated-sample predictive checks of the Gaussian engine
    Ppc(PpcArgs),
    /// Predictive checks of Gaussian and Student-t regression engines
    Regression(RegressionArgs),
    /// Total-variation increments of perturbed engines
    Tvprobe(TvprobeArgs),
    /// Coverage-formula and Bahadur limit checks
    Asymptotics(AsymptoticsArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Paths(_) => "paths",
            Command::Coverage(_) => "coverage",
            Command::Quantiles(_) => "quantiles",
            Command::Ppc(_) => "ppc",
            Command::Regression(_) => "regression",
            Command::Tvprobe(_) => "tvprobe",
            Command::Asymptotics(_) => "asymptotics",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// key = value file; flags on the command line take precedence
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Output directory (default: $PBI_OUTPUT_DIR, then ./pbi-output)
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "csv,json")]
    pub format: Vec<Format>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum DgpKind {
    Normal,
    Gamma,
}

#[derive(Debug, Args)]
pub struct DgpArgs {
    #[arg(long, value_enum, default_value = "normal")]
    pub dgp: DgpKind,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub normal_mean: f64,
    #[arg(long, default_value_t = 1.0)]
    pub normal_var: f64,
    #[arg(long, default_value_t = 2.0)]
    pub gamma_shape: f64,
    /// Gamma rate (default 2 when no scale is given)
    #[arg(long)]
    pub gamma_rate: Option<f64>,
    /// Gamma scale, the reciprocal of the rate
    #[arg(long)]
    pub gamma_scale: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum TargetArg {
    Mean,
    Variance,
    Both,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum TieArg {
    Ge,
    Midrank,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SidedArg {
    Auto,
    One,
    Two,
}

#[derive(Debug, Args)]
pub struct PathsArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub dgp: DgpArgs,
    /// CSV file to read the observed sample from instead of simulating it
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Column of --data holding the sample
    #[arg(long)]
    pub column: Option<String>,
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    #[arg(long, default_value_t = 1000)]
    pub steps: usize,
    #[arg(long, default_value_t = 2000)]
    pub paths: usize,
    #[arg(long, default_value_t = 150)]
    pub keep: usize,
    /// none, inv_t, inv_sqrt_t, const_over_n:N, prop:γ, half_neg, prop1
    #[arg(long, default_value = "none")]
    pub bias: String,
    #[arg(long, value_enum, default_value = "variance")]
    pub bias_target: TargetArg,
}

#[derive(Debug, Args)]
pub struct CoverageArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub dgp: DgpArgs,
    #[arg(long, value_delimiter = ',', default_value = "100,200,500")]
    pub n: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "none,half_neg,prop1")]
    pub bias: Vec<String>,
    #[arg(long, value_enum, default_value = "variance")]
    pub bias_target: TargetArg,
    #[arg(long, default_value_t = 500)]
    pub reps: usize,
    #[arg(long, default_value_t = 2000)]
    pub paths: usize,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// power:E, fixed:N or offset:K
    #[arg(long, default_value = "power:1.5")]
    pub horizon: String,
}

#[derive(Debug, Args)]
pub struct QuantilesArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub dgp: DgpArgs,
    #[arg(long, value_delimiter = ',', default_value = "100,200,500")]
    pub n: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "0.5,0.95")]
    pub q: Vec<f64>,
    #[arg(long, default_value_t = 200)]
    pub reps: usize,
    #[arg(long, default_value_t = 1000)]
    pub paths: usize,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, default_value = "power:1.5")]
    pub horizon: String,
}

#[derive(Debug, Args)]
pub struct PpcArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub dgp: DgpArgs,
    #[arg(long, value_delimiter = ',', default_value = "100,200,500")]
    pub n: Vec<usize>,
    /// variance, skewness, chi2, tail[:level], mmd[:bandwidth], w1
    #[arg(long, value_delimiter = ',', default_value = "skewness,variance")]
    pub tests: Vec<String>,
    #[arg(long, default_value_t = 200)]
    pub reps: usize,
    #[arg(long, default_value_t = 100)]
    pub replicates: usize,
    #[arg(long, value_enum, default_value = "ge")]
    pub tie: TieArg,
    #[arg(long, value_enum, default_value = "auto")]
    pub sided: SidedArg,
    /// Draws beyond n for the difference statistics
    #[arg(long, default_value = "power:1.5")]
    pub delta_horizon: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum EngineArg {
    Gaussian,
    StudentT,
}

#[derive(Debug, Args)]
pub struct RegressionArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// CSV dataset; a synthetic one is generated when absent
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub outcome: Option<String>,
    /// Covariate columns (default: every column but the outcome)
    #[arg(long, value_delimiter = ',')]
    pub covariates: Option<Vec<String>>,
    /// Columns passed through unstandardized
    #[arg(long, value_delimiter = ',')]
    pub dummies: Vec<String>,
    /// Treat columns whose values are all 0 or 1 as dummies
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    pub auto_dummies: bool,
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    pub standardize: bool,
    #[arg(long, default_value_t = 2000)]
    pub synthetic_n: usize,
    /// Columns of the synthetic design, intercept included
    #[arg(long, default_value_t = 4)]
    pub synthetic_d: usize,
    /// normal or t:ν
    #[arg(long, default_value = "t:3")]
    pub residuals: String,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "gaussian,student_t")]
    pub engines: Vec<EngineArg>,
    #[arg(long, default_value_t = 5.0)]
    pub nu: f64,
    #[arg(long, default_value_t = 10)]
    pub starts: usize,
    #[arg(long, default_value_t = 100)]
    pub replicates: usize,
    /// Recursion steps before the tail correction
    #[arg(long, default_value_t = 100)]
    pub horizon_steps: usize,
    /// Continuation paths used to estimate the tail covariance
    #[arg(long, default_value_t = 50)]
    pub tail_paths: usize,
    #[arg(long, default_value_t = 0.995)]
    pub tail_level: f64,
    #[arg(long, value_enum, default_value = "ge")]
    pub tie: TieArg,
}

#[derive(Debug, Args)]
pub struct TvprobeArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, value_delimiter = ',', default_value = "none,inv_sqrt_t,const_over_n:2")]
    pub bias: Vec<String>,
    #[arg(long, value_enum, default_value = "both")]
    pub bias_target: TargetArg,
    #[arg(long, value_delimiter = ',', default_value = "10,20,50,100,200,500,1000,2000")]
    pub t: Vec<u64>,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub mu: f64,
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
    /// Largest t of the partial sums; 0 skips them
    #[arg(long, default_value_t = 100_000)]
    pub partial_sums_max: u64,
    #[arg(long, default_value_t = 100)]
    pub exact_upto: u64,
    #[arg(long, default_value_t = 20)]
    pub points_per_decade: usize,
    #[arg(long, default_value_t = 64)]
    pub hermite_order: usize,
    #[arg(long, default_value_t = 4001)]
    pub grid_points: usize,
}

#[derive(Debug, Args)]
pub struct AsymptoticsArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub dgp: DgpArgs,
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    #[arg(long, value_delimiter = ',', default_value = "0.5,1,2")]
    pub ratios: Vec<f64>,
    #[arg(long, default_value_t = 500)]
    pub reps: usize,
    #[arg(long, default_value_t = 2000)]
    pub paths: usize,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, default_value = "fixed:5000")]
    pub horizon: String,
    #[arg(long, default_value_t = 500)]
    pub bahadur_n: usize,
    #[arg(long, value_delimiter = ',', default_value = "0.5")]
    pub q: Vec<f64>,
    #[arg(long, default_value_t = 2000)]
    pub bahadur_paths: usize,
    #[arg(long, default_value = "power:1.5")]
    pub bahadur_horizon: String,
}
