use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::generate::Structure;

#[derive(Debug, Parser)]
#[command(name = "alphacross", version, about = "Combine alpha streams under trading costs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Optimal weights, P&L and optimality certificate
    Optimize(OptimizeArgs),
    /// Spectral turnover-reduction coefficient
    RhoStar(RhoStarArgs),
    /// Investment level maximizing the optimized P&L under impact
    Capacity(CapacityArgs),
    /// Weights in the vanishing specific-risk limit
    Regress(RegressArgs),
    /// Exhaustive sign-pattern search for small universes
    Oracle(OracleArgs),
    /// Write a synthetic alpha universe
    Generate(GenerateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelKind {
    /// Principal components of the sample covariance
    Pca,
    /// Read from --factor-file
    File,
}

#[derive(Debug, Args)]
pub struct UniverseArgs {
    /// Alpha history CSV (`t,<label>...`, first row most recent)
    #[arg(long)]
    pub alphas: PathBuf,
    /// Turnovers CSV (`label,tau`)
    #[arg(long)]
    pub turnovers: Option<PathBuf>,
    /// Current expected returns CSV (`label,alpha`); defaults to the first history row
    #[arg(long)]
    pub expected: Option<PathBuf>,
    /// Run configuration JSON
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "pca")]
    pub factor_model: ModelKind,
    /// Factor model JSON (`{omega, phi, specific_var}`) for --factor-model file
    #[arg(long)]
    pub factor_file: Option<PathBuf>,
    /// Number of principal components for --factor-model pca
    #[arg(long)]
    pub factors: Option<usize>,
}

#[derive(Debug, Args)]
pub struct OptimizeArgs {
    #[command(flatten)]
    pub universe: UniverseArgs,
    /// Ignore every cost and solve the unconstrained problem
    #[arg(long)]
    pub no_cost: bool,
    /// Drop inactive streams and re-estimate rho* until the universe is stable
    #[arg(long, conflicts_with = "no_outer_loop")]
    pub outer_loop: bool,
    /// Solve once on the full universe
    #[arg(long)]
    pub no_outer_loop: bool,
    /// Write the JSON report here
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RhoStarArgs {
    /// Alpha history CSV; correlation is estimated from it
    #[arg(long, required_unless_present = "correlation", conflicts_with = "correlation")]
    pub alphas: Option<PathBuf>,
    /// Correlation matrix CSV with labels in the header and first column
    #[arg(long)]
    pub correlation: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CapacityArgs {
    #[command(flatten)]
    pub universe: UniverseArgs,
    /// Write the sampled `(investment, pnl)` curve as CSV
    #[arg(long)]
    pub curve_out: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RegressArgs {
    #[command(flatten)]
    pub universe: UniverseArgs,
    /// Apply the linear costs from the config
    #[arg(long)]
    pub costs: bool,
    /// Also report the distance of optimizer weights to the limit along the configured zetas
    #[arg(long)]
    pub check_limit: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[command(flatten)]
    pub universe: UniverseArgs,
    /// Compare against the iterative solver and print an equivalence line
    #[arg(long)]
    pub compare: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub seed: u64,
    /// Number of streams
    #[arg(long)]
    pub n: usize,
    /// Observations after the most recent one (history has M+1 rows)
    #[arg(long)]
    pub m: usize,
    #[arg(long, value_enum, default_value = "uniform")]
    pub structure: Structure,
    /// Pairwise correlation for the uniform structure
    #[arg(long, default_value_t = 0.5)]
    pub rho: f64,
    /// Factor count for the factor structure
    #[arg(long, default_value_t = 0)]
    pub factors: usize,
    /// Typical per-stream volatility
    #[arg(long, default_value_t = 0.01)]
    pub vol: f64,
    #[arg(long, default_value_t = 0.002, allow_negative_numbers = true)]
    pub alpha_mean: f64,
    #[arg(long, default_value_t = 0.005)]
    pub alpha_spread: f64,
    #[arg(long, default_value_t = 0.2)]
    pub tau_min: f64,
    #[arg(long, default_value_t = 1.0)]
    pub tau_max: f64,
    /// Output directory
    #[arg(long)]
    pub out_dir: PathBuf,
}
