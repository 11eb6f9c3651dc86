use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "rough-sabr", version, about = "Rough SABR smiles: ODE tables, formula smiles and Monte Carlo validation")]
#[command(args_override_self = true)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Output directory (created if missing)
    #[arg(long, global = true, default_value = ".", value_name = "DIR")]
    pub out: PathBuf,

    /// Output format: csv tables with JSON sidecars, or a single JSON document
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,

    /// Monte Carlo seed
    #[arg(long, global = true, default_value_t = 1)]
    pub seed: u64,

    /// Monte Carlo worker threads, 0 for one per core (results do not depend on it)
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,

    /// JSON file of flag values keyed by long flag name; command-line flags take precedence
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the smile ODE and write the y,g,G,f table
    OdeSolve(OdeSolveArgs),
    /// Rough SABR formula smile at one maturity
    Smile(SmileArgs),
    /// Monte Carlo smile at one maturity
    Mc(McArgs),
    /// Compare formula and Monte Carlo smiles over a list of maturities
    Validate(ValidateArgs),
    /// Price, greeks and optionally implied volatility of one call
    Greeks(GreeksArgs),
}

#[derive(Debug, Args)]
pub struct OdeSolveArgs {
    /// Hurst exponent H in [0, 1/2] (dimensionless)
    #[arg(long = "H", alias = "hurst", allow_negative_numbers = true)]
    pub hurst: f64,

    /// Spot-vol correlation rho in (-1, 1) (dimensionless)
    #[arg(long, allow_negative_numbers = true)]
    pub rho: f64,

    /// Half-width of the y grid (units of scaled moneyness)
    #[arg(long, default_value_t = 10.0)]
    pub ymax: f64,

    /// Relative tolerance of the adaptive integrator (dimensionless)
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,

    /// Output grid spacing (units of scaled moneyness)
    #[arg(long, default_value_t = 1e-3)]
    pub spacing: f64,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Hurst exponent H in [0, 1/2] (dimensionless)
    #[arg(long = "H", alias = "hurst", allow_negative_numbers = true)]
    pub hurst: f64,

    /// Vol-of-vol eta > 0 (per year^H)
    #[arg(long, default_value_t = 1.0)]
    pub eta: f64,

    /// Spot-vol correlation rho in (-1, 1) (dimensionless)
    #[arg(long, allow_negative_numbers = true)]
    pub rho: f64,

    /// Local volatility shape: lognormal, normal, sqrt, or power:P with 0 < P < 1
    #[arg(long, default_value = "lognormal", value_name = "BETA")]
    pub beta: String,

    /// Flat forward variance xi0 (per year); ignored with --curve-file or --alpha0
    #[arg(long, default_value_t = 0.04)]
    pub xi0: f64,

    /// Piecewise-constant forward variance curve from a t,xi CSV (t in years, xi per year)
    #[arg(long, value_name = "FILE", conflicts_with = "alpha0")]
    pub curve_file: Option<PathBuf>,

    /// Classical SABR curve xi0(s) = alpha0^2 exp(eta^2 s / 4) (alpha0 per sqrt(year))
    #[arg(long)]
    pub alpha0: Option<f64>,

    /// Spot S0 (price units)
    #[arg(long, default_value_t = 1.0)]
    pub spot: f64,
}

#[derive(Debug, Args)]
#[group(id = "strike_spec", required = true, multiple = false)]
pub struct StrikeArgs {
    /// Absolute strikes, comma separated (price units)
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub strikes: Option<Vec<f64>>,

    /// Log-strikes k = log(K/S0), comma separated (dimensionless)
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub logstrikes: Option<Vec<f64>>,

    /// Uniform grid in scaled moneyness y as lo:hi:n (dimensionless), mapped to k = y U / kappa
    #[arg(long, value_name = "LO:HI:N", allow_hyphen_values = true)]
    pub yrange: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Source {
    /// Numerical solution of the smile ODE
    Ode,
    /// Closed-form interpolation G_A
    Approx,
}

#[derive(Debug, Args)]
pub struct SmileArgs {
    #[command(flatten)]
    pub model: ModelArgs,

    #[command(flatten)]
    pub strikes: StrikeArgs,

    /// Time to maturity (years)
    #[arg(long)]
    pub tau: f64,

    /// Smile shape from the numerical ODE or the closed-form interpolation
    #[arg(long, value_enum, default_value_t = Source::Ode)]
    pub source: Source,

    /// Override the at-the-money vol Sigma(0, tau) (per sqrt(year))
    #[arg(long)]
    pub atm_vol: Option<f64>,
}

#[derive(Debug, Args)]
pub struct McOptions {
    /// Number of simulated paths
    #[arg(long, default_value_t = 200_000)]
    pub paths: usize,

    /// Time steps over the horizon; default 512, or 2048 when H < 0.1
    #[arg(long)]
    pub steps: Option<usize>,

    /// Simulation horizon (years); by default each maturity is simulated over its own horizon
    #[arg(long)]
    pub horizon: Option<f64>,

    /// Kernel intervals simulated exactly by the hybrid scheme
    #[arg(long, default_value_t = 2)]
    pub block_width: usize,

    /// Disable antithetic pairs
    #[arg(long)]
    pub no_antithetic: bool,

    /// Volterra sampling scheme
    #[arg(long, value_enum, default_value_t = SchemeArg::Hybrid)]
    pub scheme: SchemeArg,

    /// Steps at which the hybrid Riemann sum switches to FFT convolution
    #[arg(long, default_value_t = 1024)]
    pub fft_min_steps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SchemeArg {
    Hybrid,
    Cholesky,
}

#[derive(Debug, Args)]
pub struct McArgs {
    #[command(flatten)]
    pub model: ModelArgs,

    #[command(flatten)]
    pub strikes: StrikeArgs,

    /// Time to maturity (years)
    #[arg(long)]
    pub tau: f64,

    #[command(flatten)]
    pub mc: McOptions,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[command(flatten)]
    pub model: ModelArgs,

    #[command(flatten)]
    pub strikes: StrikeArgs,

    /// Maturities, comma separated (years)
    #[arg(long, value_delimiter = ',', required = true)]
    pub tau: Vec<f64>,

    /// Formula smile shape from the numerical ODE or the closed-form interpolation
    #[arg(long, value_enum, default_value_t = Source::Ode)]
    pub source: Source,

    /// Floor of the per-strike tolerance on normalized vols (dimensionless)
    #[arg(long, default_value_t = 0.0075)]
    pub tol_floor: f64,

    /// Required fraction of strikes within tolerance (dimensionless)
    #[arg(long, default_value_t = 0.9)]
    pub pass_fraction: f64,

    /// Only strikes with |y| below this count toward the summary (dimensionless)
    #[arg(long, default_value_t = 1.0)]
    pub ymax: f64,

    #[command(flatten)]
    pub mc: McOptions,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ConventionArg {
    /// Black-Scholes, sigma per sqrt(year)
    Bs,
    /// Bachelier, sigma in price units per sqrt(year)
    Bachelier,
}

#[derive(Debug, Args)]
pub struct GreeksArgs {
    /// Spot S (price units)
    #[arg(long)]
    pub spot: f64,

    /// Strike K (price units)
    #[arg(long)]
    pub strike: f64,

    /// Time to maturity (years)
    #[arg(long)]
    pub tau: f64,

    /// Volatility (per sqrt(year) for bs, price units per sqrt(year) for bachelier);
    /// defaults to the implied volatility of --price
    #[arg(long, required_unless_present = "price")]
    pub sigma: Option<f64>,

    /// Pricing convention
    #[arg(long, value_enum, default_value_t = ConventionArg::Bs)]
    pub convention: ConventionArg,

    /// Call price to invert for implied volatility (price units)
    #[arg(long)]
    pub price: Option<f64>,
}
