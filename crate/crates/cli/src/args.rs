use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(name = "lpstat", version, about = "LP score-function modeling of discrete and continuous data")]
pub struct Cli {
    /// Worker threads for the simulation commands.
    #[arg(long, global = true, env = "LPSTAT_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand, Serialize, Deserialize)]
#[serde(tag = "command", content = "config", rename_all = "kebab-case")]
pub enum Command {
    /// LP moments of one sample.
    Moments(MomentsArgs),
    /// LP comoment matrix of a pair of columns or a contingency table.
    Comoments(PairArgs),
    /// Smooth goodness-of-fit test against a parametric baseline.
    Gof(GofArgs),
    /// Skew density estimate on top of a parametric baseline.
    Density(DensityArgs),
    /// Copula density model.
    Copula(CopulaArgs),
    /// Correspondence analysis of a contingency table.
    Corresp(CorrespArgs),
    /// LPINFOR dependence statistics and permutation p-values.
    Lpinfor(LpinforArgs),
    /// Conditional mean, quantile and density curves of Y given X.
    Regress(RegressArgs),
    /// Desk-scale power study against Pearson and Spearman.
    PowerSim(PowerArgs),
    /// LPINFOR timing against sample size.
    Bench(BenchArgs),
    /// Re-run a saved JSON result and compare the numbers bit for bit.
    Verify(VerifyArgs),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Layout {
    /// Table when the first column holds labels, columns otherwise.
    #[default]
    Auto,
    Table,
    Pairs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlotKind {
    /// Score functions as steps on the unit interval.
    Scores,
    /// Baseline and estimated density on a grid.
    Density,
    /// Copula density on a 101 x 101 grid.
    CopulaGrid,
    /// Conditional (slice) densities.
    Slices,
    /// Conditional mean and quantile curves.
    Quantiles,
    /// Power against noise level.
    Power,
}

/// Where results go. Not echoed into the result envelope.
#[derive(Debug, Clone, Default, Args)]
pub struct OutputOpts {
    /// Result format on the output stream.
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Write results here instead of stdout.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    /// Also write plot data of this kind.
    #[arg(long, value_enum, requires = "plot_out")]
    pub plot: Option<PlotKind>,
    /// Destination of the plot CSV.
    #[arg(long, requires = "plot")]
    pub plot_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct InputArgs {
    /// CSV file, `-` for stdin. Bundled names (fisher.csv, wais.csv, ...) resolve without a path.
    #[arg(long, short)]
    pub input: String,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct MomentsArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub input: InputArgs,
    /// Column name or 1-based position.
    #[arg(long, default_value = "1")]
    pub column: String,
    #[arg(long, short, default_value_t = 4)]
    pub m: usize,
    #[command(flatten)]
    #[serde(skip)]
    pub out: OutputOpts,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct PairOpts {
    #[command(flatten)]
    #[serde(flatten)]
    pub input: InputArgs,
    #[arg(long, value_enum, default_value_t = Layout::Auto)]
    pub layout: Layout,
    /// X column for pair input.
    #[arg(long, default_value = "1")]
    pub x: String,
    /// Y column for pair input.
    #[arg(long, default_value = "2")]
    pub y: String,
    #[arg(long, short, default_value_t = 4)]
    pub m: usize,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct PairArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub pair: PairOpts,
    #[command(flatten)]
    #[serde(skip)]
    pub out: OutputOpts,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct GofArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub input: InputArgs,
    #[arg(long, default_value = "1")]
    pub column: String,
    /// normal, exponential, gamma or poisson.
    #[arg(long, default_value = "normal")]
    pub baseline: String,
    /// Baseline parameters; estimated from the data when absent.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub params: Option<Vec<f64>>,
    #[arg(long, short, default_value_t = 4)]
    pub m: usize,
    /// all, aic, bic, threshold[:z], orders:1,3
    #[arg(long, default_value = "aic")]
    pub select: String,
    #[command(flatten)]
    #[serde(skip)]
    pub out: OutputOpts,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DensityFormArg {
    L2,
    Exp,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct DensityArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub gof: GofArgs,
    #[arg(long, value_enum, default_value_t = DensityFormArg::L2)]
    pub form: DensityFormArg,
    /// Grid points between the sample extremes.
    #[arg(long, default_value_t = 201)]
    pub grid: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CopulaFormArg {
    L2,
    Exp,
    Canonical,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct CopulaArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub pair: PairOpts,
    #[arg(long, value_enum, default_value_t = CopulaFormArg::L2)]
    pub form: CopulaFormArg,
    /// Rank of the canonical form.
    #[arg(long, default_value_t = 1)]
    pub rank: usize,
    #[arg(long, default_value = "threshold")]
    pub select: String,
    /// u values at which to export slices d(v | u).
    #[arg(long, value_delimiter = ',', default_values_t = [0.1, 0.25, 0.5, 0.75, 0.9])]
    pub slices: Vec<f64>,
    #[command(flatten)]
    #[serde(skip)]
    pub out: OutputOpts,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct CorrespArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub input: InputArgs,
    #[arg(long, default_value_t = 2)]
    pub rank: usize,
    /// ca or goodman.
    #[arg(long, default_value = "ca")]
    pub variant: String,
    #[command(flatten)]
    #[serde(skip)]
    pub out: OutputOpts,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct LpinforArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub pair: PairOpts,
    #[arg(long, default_value = "threshold")]
    pub select: String,
    /// Permutation replicates; 0 skips the permutation tests.
    #[arg(long, default_value_t = 0)]
    pub perm: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[command(flatten)]
    #[serde(skip)]
    pub out: OutputOpts,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QuantilePath {
    Invert,
    Sample,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MarginalArg {
    Auto,
    Discrete,
    SkewNormal,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct RegressArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub pair: PairOpts,
    /// Rule for the copula terms.
    #[arg(long, default_value = "threshold")]
    pub select: String,
    /// Rule for the conditional-mean coefficients.
    #[arg(long, default_value = "threshold")]
    pub mean_select: String,
    #[arg(long, value_enum, default_value_t = MarginalArg::Auto)]
    pub marginal: MarginalArg,
    #[arg(long, value_delimiter = ',', default_values_t = [0.1, 0.25, 0.5, 0.75, 0.9])]
    pub target_quantiles: Vec<f64>,
    /// u values of X at which curves are evaluated; 19 evenly spaced points by default.
    #[arg(long, value_delimiter = ',')]
    pub u_grid: Option<Vec<f64>>,
    #[arg(long, value_enum, default_value_t = QuantilePath::Invert)]
    pub path: QuantilePath,
    /// Draws per u value on the sampling path.
    #[arg(long, default_value_t = 10_000)]
    pub draws: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[command(flatten)]
    #[serde(skip)]
    pub out: OutputOpts,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct PowerArgs {
    /// TOML file with any of: patterns, noises, levels, n, b_null, b_alt, seed.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub patterns: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',')]
    pub noises: Option<Vec<String>>,
    /// Noise levels, shared by every noise family.
    #[arg(long, value_delimiter = ',')]
    pub levels: Option<Vec<f64>>,
    #[arg(long, short)]
    pub n: Option<usize>,
    #[arg(long)]
    pub b_null: Option<usize>,
    #[arg(long)]
    pub b_alt: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    #[serde(skip)]
    pub out: OutputOpts,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_values_t = [1000usize, 10_000])]
    pub ns: Vec<usize>,
    #[arg(long, default_value_t = 5)]
    pub repeats: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[command(flatten)]
    #[serde(skip)]
    pub out: OutputOpts,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct VerifyArgs {
    /// A JSON result written by an earlier run.
    #[arg(long, short)]
    pub input: PathBuf,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Moments(_) => "moments",
            Command::Comoments(_) => "comoments",
            Command::Gof(_) => "gof",
            Command::Density(_) => "density",
            Command::Copula(_) => "copula",
            Command::Corresp(_) => "corresp",
            Command::Lpinfor(_) => "lpinfor",
            Command::Regress(_) => "regress",
            Command::PowerSim(_) => "power-sim",
            Command::Bench(_) => "bench",
            Command::Verify(_) => "verify",
        }
    }

    pub fn output(&self) -> OutputOpts {
        match self {
            Command::Moments(a) => a.out.clone(),
            Command::Comoments(a) => a.out.clone(),
            Command::Gof(a) => a.out.clone(),
            Command::Density(a) => a.gof.out.clone(),
            Command::Copula(a) => a.out.clone(),
            Command::Corresp(a) => a.out.clone(),
            Command::Lpinfor(a) => a.out.clone(),
            Command::Regress(a) => a.out.clone(),
            Command::PowerSim(a) => a.out.clone(),
            Command::Bench(a) => a.out.clone(),
            Command::Verify(_) => OutputOpts::default(),
        }
    }
}
