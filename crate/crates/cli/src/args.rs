use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "aggbounds", version, about = "Bounds on individual-level conditional means from group aggregates")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sharp bounds per group and in aggregate.
    Bounds(BoundsArgs),
    /// Closed-form bounds for a binary outcome.
    Frechet(FrechetArgs),
    /// Bonferroni confidence sets for the bounds.
    Ci(CiArgs),
    /// Monte Carlo coverage or consistency study on a simulated population.
    Simulate(SimulateArgs),
    /// Compare the search against a grid oracle on small instances.
    Oracle(OracleArgs),
    /// Write one of the built-in simulation specs.
    Preset(PresetArgs),
    /// Validate input tables and write them as one dataset JSON.
    Validate(ValidateArgs),
}

#[derive(Debug, Clone, Args)]
pub struct InputArgs {
    /// Group table: group_id,count,y_mean[,y_se][,share]
    #[arg(long)]
    pub groups: Option<PathBuf>,
    /// Marginal table: group_id,covariate,value,prob
    #[arg(long)]
    pub marginals: Option<PathBuf>,
    /// Support table: point_id,<covariate>...; defaults to the full product of
    /// the values seen in the marginals
    #[arg(long)]
    pub support: Option<PathBuf>,
    /// Subgroup means: group_id,covariate,value,y_mean[,y_se],count
    #[arg(long)]
    pub finer: Option<PathBuf>,
    /// A dataset JSON instead of tables
    #[arg(long, conflicts_with_all = ["groups", "marginals", "support", "finer"])]
    pub dataset: Option<PathBuf>,
    /// JSON run configuration; flags override it
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Outcome range LO:HI (default 0:1)
    #[arg(long)]
    pub range: Option<String>,
    /// Declare the outcome binary
    #[arg(long)]
    pub binary: bool,
    /// Rescale marginals and shares that do not sum to one
    #[arg(long)]
    pub renormalize: bool,
}

#[derive(Debug, Clone, Args)]
pub struct ParamArgs {
    /// Weights on the support points, comma-separated
    #[arg(long, allow_hyphen_values = true, conflicts_with = "contrast")]
    pub lambda: Option<String>,
    /// Weight expression such as "cell(a) - cell(b)"
    #[arg(long, allow_hyphen_values = true)]
    pub contrast: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct SearchArgs {
    /// Random starts per search
    #[arg(long)]
    pub starts: Option<usize>,
    /// Iteration cap per start
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Convergence tolerance of the simplex search
    #[arg(long)]
    pub tol: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct RestrictionArgs {
    /// Shape restrictions as JSON ({"shared": {"rows": [...]}} or {"per_group": {...}})
    #[arg(long)]
    pub shape: Option<PathBuf>,
    /// Monotone in a covariate, COV:inc or COV:dec (repeatable)
    #[arg(long)]
    pub monotone: Vec<String>,
    /// Use subgroup means as constraints
    #[arg(long)]
    pub use_finer: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, ValueEnum)]
pub enum Format {
    #[default]
    Text,
    Csv,
    Json,
}

#[derive(Debug, Clone, Args)]
pub struct OutputArgs {
    /// Directory for report files
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// What to print on stdout
    #[arg(long, value_enum, default_value_t = Format::Text)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct BoundsArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub params: ParamArgs,
    #[command(flatten)]
    pub search: SearchArgs,
    #[command(flatten)]
    pub restrict: RestrictionArgs,
    #[command(flatten)]
    pub output: OutputArgs,
    /// Include the extremal joints and conditional means
    #[arg(long)]
    pub witnesses: bool,
}

#[derive(Debug, Args)]
pub struct FrechetArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub params: ParamArgs,
    #[command(flatten)]
    pub restrict: RestrictionArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct CiArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub params: ParamArgs,
    #[command(flatten)]
    pub search: SearchArgs,
    #[command(flatten)]
    pub restrict: RestrictionArgs,
    #[command(flatten)]
    pub output: OutputArgs,
    /// Significance levels, comma-separated (default 0.05)
    #[arg(long)]
    pub alpha: Option<String>,
    /// Group shares are fixed by design, so they get no intervals
    #[arg(long)]
    pub shares_known: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Study {
    Coverage,
    Consistency,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Built-in exercise 1, 2 or 3
    #[arg(long, conflicts_with = "spec")]
    pub preset: Option<u8>,
    /// Spec JSON
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Study::Coverage)]
    pub study: Study,
    #[arg(long, default_value_t = 100)]
    pub reps: usize,
    /// Draws per group (coverage study; default from the spec)
    #[arg(long)]
    pub n_per_group: Option<u64>,
    /// Draws per group, comma-separated (consistency study)
    #[arg(long, default_value = "1000,10000,100000")]
    pub sizes: String,
    /// Keep only the first G groups
    #[arg(long)]
    pub groups: Option<usize>,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Estimate group shares instead of treating them as known
    #[arg(long)]
    pub shares_estimated: bool,
    #[arg(long)]
    pub use_finer: bool,
    #[command(flatten)]
    pub params: ParamArgs,
    #[command(flatten)]
    pub search: SearchArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub params: ParamArgs,
    #[command(flatten)]
    pub search: SearchArgs,
    #[command(flatten)]
    pub restrict: RestrictionArgs,
    #[command(flatten)]
    pub output: OutputArgs,
    #[arg(long, default_value_t = 0.01)]
    pub grid_step: f64,
    /// Rounds of local grid refinement
    #[arg(long, default_value_t = 0)]
    pub refine: usize,
}

#[derive(Debug, Args)]
pub struct PresetArgs {
    /// Exercise 1, 2 or 3
    pub id: u8,
    /// Write the spec here instead of stdout
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write the population aggregates instead of the spec
    #[arg(long)]
    pub population: bool,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Write the validated dataset here
    #[arg(long)]
    pub out: Option<PathBuf>,
}
