use std::path::PathBuf;

use clap::{ArgGroup, Args, Parser, Subcommand};
use raterboot::metrics::parse_metric_list;
use raterboot::report::PlotKind;
use raterboot::{MetricId, PValueMethod, SamplerKind};

pub const VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), " (", env!("RATERBOOT_BUILD_HASH"), ")");

#[derive(Debug, Parser)]
#[command(
    name = "raterboot",
    version = VERSION,
    about = "Bootstrap power analysis for multi-rater annotation datasets",
    args_override_self = true
)]
pub struct Cli {
    /// TOML file of flag values; command-line flags win.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convert a long-format CSV into a dataset file.
    Ingest(IngestArgs),
    /// Generate a synthetic dataset.
    Synth(SynthArgs),
    /// Run one simulation cell and write its p-value report.
    Simulate(SimulateArgs),
    /// Run a budget x K x epsilon grid.
    Sweep(SweepArgs),
    /// Plot a slice of a sweep.
    Report(ReportArgs),
}

#[derive(Debug, Clone)]
pub struct MetricList(pub Vec<MetricId>);

fn metric_list(s: &str) -> Result<MetricList, String> {
    parse_metric_list(s).map(MetricList)
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value = "item_id")]
    pub item_col: String,
    #[arg(long, default_value = "rater_id")]
    pub rater_col: String,
    #[arg(long, default_value = "label")]
    pub label_col: String,
    /// JSON object mapping label strings to integer codes.
    #[arg(long)]
    pub label_dict: Option<PathBuf>,
    /// Group items into batches of this size by shared rater pool.
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("structure").args(["crossed", "batched", "sparse"])))]
pub struct SynthArgs {
    #[arg(long)]
    pub items: usize,
    #[arg(long)]
    pub raters: usize,
    #[arg(long, default_value_t = 2)]
    pub classes: usize,
    /// Every rater labels every item (the default).
    #[arg(long)]
    pub crossed: bool,
    /// Items in batches of this size, each with its own rater pool.
    #[arg(long, value_name = "SIZE")]
    pub batched: Option<usize>,
    /// Each (item, rater) pair is kept with this probability.
    #[arg(long, value_name = "P")]
    pub sparse: Option<f64>,
    /// Dirichlet concentration of per-item class weights.
    #[arg(long, default_value_t = 1.0)]
    pub concentration: f64,
    /// Standard deviation of per-rater class offsets.
    #[arg(long, default_value_t = 0.0)]
    pub rater_bias: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output path; a `.csv` extension writes long-format CSV.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub sampler: SamplerKind,
    /// Item slots per replicate (N').
    #[arg(long)]
    pub n: usize,
    /// Responses per item slot (K').
    #[arg(long)]
    pub k: usize,
    #[arg(long)]
    pub epsilon: f64,
    #[arg(long, default_value_t = raterboot::sim::DEFAULT_NUM_SAMPLES)]
    pub replicates: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Comma-separated metric names, or `all`.
    #[arg(long, value_parser = metric_list, default_value = "all")]
    pub metrics: MetricList,
    #[arg(long, value_enum, default_value = "pairwise")]
    pub p_value: PValueArg,
    #[arg(long, env = "RATERBOOT_PARALLELISM")]
    pub parallelism: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum PValueArg {
    Pairwise,
    Paired,
}

impl From<PValueArg> for PValueMethod {
    fn from(a: PValueArg) -> Self {
        match a {
            PValueArg::Pairwise => PValueMethod::Pairwise,
            PValueArg::Paired => PValueMethod::Paired,
        }
    }
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long, required_unless_present_any = ["resume", "from_manifest"])]
    pub dataset: Option<PathBuf>,
    /// One or more samplers, comma-separated.
    #[arg(long, value_delimiter = ',')]
    pub sampler: Vec<SamplerKind>,
    #[arg(long, value_delimiter = ',')]
    pub budgets: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    pub ks: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    pub epsilons: Vec<f64>,
    #[arg(long, value_parser = metric_list)]
    pub metrics: Option<MetricList>,
    #[arg(long)]
    pub replicates: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub p_value: Option<PValueArg>,
    /// Significance level for min_budget.md.
    #[arg(long, default_value_t = raterboot::report::DEFAULT_ALPHA)]
    pub alpha: f64,
    #[arg(long, required_unless_present = "resume")]
    pub out_dir: Option<PathBuf>,
    #[arg(long, env = "RATERBOOT_PARALLELISM")]
    pub parallelism: Option<usize>,
    /// Continue an interrupted sweep from its manifest.
    #[arg(long, value_name = "MANIFEST", conflicts_with_all = [
        "from_manifest", "sampler", "budgets", "ks", "epsilons", "metrics", "replicates", "seed", "p_value", "out_dir",
    ])]
    pub resume: Option<PathBuf>,
    /// Rerun the grid recorded in a manifest into a new output directory.
    #[arg(long, value_name = "MANIFEST", conflicts_with_all = [
        "sampler", "budgets", "ks", "epsilons", "metrics", "replicates", "seed", "p_value",
    ])]
    pub from_manifest: Option<PathBuf>,
    /// Do not print per-cell progress.
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Sweep output directory containing sweep.csv.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Slice to plot, e.g. `sampler=s2,epsilon=0.3,metric=accuracy`.
    #[arg(long)]
    pub select: String,
    #[arg(long, default_value = "pvalue")]
    pub kind: PlotKind,
    #[arg(long)]
    pub out: PathBuf,
}
