//! `featsig`: significance testing of features, feature groups and
//! interactions for black-box models.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error, 4 adapter
//! protocol error, 5 internal error.

mod commands;
mod failure;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use failure::Failure;

#[derive(Parser, Debug)]
#[command(name = "featsig", version, about = "Perturbation-based significance tests for model features")]
struct Cli {
    /// Worker threads (default: all cores)
    #[arg(long, global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Test every hierarchy node and control FDR top-down
    Analyze(AnalyzeArgs),
    /// Test pairs of nodes for non-additive effects
    Interact(InteractArgs),
    /// Run the synthetic FDR/power experiment
    Synth(SynthArgs),
    /// Build a hierarchy by constrained clustering of binary columns
    Cluster(ClusterArgs),
    /// Render an importance report as Graphviz DOT
    ExportDot(ExportDotArgs),
    /// Write a synthetic ground truth, dataset and random hierarchy
    Generate(GenerateArgs),
}

#[derive(Args, Debug)]
pub struct DataArgs {
    /// CSV with a header row; targets in a `__target__` column unless --targets is given
    #[arg(long)]
    pub data: PathBuf,
    /// One target per line (or a single-column CSV)
    #[arg(long)]
    pub targets: Option<PathBuf>,
    /// Hierarchy document (JSON node list or name,parent,features CSV)
    #[arg(long)]
    pub hierarchy: PathBuf,
}

#[derive(Args, Debug)]
#[group(required = true, multiple = false, id = "model_source")]
pub struct ModelSource {
    /// Adapter command speaking the line-delimited JSON protocol
    #[arg(long)]
    pub adapter: Option<String>,
    /// Ground-truth document for the built-in synthetic model
    #[arg(long)]
    pub truth: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SyntheticNoise {
    /// Noise scale of the synthetic model
    #[arg(long, default_value_t = 0.0)]
    pub sigma: f64,
    /// Seed of the synthetic model's noise
    #[arg(long, default_value_t = 0)]
    pub noise_seed: u64,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum PerturbationArg {
    Permutation,
    Erasure,
    Flip,
}

#[derive(Args, Debug)]
pub struct PerturbationArgs {
    #[arg(long, value_enum, default_value_t = PerturbationArg::Permutation)]
    pub perturbation: PerturbationArg,
    #[arg(long, default_value_t = featsig::perturb::DEFAULT_PERMUTATIONS)]
    pub num_permutations: usize,
    #[arg(long, default_value_t = 0.0)]
    pub erasure_value: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelSource,
    #[command(flatten)]
    pub noise: SyntheticNoise,
    #[command(flatten)]
    pub perturbation: PerturbationArgs,
    #[arg(long, default_value_t = 0.05)]
    pub q: f64,
    /// squared_error or binary_cross_entropy (default: from the model's transfer)
    #[arg(long)]
    pub loss: Option<String>,
    /// greater or two_sided
    #[arg(long, default_value = "greater")]
    pub tail: String,
    /// Test children only under rejected parents
    #[arg(long)]
    pub lazy: bool,
    /// Report output path
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the rejected subtree as DOT
    #[arg(long)]
    pub dot: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct InteractArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelSource,
    #[command(flatten)]
    pub noise: SyntheticNoise,
    #[command(flatten)]
    pub perturbation: PerturbationArgs,
    /// Importance report whose outer nodes are paired
    #[arg(long, conflicts_with = "nodes", required_unless_present = "nodes")]
    pub report: Option<PathBuf>,
    /// Comma-separated node names to pair instead
    #[arg(long, value_delimiter = ',')]
    pub nodes: Option<Vec<String>>,
    #[arg(long, default_value_t = 0.05)]
    pub q: f64,
    /// Test loss non-additivity under this loss (experimental)
    #[arg(long)]
    pub loss: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// m or sigma
    #[arg(long, default_value = "sigma")]
    pub vary: String,
    /// Comma-separated grid values
    #[arg(long, value_delimiter = ',', required = true)]
    pub grid: Vec<f64>,
    #[arg(long, default_value_t = 100)]
    pub replicates: usize,
    /// Noise scale when m is varied
    #[arg(long, default_value_t = 0.05)]
    pub sigma: f64,
    /// Instances when sigma is varied
    #[arg(long, default_value_t = 10_000)]
    pub m: usize,
    #[arg(long, default_value_t = 500)]
    pub n_features: usize,
    #[arg(long, default_value_t = 50)]
    pub n_linear: usize,
    #[arg(long, default_value_t = 50)]
    pub n_interactions: usize,
    #[arg(long, default_value_t = 0.5)]
    pub bernoulli_p: f64,
    #[arg(long, default_value_t = 0.05)]
    pub q: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Test every node rather than only children of rejected nodes
    #[arg(long)]
    pub eager: bool,
    /// Table output (JSON)
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Aligned-text table output
    #[arg(long)]
    pub text: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ClusterArgs {
    /// Binary CSV with a header row; a `__target__` column is ignored
    #[arg(long)]
    pub data: PathBuf,
    /// Column order: indices or header names, separated by commas or whitespace
    #[arg(long)]
    pub order: Option<PathBuf>,
    /// Also print flat clusters whose columns all lie within this many bits
    #[arg(long)]
    pub threshold: Option<usize>,
    /// Hierarchy output; `.csv` selects the flat format
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ExportDotArgs {
    #[arg(long)]
    pub report: PathBuf,
    #[arg(long)]
    pub hierarchy: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    #[arg(long, default_value_t = 500)]
    pub n_features: usize,
    #[arg(long, default_value_t = 50)]
    pub n_linear: usize,
    #[arg(long, default_value_t = 50)]
    pub n_interactions: usize,
    #[arg(long, default_value_t = 1000)]
    pub m: usize,
    #[arg(long, default_value_t = 0.5)]
    pub bernoulli_p: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Directory receiving truth.json, data.csv and hierarchy.json
    #[arg(long)]
    pub out_dir: PathBuf,
}

fn run(cli: Cli) -> Result<(), Failure> {
    if let Some(n) = cli.workers {
        if n == 0 {
            return Err(Failure::config("--workers must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::internal(format!("cannot start worker pool: {e}")))?;
    }
    match cli.command {
        Command::Analyze(a) => commands::analyze(a),
        Command::Interact(a) => commands::interact(a),
        Command::Synth(a) => commands::synth(a),
        Command::Cluster(a) => commands::cluster(a),
        Command::ExportDot(a) => commands::export_dot(a),
        Command::Generate(a) => commands::generate(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
