use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "echochamber",
    version,
    about = "Infer who influences whom in a conversation"
)]
pub struct Cli {
    /// TOML configuration file; command-line flags take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Turn a raw transcript into a model-ready transcript file.
    Preprocess(PreprocessArgs),
    /// Draw posterior samples for one model.
    Fit(FitArgs),
    /// Generate a synthetic transcript from known parameters.
    Simulate(SimulateArgs),
    /// Score held-out utterances under fitted chains.
    Evaluate(EvaluateArgs),
    /// Summarize posterior influence networks and write graph files.
    Export(ExportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RawFormatArg {
    Jsonl,
    Csv,
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    /// Raw transcript (one turn per JSONL line or CSV row).
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum)]
    pub format: Option<RawFormatArg>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub min_utterances: Option<usize>,
    #[arg(long)]
    pub max_vocab: Option<usize>,
    /// Keep words unstemmed.
    #[arg(long)]
    pub no_stem: bool,
    #[arg(long)]
    pub horizon: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelArg {
    Bec,
    Unigram,
    Hawkes,
    Tied,
    Untied,
}

impl From<ModelArg> for echochamber::sampler::Model {
    fn from(m: ModelArg) -> Self {
        use echochamber::sampler::Model;
        match m {
            ModelArg::Bec => Model::Bec,
            ModelArg::Unigram => Model::Unigram,
            ModelArg::Hawkes => Model::Hawkes,
            ModelArg::Tied => Model::Tied,
            ModelArg::Untied => Model::Untied,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ConventionArg {
    ShapeScale,
    ShapeRate,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long, value_enum)]
    pub model: Option<ModelArg>,
    /// Transcript file from `preprocess` or `simulate`.
    #[arg(long)]
    pub transcript: Option<PathBuf>,
    /// Event-times file, for the turn-taking model without text.
    #[arg(long)]
    pub events: Option<PathBuf>,
    /// Output directory for chains and diagnostics.
    #[arg(long)]
    pub out: PathBuf,
    /// Number of independent chains; chain i uses seed `seed + i`.
    #[arg(long)]
    pub chains: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub burn_in: Option<usize>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub beta_inner_loops: Option<usize>,
    /// Fit on the training part of a split leaving this token fraction for testing.
    #[arg(long)]
    pub train_fraction: Option<f64>,
    /// Hold the tied model's scale factor fixed.
    #[arg(long)]
    pub fixed_r: Option<f64>,
    #[arg(long, value_enum)]
    pub gamma_convention: Option<ConventionArg>,
    /// Maximum number of chains run at once.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Continue interrupted chains from their checkpoints.
    #[arg(long)]
    pub resume: bool,
    /// Stop every chain after this many sweeps, leaving a checkpoint.
    #[arg(long)]
    pub stop_after: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProtocolArg {
    RoundRobin,
    Hawkes,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, value_enum)]
    pub protocol: Option<ProtocolArg>,
    /// JSON file with `bec` (and for the Hawkes protocol `hawkes`) parameters.
    /// Without it, language parameters are drawn from the priors.
    #[arg(long)]
    pub params: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub persons: Option<usize>,
    #[arg(long)]
    pub utterances: Option<usize>,
    #[arg(long)]
    pub vocab: Option<usize>,
    #[arg(long)]
    pub mean_length: Option<f64>,
    #[arg(long)]
    pub horizon: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Full transcript the chains were fitted on (before splitting).
    #[arg(long)]
    pub transcript: PathBuf,
    /// Fit output directories or individual chain files.
    #[arg(long = "chains", required = true, num_args = 1..)]
    pub chains: Vec<PathBuf>,
    /// Model to score; defaults to the fitted model.
    #[arg(long, value_enum)]
    pub model: Option<ModelArg>,
    /// Test-token fraction; defaults to the fraction used for fitting.
    #[arg(long)]
    pub fraction: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
    /// Dataset label for the comparison table.
    #[arg(long)]
    pub dataset: Option<String>,
    /// Extra scores to include verbatim (`model,dataset,logprob[,fraction]`).
    #[arg(long)]
    pub external: Option<PathBuf>,
    /// Worker threads for scoring posterior draws.
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MatrixArg {
    Rho,
    Nu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Json,
    Dot,
    Csv,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    /// Fit output directories or individual chain files.
    #[arg(long = "chains", num_args = 1..)]
    pub chains: Vec<PathBuf>,
    /// TOML manifest of meeting groups to aggregate.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, value_delimiter = ',')]
    pub format: Vec<FormatArg>,
    /// Omit edges whose posterior mean is below this value.
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Which influence matrix to export; defaults to the word influence when available.
    #[arg(long, value_enum)]
    pub matrix: Option<MatrixArg>,
    /// Quantile levels to report.
    #[arg(long, value_delimiter = ',')]
    pub levels: Vec<f64>,
}
