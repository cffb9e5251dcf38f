use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ldiag::psychometrics::Variant;

#[derive(Debug, Parser)]
#[command(name = "ldiag", version, about = "Learning diagnosis from psychometric channels and a fused neural predictor")]
pub struct Cli {
    /// Log progress to stderr (repeat for debug output).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic response matrix with its Q-matrix and ground truth.
    Synth(SynthArgs),
    /// Fit the psychometric channels of a variant and export their parameters.
    FitPsych(FitPsychArgs),
    /// Train the full model on one fixed train/test split and save a bundle.
    Train(TrainArgs),
    /// k-fold cross-validation of the model and its channel baselines.
    Evaluate(EvaluateArgs),
    /// Score learner/exercise pairs with a saved bundle.
    Predict(PredictArgs),
    /// Export parameter reports, latent correlations and attention weights.
    Diagnose(DiagnoseArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum GeneratorArg {
    Dina,
    Irt,
    Hodina,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum VariantArg {
    LdmId,
    LdmHmi,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::LdmId => Variant::LdmId,
            VariantArg::LdmHmi => Variant::LdmHmi,
        }
    }
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, value_enum, default_value = "dina")]
    pub generator: GeneratorArg,
    #[arg(long, default_value_t = 2000)]
    pub learners: usize,
    #[arg(long, default_value_t = 50)]
    pub exercises: usize,
    #[arg(long, default_value_t = 5)]
    pub knowledge: usize,
    /// Slip range as `lo,hi`.
    #[arg(long, default_value = "0.05,0.3")]
    pub slip: String,
    /// Guess range as `lo,hi`.
    #[arg(long, default_value = "0.05,0.3")]
    pub guess: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

/// Inputs and knobs shared by every command that fits channels.
#[derive(Debug, Args, Clone)]
pub struct DataArgs {
    #[arg(long, value_enum, default_value = "ldm-id")]
    pub variant: VariantArg,
    /// Long CSV (`learner_id,exercise_id,response`) or dense TSV.
    #[arg(long)]
    pub responses: PathBuf,
    /// Q-matrix CSV.
    #[arg(long)]
    pub q: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub mirt_dims: Option<usize>,
    #[arg(long)]
    pub include_irt_guess: bool,
    /// JSON run configuration; flags given on the command line override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Clone)]
pub struct ModelArgs {
    #[arg(long)]
    pub bins: Option<usize>,
    #[arg(long)]
    pub d4: Option<usize>,
    #[arg(long)]
    pub attn_channels: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    /// Learning rate [default: 0.001].
    #[arg(long)]
    pub lr: Option<f64>,
    /// Dropout rate [default: 0.2].
    #[arg(long)]
    pub dropout: Option<f64>,
}

#[derive(Debug, Args)]
pub struct FitPsychArgs {
    #[command(flatten)]
    pub data: DataArgs,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// The split holds out one fold of this many as the test set.
    #[arg(long)]
    pub folds: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Also train the shallow-only and no-attention networks.
    #[arg(long)]
    pub ablations: bool,
    /// Ground-truth JSON from `synth`; adds a bayes-oracle row.
    #[arg(long)]
    pub truth: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Bundle directory written by `train`.
    #[arg(long)]
    pub model: PathBuf,
    /// CSV with `learner_id,exercise_id` columns; every pair when omitted.
    #[arg(long)]
    pub cells: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Comma-separated learner ids; all learners when omitted.
    #[arg(long, value_delimiter = ',')]
    pub learners: Vec<String>,
    /// Comma-separated exercise ids; all exercises when omitted.
    #[arg(long, value_delimiter = ',')]
    pub exercises: Vec<String>,
    /// Interaction cells sampled for correlations and attention.
    #[arg(long, default_value_t = 2000)]
    pub max_cells: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}
