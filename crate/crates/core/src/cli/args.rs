use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::fusion::HeadKind;

#[derive(Debug, Parser)]
#[command(name = "mmfuse", version, about = "Multi-label fusion heads over text and image embeddings")]
pub struct Cli {
    /// Directory for outputs and summary.txt
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,

    /// Write wall_ms=0 so repeated runs produce identical summaries
    #[arg(long, global = true)]
    pub reproducible: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write seeded synthetic train/test/val dataset directories
    GenSynthetic(GenArgs),
    /// Train one head and save it with its epoch history
    TrainHead(TrainArgs),
    /// Predict labels (and dump logits) for a dataset
    Predict(PredictArgs),
    /// Average saved logit files and assign labels
    FuseLogits(FuseArgs),
    /// Score a predictions CSV against a labels CSV
    Evaluate(EvalArgs),
    /// Self-training with pseudo-labels on an unlabelled split
    PseudoLoop(PseudoArgs),
    /// Convolution cost and compound-scaling calculator
    Flops(FlopsArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value_t = 2000)]
    pub n_train: usize,
    #[arg(long, default_value_t = 500)]
    pub n_test: usize,
    #[arg(long, default_value_t = 500)]
    pub n_val: usize,
    #[arg(long, default_value_t = 0.3)]
    pub noise: f64,
}

/// Training flags; each overrides the config file, which overrides defaults.
#[derive(Debug, Args, Default)]
pub struct TrainFlags {
    /// key = value file with training settings
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// on or off
    #[arg(long)]
    pub weighting: Option<String>,
    #[arg(long)]
    pub key_dim: Option<usize>,
    #[arg(long)]
    pub threshold: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub kind: HeadKind,
    /// Labelled training dataset directory
    #[arg(long)]
    pub train: PathBuf,
    /// Labelled validation dataset directory
    #[arg(long)]
    pub val: PathBuf,
    #[command(flatten)]
    pub flags: TrainFlags,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Dataset directory to predict
    #[arg(long)]
    pub data: PathBuf,
    /// Refuse models of any other kind
    #[arg(long)]
    pub kind: Option<HeadKind>,
    #[arg(long, default_value_t = crate::fusion::DEFAULT_THRESHOLD)]
    pub threshold: f64,
}

#[derive(Debug, Args)]
pub struct FuseArgs {
    /// Logit files (FEMB with 18 columns), at least two
    #[arg(long, num_args = 1.., required = true)]
    pub logits: Vec<PathBuf>,
    /// Id list aligned with the logit rows
    #[arg(long)]
    pub ids: PathBuf,
    /// Optional labels CSV to score against
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[arg(long, default_value_t = crate::fusion::DEFAULT_THRESHOLD)]
    pub threshold: f64,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub truth: PathBuf,
}

#[derive(Debug, Args)]
pub struct PseudoArgs {
    #[arg(long)]
    pub train: PathBuf,
    /// Dataset whose labels (if any) are ignored
    #[arg(long)]
    pub unlabeled: PathBuf,
    #[arg(long)]
    pub val: PathBuf,
    /// Comma-separated head kinds to fuse
    #[arg(long)]
    pub fusion_set: Option<String>,
    #[arg(long)]
    pub rounds: Option<usize>,
    #[arg(long)]
    pub eps: Option<f64>,
    #[command(flatten)]
    pub flags: TrainFlags,
}

#[derive(Debug, Args)]
pub struct FlopsArgs {
    /// Kernel side D_k
    #[arg(long)]
    pub dk: usize,
    /// Input channels M
    #[arg(long)]
    pub m: usize,
    /// Output channels N
    #[arg(long)]
    pub n: usize,
    /// Output feature-map side D_f
    #[arg(long)]
    pub df: usize,
    #[arg(long, default_value_t = 1.2)]
    pub alpha: f64,
    #[arg(long, default_value_t = 1.1)]
    pub beta: f64,
    #[arg(long, default_value_t = 1.15)]
    pub gamma: f64,
    /// Compound coefficient; scaling is printed only when given
    #[arg(long)]
    pub phi: Option<f64>,
    #[arg(long, default_value_t = 2.0)]
    pub budget: f64,
    #[arg(long, default_value_t = 1.0)]
    pub d0: f64,
    #[arg(long, default_value_t = 1.0)]
    pub w0: f64,
    #[arg(long, default_value_t = 224.0)]
    pub r0: f64,
}
