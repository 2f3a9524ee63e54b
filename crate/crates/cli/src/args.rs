use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "kbpoe",
    version,
    about = "Knowledge base completion with latent, relational and numerical experts"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Flat key=value configuration file; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Reduce gradients in a fixed order so runs are bitwise reproducible.
    #[arg(long, global = true)]
    pub deterministic: bool,

    /// Enabled experts.
    #[arg(long, global = true, value_parser = ["l", "r", "n", "lr", "ln", "rn", "lrn"])]
    pub ablation: Option<String>,

    #[arg(long, global = true, value_enum)]
    pub numeric_transform: Option<Transform>,

    /// Worker threads; defaults to the available parallelism.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Output directory for the command's artifacts.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Transform {
    Rbf,
    Sign,
}

impl Transform {
    pub fn name(self) -> &'static str {
        match self {
            Transform::Rbf => "rbf",
            Transform::Sign => "sign",
        }
    }
}

#[derive(Debug, Args, Clone)]
pub struct DataArgs {
    /// Training triples, `head<TAB>relation<TAB>tail`.
    #[arg(long)]
    pub train: PathBuf,

    #[arg(long)]
    pub valid: PathBuf,

    #[arg(long)]
    pub test: PathBuf,

    /// Numeric attributes, `entity<TAB>feature<TAB>value`.
    #[arg(long)]
    pub numeric: Option<PathBuf>,
}

#[derive(Debug, Args, Clone, Default)]
pub struct MiningArgs {
    #[arg(long)]
    pub min_head_coverage: Option<f64>,

    #[arg(long)]
    pub min_head_support: Option<usize>,

    #[arg(long)]
    pub max_body_len: Option<usize>,
}

#[derive(Debug, Args, Clone, Default)]
pub struct FitArgs {
    /// Minimum fraction of a relation's training triples with both values.
    #[arg(long)]
    pub tau: Option<f64>,

    #[arg(long)]
    pub sigma_floor: Option<f64>,
}

#[derive(Debug, Args, Clone, Default)]
pub struct TrainArgs {
    #[arg(long)]
    pub epochs: Option<usize>,

    #[arg(long)]
    pub learning_rate: Option<f64>,

    #[arg(long)]
    pub batch_size: Option<usize>,

    #[arg(long)]
    pub num_negatives: Option<usize>,

    #[arg(long)]
    pub embedding_dim: Option<usize>,

    #[arg(long)]
    pub validate_every: Option<usize>,
}

#[derive(Debug, Args, Clone, Default)]
pub struct ModelCheck {
    /// Fail unless the checkpoint has this embedding width.
    #[arg(long)]
    pub embedding_dim: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load and validate the data files and dump the vocabularies.
    Ingest {
        #[command(flatten)]
        data: DataArgs,
    },

    /// Mine path rules from the training split.
    MineRules {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        mining: MiningArgs,
    },

    /// Select numeric features and fit their RBF parameters.
    FitNumeric {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        fit: FitArgs,
    },

    /// Train a model and report test metrics of the best checkpoint.
    Train {
        #[command(flatten)]
        data: DataArgs,
        /// Use this rule file instead of mining.
        #[arg(long)]
        rules: Option<PathBuf>,
        /// Use this numeric spec file instead of fitting.
        #[arg(long)]
        numeric_spec: Option<PathBuf>,
        #[command(flatten)]
        mining: MiningArgs,
        #[command(flatten)]
        fit: FitArgs,
        #[command(flatten)]
        train: TrainArgs,
        /// Store parameters as 32-bit floats.
        #[arg(long)]
        f32: bool,
    },

    /// Evaluate a checkpoint with filtered ranking metrics.
    Eval {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        check: ModelCheck,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
        /// Also report metrics for One and Many queries.
        #[arg(long)]
        by_cardinality: bool,
    },

    /// Rank completions of `head<TAB>relation<TAB>?` or `?<TAB>relation<TAB>tail`.
    Predict {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        check: ModelCheck,
        #[arg(long)]
        query: String,
        #[arg(long, default_value_t = 10)]
        topk: usize,
        /// Drop candidates that form a known triple.
        #[arg(long)]
        filtered: bool,
    },

    /// PR-AUC of one query against a complete ground truth.
    Prauc {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        check: ModelCheck,
        #[arg(long)]
        query: String,
        /// `entity<TAB>{1|0}` lines.
        #[arg(long)]
        ground_truth: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SplitArg {
    Valid,
    Test,
}
