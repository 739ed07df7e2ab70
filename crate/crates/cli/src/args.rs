use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(
    name = "simmer",
    version,
    about = "Cross-modal recipe/image retrieval toolkit"
)]
pub struct Cli {
    /// Worker threads; 1 gives bit-reproducible output.
    #[arg(long, global = true, env = "SIMMER_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Expand complete recipes into their four training variants.
    Augment(AugmentArgs),
    /// Render prompt records for the embedding exporter.
    Prompt(PromptArgs),
    /// Encode recipes and images with trained parameters.
    Encode(EncodeArgs),
    /// Train the toy encoders contrastively.
    Train(TrainArgs),
    /// Merge and validate embedding dumps into a search index.
    Index(IndexArgs),
    /// Exact cosine top-k search.
    Search(SearchArgs),
    /// Repeated-pool medR / Recall@k evaluation.
    Eval(EvalArgs),
    /// Run the built-in oracle checks.
    Selfcheck(SelfcheckArgs),
    #[command(hide = true)]
    Synth(SynthArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Augment(_) => "augment",
            Command::Prompt(_) => "prompt",
            Command::Encode(_) => "encode",
            Command::Train(_) => "train",
            Command::Index(_) => "index",
            Command::Search(_) => "search",
            Command::Eval(_) => "eval",
            Command::Selfcheck(_) => "selfcheck",
            Command::Synth(_) => "synth",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Switch {
    On,
    Off,
}

impl Switch {
    pub fn is_on(self) -> bool {
        self == Switch::On
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainDirection {
    I2r,
    R2i,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptDirection {
    I2r,
    R2i,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Update {
    Adapter,
    Full,
}

#[derive(Debug, Args, Serialize)]
pub struct AugmentArgs {
    /// Recipes, one JSON object per line.
    #[arg(long)]
    pub recipes: PathBuf,
    /// Output variant records.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct PromptArgs {
    #[arg(long)]
    pub recipes: PathBuf,
    #[arg(long, value_enum, default_value = "both")]
    pub direction: PromptDirection,
    /// Render all four variants of each recipe.
    #[arg(long, value_enum, default_value = "off")]
    pub augment: Switch,
    /// Accept recipes with missing components.
    #[arg(long)]
    pub permissive: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct EncodeArgs {
    #[arg(long)]
    pub params: PathBuf,
    #[arg(long)]
    pub recipes: PathBuf,
    /// Image feature dump.
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long, value_enum)]
    pub direction: TrainDirection,
    #[arg(long)]
    pub permissive: bool,
    /// Query embedding dump to write.
    #[arg(long)]
    pub queries_out: PathBuf,
    /// Candidate embedding dump to write.
    #[arg(long)]
    pub candidates_out: PathBuf,
    /// Ground-truth pairs (query_id TAB truth_id) to write.
    #[arg(long)]
    pub pairs_out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    #[arg(long)]
    pub recipes: PathBuf,
    /// Image feature dump.
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long, default_value_t = 2000)]
    pub steps: usize,
    #[arg(long, default_value_t = 128)]
    pub batch_size: usize,
    /// Pairs per re-encoding chunk; below --batch-size selects the cached schedule.
    #[arg(long)]
    pub chunk_size: Option<usize>,
    #[arg(long, default_value_t = 0.02)]
    pub tau: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub lr: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "on")]
    pub augment: Switch,
    /// Which tensors are updated.
    #[arg(long, value_enum, default_value = "adapter")]
    pub update: Update,
    #[arg(long, default_value_t = 256)]
    pub dim: usize,
    /// Hash buckets for text tokens.
    #[arg(long, default_value_t = 4096)]
    pub buckets: usize,
    /// Adapter rank; 0 disables the adapters.
    #[arg(long, default_value_t = 16)]
    pub rank: usize,
    #[arg(long, default_value_t = 64.0)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0.1)]
    pub dropout: f64,
    /// Per-step loss/accuracy records.
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// Parameter file to write.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct IndexArgs {
    /// Input dumps, merged in order.
    #[arg(long = "dump", required = true)]
    pub dumps: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct SearchArgs {
    /// Candidate dump.
    #[arg(long)]
    pub index: PathBuf,
    /// Query dump.
    #[arg(long)]
    pub query: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub topk: usize,
    /// Write results here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub queries: PathBuf,
    #[arg(long)]
    pub candidates: PathBuf,
    /// Ground truth, query_id TAB truth_id per line.
    #[arg(long)]
    pub pairs: PathBuf,
    #[arg(long, default_value_t = 1000)]
    pub pool: usize,
    #[arg(long, default_value_t = 10)]
    pub repeats: usize,
    #[arg(long, value_delimiter = ',', default_value = "1,5,10")]
    pub ks: Vec<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// i2r, r2i, or both (both also scores the reverse direction on swapped pairs).
    #[arg(long, default_value = "i2r")]
    pub direction: String,
    /// Report file, one JSON record per line.
    #[arg(long)]
    pub report: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct SelfcheckArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also validate this parameter file.
    #[arg(long, hide = true)]
    pub params: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 256)]
    pub pairs: usize,
    #[arg(long, default_value_t = 32)]
    pub classes: usize,
    #[arg(long, default_value_t = 32)]
    pub feature_dim: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long)]
    pub recipes_out: PathBuf,
    #[arg(long)]
    pub features_out: PathBuf,
}
