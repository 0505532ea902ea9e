use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use hyperproto::dataio::SplitName;
use hyperproto::layers::Activation;
use hyperproto::training::{Monitor, Preset, RegReduction};

#[derive(Debug, Parser)]
#[command(name = "hyperproto", version, about = "Prototype-enhanced hypergraph node classification")]
pub struct Cli {
    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a planted-partition synthetic dataset.
    Gen(GenArgs),
    /// Train on a dataset directory and write a run directory.
    Train(Box<TrainArgs>),
    /// Recompute split metrics from a run's checkpoint.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long, default_value_t = 2)]
    pub classes: usize,
    /// Target nodes per class.
    #[arg(long, default_value_t = 20)]
    pub targets: usize,
    /// Attribute nodes per attribute type, `A,B`.
    #[arg(long, value_delimiter = ',', num_args = 2, default_values_t = [10, 10])]
    pub attr_nodes: Vec<usize>,
    /// Feature widths `target,attr_a,attr_b`.
    #[arg(long, value_delimiter = ',', num_args = 3, default_values_t = [16, 8, 8])]
    pub dims: Vec<usize>,
    /// Fraction of feature dimensions carrying class signal.
    #[arg(long, default_value_t = 1.0)]
    pub signal: f64,
    /// Probability an attribute node comes from the class-aligned pool.
    #[arg(long, default_value_t = 1.0)]
    pub purity: f64,
    /// Feature noise standard deviation.
    #[arg(long, default_value_t = 0.5)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset directory.
    pub dataset: PathBuf,
    /// Run directory (created if missing).
    #[arg(short, long, default_value = "run")]
    pub output: PathBuf,
    /// Named hyperparameter set; explicit flags override it.
    #[arg(long)]
    pub preset: Option<Preset>,
    /// First seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Number of consecutive seeds starting at `--seed`.
    #[arg(long, default_value_t = 1)]
    pub seeds: usize,
    /// Train the seeds concurrently.
    #[arg(long)]
    pub parallel: bool,
    #[command(flatten)]
    pub hyper: HyperArgs,
    /// Replace the prototype head by a linear softmax classifier.
    #[arg(long)]
    pub no_prototype_classifier: bool,
    /// Drop the hyperedge-prototype regularizer.
    #[arg(long)]
    pub no_regularizer: bool,
    /// Write attention.tsv with every layer's node and hyperedge weights.
    #[arg(long)]
    pub dump_attention: bool,
    /// Write prototypes.tsv with each prototype and its nearest labeled node.
    #[arg(long)]
    pub dump_prototypes: bool,
    /// Write embeddings.tsv with final node representations.
    #[arg(long)]
    pub export_embeddings: bool,
}

#[derive(Debug, Args)]
pub struct HyperArgs {
    #[arg(long = "lr")]
    pub learning_rate: Option<f64>,
    /// Regularizer weight.
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub heads: Option<usize>,
    /// Prototypes per class.
    #[arg(long)]
    pub prototypes: Option<usize>,
    #[arg(long)]
    pub proto_dim: Option<usize>,
    #[arg(long)]
    pub head_bias: bool,
    #[arg(long)]
    pub sigma: Option<Activation>,
    #[arg(long)]
    pub leaky_slope: Option<f64>,
    #[arg(long)]
    pub reg_reduction: Option<RegReduction>,
    /// Layer whose output is regularized (0 = projection).
    #[arg(long)]
    pub reg_layer: Option<usize>,
    #[arg(long)]
    pub monitor: Option<Monitor>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    #[arg(long)]
    pub clip_norm: Option<f64>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Dataset directory.
    pub dataset: PathBuf,
    /// Run directory written by `train`.
    #[arg(long)]
    pub run: PathBuf,
    #[arg(long, default_value = "test")]
    pub split: SplitName,
    /// Evaluate `checkpoint-seed<SEED>.bin` instead of `checkpoint.bin`.
    #[arg(long)]
    pub seed: Option<u64>,
}
