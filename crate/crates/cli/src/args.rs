use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Rotation-invariant point-cloud completion.
///
/// Exit codes: 0 success, 1 I/O or malformed input, 2 usage error
/// (bad flags, invalid config, missing input file), 3 numeric failure.
#[derive(Debug, Parser)]
#[command(name = "ricnet", version, about, long_about)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate paired complete/partial synthetic shapes and a manifest.
    Synth(SynthArgs),
    /// Apply a rigid transform to an XYZ file.
    Transform(TransformArgs),
    /// Train a model on a manifest.
    Train(TrainArgs),
    /// Evaluate a checkpoint in original pose, transformed pose, or both.
    Eval(EvalArgs),
    /// Complete a partial cloud with a trained checkpoint.
    Complete(CompleteArgs),
    /// Dump rotation-invariant tuples and encoder features for a cloud.
    Features(FeaturesArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    Sphere,
    Box,
    Cylinder,
    /// Cycle through all three shapes.
    All,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, value_enum, default_value = "all")]
    pub kind: KindArg,
    /// Number of shape pairs.
    #[arg(long, default_value_t = 10)]
    pub count: usize,
    /// Points per complete cloud.
    #[arg(long, default_value_t = 2048)]
    pub points: usize,
    /// Fraction of points kept in the partial cloud, in (0, 1].
    #[arg(long, default_value_t = 0.5)]
    pub crop: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory; receives the XYZ pairs and manifest.csv.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TransformArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Seed of the random rigid transform (ignored with --transform).
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.5)]
    pub max_translation: f64,
    /// Apply this transform JSON instead of drawing a random one.
    #[arg(long)]
    pub transform: Option<PathBuf>,
    /// Also write the applied transform as JSON.
    #[arg(long)]
    pub save_transform: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// JSON run config; flags below override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Training manifest (overrides paths.data).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Held-out manifest evaluated after every epoch (overrides paths.eval_data).
    #[arg(long)]
    pub eval_data: Option<PathBuf>,
    /// Checkpoint to write (overrides paths.checkpoint).
    #[arg(long)]
    pub out_checkpoint: Option<PathBuf>,
    /// Training log CSV (overrides paths.log; default: next to the checkpoint).
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// Continue from this checkpoint; its config is used as the base.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Initial learning rate.
    #[arg(long)]
    pub lr: Option<f64>,
    /// Randomly move every training pair each epoch.
    #[arg(long)]
    pub augment_rigid: bool,
    /// Print one line per epoch to stderr.
    #[arg(long)]
    pub verbose: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Required unless --identity-model is given.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub data: PathBuf,
    /// Evaluate in original pose (the default when --transformed is absent).
    #[arg(long)]
    pub original: bool,
    /// Evaluate on randomly moved inputs and ground truth.
    #[arg(long)]
    pub transformed: bool,
    /// Seed of the per-example evaluation transforms.
    #[arg(long, default_value_t = 0)]
    pub transform_seed: u64,
    #[arg(long)]
    pub max_translation: Option<f64>,
    /// F-score threshold (default: the checkpoint's fscore_tau).
    #[arg(long)]
    pub tau: Option<f64>,
    /// Predict the ground truth itself instead of running a model.
    #[arg(long)]
    pub identity_model: bool,
    /// Output CSV; with both --original and --transformed this is the robustness report.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CompleteArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Partial cloud.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Fine completion.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the coarse completion.
    #[arg(long)]
    pub coarse: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FeaturesArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write g_ri.csv, v.csv and features.csv from the encoder.
    #[arg(long)]
    pub dump_features: bool,
    /// Encoder weights for --dump-features (default: freshly initialised from --config).
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Number of FPS reference points for irif.csv.
    #[arg(long, default_value_t = 256)]
    pub refs: usize,
    /// Neighbours per reference.
    #[arg(long, default_value_t = 16)]
    pub k: usize,
    /// Neighbourhood size for local reference axes.
    #[arg(long, default_value_t = 16)]
    pub lra_k: usize,
}
