//! The `weakloc` command line: one binary with a subcommand per stage.

mod commands;
mod config;

pub use commands::{infer_feature_dims, run};
pub use config::RunConfig;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::datamodel::Split;
use crate::error::Error;
use crate::model::{Fusion, Modalities, Pooling, Variant};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

/// Exit code for an error: 2 for bad input or configuration, 3 otherwise.
pub fn exit_code(err: &Error) -> i32 {
    if err.is_validation() {
        EXIT_VALIDATION
    } else {
        EXIT_RUNTIME
    }
}

#[derive(Debug, Parser)]
#[command(name = "weakloc", version, about = "Weakly supervised multimodal temporal event localization")]
pub struct Cli {
    /// TOML run configuration with [model], [train], [localizer] and [synth] sections.
    /// Flags override file values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Worker threads for data loading, training and inference [default: available cores].
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Seed for synthesis, initialization, shuffling, dropout and gradient checks [default: 0].
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset with planted bursts.
    Synth(SynthArgs),
    /// Train on the train split of a manifest, early-stopping on its val split.
    Train(TrainArgs),
    /// Score a checkpoint on one split of a manifest.
    Eval(EvalArgs),
    /// Write per-segment predictions and intervals for one split.
    Localize(LocalizeArgs),
    /// Summarize annotation CSV files.
    Stats(StatsArgs),
    /// Compare analytic and finite-difference gradients on a tiny model in f64.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output directory for features/, manifest.jsonl and oracle.csv.
    #[arg(long)]
    pub out: PathBuf,
    /// Total segments, divided 70/10/20 into train/val/test [default: 1000].
    #[arg(long)]
    pub n: Option<usize>,
    /// Explicit split sizes as TRAIN,VAL,TEST; overrides --n.
    #[arg(long, value_delimiter = ',')]
    pub splits: Option<Vec<usize>>,
    /// Share of positive segments per split [default: 0.3].
    #[arg(long)]
    pub positive_fraction: Option<f64>,
    /// Burst mean shift in noise standard deviations [default: 3.0].
    #[arg(long)]
    pub amplitude: Option<f64>,
    /// Segment length in seconds [default: 5.0].
    #[arg(long)]
    pub duration: Option<f64>,
    /// Audio feature dimension [default: 32].
    #[arg(long)]
    pub audio_dim: Option<usize>,
    /// Visual feature dimension [default: 24].
    #[arg(long)]
    pub visual_dim: Option<usize>,
}

/// Model and optimizer flags shared by training.
#[derive(Debug, Args)]
pub struct ModelFlags {
    /// Ablation preset applied before the individual flags below [default: full].
    #[arg(long)]
    pub variant: Option<Variant>,
    /// softmax_tanh, softmax_no_tanh, mean or max [default: softmax_tanh].
    #[arg(long)]
    pub pooling: Option<Pooling>,
    /// softmax_gate, sigmoid_gate or concat [default: softmax_gate].
    #[arg(long)]
    pub fusion: Option<Fusion>,
    /// both, audio_only or visual_only [default: both].
    #[arg(long)]
    pub modalities: Option<Modalities>,
    /// Shared projection width [default: 1024, as in the reference setup].
    #[arg(long)]
    pub hidden: Option<usize>,
    /// Dropout on projected features [default: 0.5].
    #[arg(long)]
    pub dropout: Option<f64>,
    /// Focal loss focusing parameter [default: 2.0].
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Adam learning rate [default: 1e-4].
    #[arg(long)]
    pub lr: Option<f64>,
    /// Mini-batch size [default: 32].
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Maximum epochs [default: 50].
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Epochs without validation improvement before stopping [default: 5].
    #[arg(long)]
    pub patience: Option<usize>,
    /// Global-norm gradient clip [default: off].
    #[arg(long)]
    pub clip_norm: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Checkpoint to write.
    #[arg(long)]
    pub out: PathBuf,
    /// JSON training report [default: <out>.report.json].
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelFlags,
}

/// Localizer flags shared by eval and localize.
#[derive(Debug, Args)]
pub struct LocalizerFlags {
    /// Attention sharpening temperature in (0, 1] [default: 0.5].
    #[arg(long)]
    pub tau: Option<f64>,
    /// Number of common time bins [default: 50].
    #[arg(long)]
    pub bins: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    /// train, val or test [default: test].
    #[arg(long, default_value = "test")]
    pub split: Split,
    /// Row label in the printed table [default: checkpoint file stem].
    #[arg(long)]
    pub name: Option<String>,
    /// Also write the report as JSON to this path.
    #[arg(long)]
    pub json: Option<PathBuf>,
    #[command(flatten)]
    pub localizer: LocalizerFlags,
}

#[derive(Debug, Args)]
pub struct LocalizeArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    /// train, val or test [default: test].
    #[arg(long, default_value = "test")]
    pub split: Split,
    /// Prediction file (JSON lines).
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub localizer: LocalizerFlags,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    /// Annotation CSV files; their events are pooled.
    #[arg(required = true)]
    pub csv: Vec<PathBuf>,
    /// Header override as FIELD=HEADER, e.g. start=onset; repeatable.
    #[arg(long = "column")]
    pub columns: Vec<String>,
    /// CSV of video_id,duration_s used for the video and hour totals.
    #[arg(long)]
    pub durations: Option<PathBuf>,
    /// Abort on the first malformed row instead of skipping it.
    #[arg(long)]
    pub strict: bool,
    /// Also write the statistics as JSON to this path.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// Variant to check [default: full].
    #[arg(long, conflicts_with = "all")]
    pub variant: Option<Variant>,
    /// Check every variant.
    #[arg(long)]
    pub all: bool,
    /// Test hook: perturb the analytic gradient of this parameter.
    #[arg(long)]
    pub corrupt: Option<String>,
}
