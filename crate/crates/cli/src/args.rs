use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "sigfuse", version, about = "Fused multi-feature face attribute networks")]
pub struct Cli {
    /// Network size preset.
    #[arg(long, global = true, env = "SIGFUSE_PROFILE", value_parser = ["paper", "desk"])]
    pub profile: Option<String>,
    /// Seed for initialization, shuffling and sampling.
    #[arg(long, global = true, env = "SIGFUSE_SEED")]
    pub seed: Option<u64>,
    /// TOML file with defaults for any tunable flag.
    #[arg(long, global = true, env = "SIGFUSE_CONFIG")]
    pub config: Option<PathBuf>,
    /// env_logger filter, e.g. `info` or `sigfuse=debug`.
    #[arg(long, global = true, env = "SIGFUSE_LOG", default_value = "info")]
    pub log_level: String,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a network with one of the five regimes.
    Train(TrainArgs),
    /// Evaluate every feature combination on a split.
    Eval(EvalArgs),
    /// Compute LBP descriptors for a directory of PGM/PPM images.
    ExtractLbp(LbpArgs),
    /// Generate a synthetic multi-view dataset.
    Synth(SynthArgs),
    /// Serve a model over the signature protocol.
    Serve(ServeArgs),
    /// Encode features locally and ask a server for attribute scores.
    Query(QueryArgs),
    /// Write the client-side branches of a model to their own file.
    ExportEncoder(ExportArgs),
}

#[derive(Debug, Args, Clone, Default)]
pub struct DataArgs {
    /// CelebA-style attribute list.
    #[arg(long)]
    pub attrs: Option<PathBuf>,
    /// Feature bank file; repeat for each kind.
    #[arg(long = "bank")]
    pub banks: Vec<PathBuf>,
    /// `<id> <0|1|2>` partition list. Without it rows are split by ratio.
    #[arg(long)]
    pub partition: Option<PathBuf>,
    /// Train,val,test fractions used without a partition file.
    #[arg(long, value_delimiter = ',')]
    pub split_ratios: Option<Vec<f64>>,
    #[arg(long)]
    pub split_seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// dedicated:<kind> | allfeat | moddrop | multistage:<kind> | allfeatinit
    #[arg(long, env = "SIGFUSE_REGIME")]
    pub regime: Option<String>,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, env = "SIGFUSE_LR")]
    pub lr: Option<f64>,
    #[arg(long, env = "SIGFUSE_BATCH_SIZE")]
    pub batch_size: Option<usize>,
    /// Epochs per stage.
    #[arg(long, env = "SIGFUSE_EPOCHS")]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub momentum: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    /// Train independent branch stages on threads (same result).
    #[arg(long)]
    pub parallel: bool,
    #[arg(long)]
    pub branch_hidden: Option<usize>,
    #[arg(long)]
    pub signature_dim: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub trunk_hidden: Option<Vec<usize>>,
    /// Directory for model.hnet, train_log.csv and manifest.json.
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Replay a previous run; all other settings come from the manifest.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long, env = "SIGFUSE_MODEL")]
    pub model: Option<PathBuf>,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value = "test", value_parser = ["train", "val", "test"])]
    pub split: String,
    /// Restrict the sweep to combinations of these kinds.
    #[arg(long, value_delimiter = ',')]
    pub kinds: Option<Vec<String>>,
    /// Directory for report.csv, report.md and manifest.json.
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct LbpArgs {
    #[arg(long)]
    pub images: Option<PathBuf>,
    #[arg(long)]
    pub cell: Option<usize>,
    /// Kind name stored in the bank.
    #[arg(long, default_value = "lbp")]
    pub kind: String,
    /// Appended to each file stem to form the image id (e.g. `.jpg`).
    #[arg(long, default_value = "")]
    pub id_suffix: String,
    /// Output bank; the manifest is written next to it.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub latent_dim: Option<usize>,
    #[arg(long)]
    pub attributes: Option<usize>,
    /// View names.
    #[arg(long, value_delimiter = ',')]
    pub kinds: Option<Vec<String>>,
    /// Per-view dim (one value for all, or one per view).
    #[arg(long, value_delimiter = ',')]
    pub view_dim: Option<Vec<usize>>,
    /// Per-view noise level (one value for all, or one per view).
    #[arg(long, value_delimiter = ',')]
    pub noise: Option<Vec<f64>>,
    /// Train,val,test counts.
    #[arg(long, value_delimiter = ',')]
    pub counts: Option<Vec<usize>>,
    /// Seed for the projections and mixing matrices.
    #[arg(long)]
    pub world_seed: Option<u64>,
    /// Directory for attrs.txt, partition.txt, <kind>.fbnk and manifest.json.
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, env = "SIGFUSE_MODEL")]
    pub model: PathBuf,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    #[arg(long, env = "SIGFUSE_PORT", default_value_t = 7878)]
    pub port: u16,
}

#[derive(Debug, Args)]
pub struct QueryArgs {
    /// Encoder or full model file providing the branches.
    #[arg(long, env = "SIGFUSE_ENCODER")]
    pub encoder: PathBuf,
    /// host:port; defaults to 127.0.0.1 and SIGFUSE_PORT.
    #[arg(long)]
    pub endpoint: Option<String>,
    #[arg(long, env = "SIGFUSE_PORT", default_value_t = 7878)]
    pub port: u16,
    /// Comma-separated kinds to use; defaults to every kind supplied.
    #[arg(long)]
    pub mask: Option<String>,
    /// Feature banks to look the image up in.
    #[arg(long = "bank")]
    pub banks: Vec<PathBuf>,
    /// Image id to look up in the banks.
    #[arg(long)]
    pub id: Option<String>,
    /// PGM/PPM image to describe with LBP on the client.
    #[arg(long)]
    pub image: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    pub cell: usize,
    #[arg(long, default_value = "lbp")]
    pub image_kind: String,
    /// Print scores as JSON instead of `name<TAB>score` lines.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long, env = "SIGFUSE_MODEL")]
    pub model: PathBuf,
    /// Kinds to keep (all by default).
    #[arg(long, value_delimiter = ',')]
    pub kinds: Option<Vec<String>>,
    #[arg(long)]
    pub out: PathBuf,
}
