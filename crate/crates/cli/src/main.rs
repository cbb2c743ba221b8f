use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use msl_core::datagen::SamplerMode;
use msl_core::model::{Head, Task, Variant};

mod commands;
mod config;

use config::{parse_sampler, parse_sizes, UsageError};

#[derive(Parser, Debug)]
#[command(name = "msl", version, about = "Multiset size learning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic universe as train/eval CSV pools.
    GenData(GenDataArgs),
    /// Train a model and write a checkpoint plus JSONL metrics.
    Train(TrainArgs),
    /// Evaluate a checkpoint on size MAE or 4-way containment.
    Eval(EvalArgs),
    /// Train matched and cross-wired heads and compare their MAE.
    CrossWire(CrossWireArgs),
    /// Build and verify clustering certificates on random instances.
    ClusterDemo(ClusterDemoArgs),
    /// Run every invariant suite; exits 1 on any failure.
    Selfcheck(SelfcheckArgs),
}

#[derive(Args, Debug, Default)]
pub struct Common {
    /// TOML file with defaults for any option.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug)]
pub struct GenDataArgs {
    #[command(flatten)]
    pub common: Common,
    /// Number of latent labels.
    #[arg(long)]
    pub k: Option<usize>,
    /// Feature dimension.
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub n_train: Option<usize>,
    #[arg(long)]
    pub n_eval: Option<usize>,
    /// Norm of the per-object noise vector.
    #[arg(long)]
    pub noise_sigma: Option<f64>,
    #[arg(long)]
    pub prototype_scale: Option<f64>,
    /// Receives train.csv and eval.csv.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ModelArgs {
    #[arg(long)]
    pub variant: Option<Variant>,
    /// Defaults to the head matching the task.
    #[arg(long)]
    pub head: Option<Head>,
    #[arg(long)]
    pub task: Option<Task>,
    /// Representation width; defaults to the number of labels in the data.
    #[arg(long)]
    pub rep_dim: Option<usize>,
    #[arg(long = "iters")]
    pub iterations: Option<usize>,
    #[arg(long = "lr")]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub beta1: Option<f64>,
    #[arg(long)]
    pub beta2: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Training multiset sizes, MIN:MAX.
    #[arg(long, value_parser = parse_sizes)]
    pub sizes: Option<(usize, usize)>,
    /// `uniform` or `relation-balanced`.
    #[arg(long, value_parser = parse_sampler)]
    pub sampler: Option<SamplerMode>,
    #[arg(long)]
    pub train_data: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub metrics: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub eval_data: Option<PathBuf>,
    /// Evaluation sizes, MIN:MAX (2:20, or 2:5 with --containment).
    #[arg(long, value_parser = parse_sizes)]
    pub sizes: Option<(usize, usize)>,
    #[arg(long)]
    pub pairs: Option<usize>,
    /// Report 4-way containment accuracy on relation-balanced pairs.
    #[arg(long)]
    pub containment: bool,
    #[arg(long)]
    pub tau: Option<f64>,
    /// Defaults to the checkpoint path with `.eval.json` appended.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct CrossWireArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub eval_data: Option<PathBuf>,
    #[arg(long, value_parser = parse_sizes)]
    pub eval_sizes: Option<(usize, usize)>,
    #[arg(long)]
    pub pairs: Option<usize>,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ClusterDemoArgs {
    #[command(flatten)]
    pub common: Common,
    /// Objects per instance.
    #[arg(long)]
    pub n: Option<usize>,
    /// Clusters per instance.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub instances: Option<usize>,
}

#[derive(Args, Debug)]
pub struct SelfcheckArgs {
    #[command(flatten)]
    pub common: Common,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    let result = match cli.command {
        Command::GenData(a) => commands::gen_data(a),
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::CrossWire(a) => commands::cross_wire(a),
        Command::ClusterDemo(a) => commands::cluster_demo(a),
        Command::Selfcheck(a) => commands::selfcheck(a),
    };
    match result {
        Ok(code) => code,
        Err(e) if e.is::<UsageError>() => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
