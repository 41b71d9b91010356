//! `mvts-cgan` command-line interface.
//!
//! Exit status: 0 on success, 2 for usage and configuration errors
//! (including missing input files), 1 for failures while running.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgAction, Args, Parser, Subcommand};

use config::{RunConfig, UsageError};

#[derive(Parser, Debug)]
#[command(name = "mvts-cgan", version, about = "Conditional GAN augmentation of multivariate time series")]
struct Cli {
    /// `key = value` configuration file, e.g. a previous `config_<command>.txt`.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Override any configuration key; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,

    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Read a directory of per-sample tables, impute and scale.
    Ingest(IngestArgs),
    /// Generate a labelled synthetic ground-truth dataset, then scale it.
    Toy(ToyArgs),
    /// Train the conditional GAN, writing periodic checkpoints.
    Train(TrainArgs),
    /// Sample synthetic series from a checkpoint.
    Synth(SynthArgs),
    /// Fidelity metrics or classification.
    #[command(subcommand)]
    Eval(EvalCommand),
    /// KL and Adversarial Accuracy over checkpoints, grouped by epoch.
    Report(MetricArgs),
}

#[derive(Subcommand, Debug)]
enum EvalCommand {
    /// KL divergence of per-sample feature histograms.
    Kl(MetricArgs),
    /// Adversarial Accuracy.
    Aa(MetricArgs),
    /// Baseline and augmented SVM, scored with TSS and HSS2.
    Clf(ClfArgs),
}

#[derive(Args, Debug)]
struct IngestArgs {
    #[arg(long)]
    dir: Option<String>,
    #[arg(long)]
    manifest: Option<String>,
    /// Comma-separated channel names.
    #[arg(long)]
    channels: Option<String>,
    #[arg(long)]
    delimiter: Option<String>,
    #[arg(long)]
    partition: Option<String>,
    /// Apply this scaler instead of fitting one.
    #[arg(long)]
    scaler: Option<String>,
}

#[derive(Args, Debug)]
struct ToyArgs {
    #[arg(long)]
    n_pos: Option<String>,
    #[arg(long)]
    n_neg: Option<String>,
    #[arg(long)]
    timesteps: Option<String>,
    #[arg(long)]
    channels: Option<String>,
    #[arg(long)]
    partition: Option<String>,
    #[arg(long)]
    scaler: Option<String>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    data: Option<String>,
    #[arg(long)]
    epochs: Option<String>,
    #[arg(long)]
    checkpoint_every: Option<String>,
    #[arg(long)]
    batch_size: Option<String>,
    #[arg(long)]
    hidden: Option<String>,
    #[arg(long)]
    d_lr: Option<String>,
    #[arg(long)]
    g_lr: Option<String>,
    /// all_classes or flare_only.
    #[arg(long)]
    conditioning: Option<String>,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long)]
    checkpoint: Option<String>,
    /// flare or noflare.
    #[arg(long)]
    class: Option<String>,
    #[arg(long)]
    count: Option<String>,
    /// Generate |negative| - |positive| of this dataset.
    #[arg(long)]
    balance_with: Option<String>,
}

#[derive(Args, Debug)]
struct MetricArgs {
    /// Directory of checkpoint files.
    #[arg(long)]
    checkpoints: Option<String>,
    /// Real dataset to compare against.
    #[arg(long)]
    data: Option<String>,
    #[arg(long)]
    n_synth: Option<String>,
    #[arg(long)]
    bins: Option<String>,
    /// Also write SVG box plots.
    #[arg(long)]
    svg: bool,
}

#[derive(Args, Debug)]
struct ClfArgs {
    #[arg(long)]
    train: Option<String>,
    #[arg(long)]
    synth: Option<String>,
    /// Test dataset; repeatable.
    #[arg(long)]
    test: Vec<String>,
    /// flatten or stats.
    #[arg(long)]
    features: Option<String>,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Ingest(_) => "ingest",
            Command::Toy(_) => "toy",
            Command::Train(_) => "train",
            Command::Synth(_) => "synth",
            Command::Eval(EvalCommand::Kl(_)) => "eval_kl",
            Command::Eval(EvalCommand::Aa(_)) => "eval_aa",
            Command::Eval(EvalCommand::Clf(_)) => "eval_clf",
            Command::Report(_) => "report",
        }
    }

    /// Flag values as configuration keys.
    fn overrides(&self) -> Vec<(&'static str, String)> {
        let mut kv: Vec<(&'static str, Option<String>)> = Vec::new();
        match self {
            Command::Ingest(a) => kv.extend([
                ("ingest.dir", a.dir.clone()),
                ("ingest.manifest", a.manifest.clone()),
                ("ingest.channels", a.channels.clone()),
                ("ingest.delimiter", a.delimiter.clone()),
                ("ingest.partition", a.partition.clone()),
                ("ingest.scaler", a.scaler.clone()),
            ]),
            Command::Toy(a) => kv.extend([
                ("toy.n_pos", a.n_pos.clone()),
                ("toy.n_neg", a.n_neg.clone()),
                ("toy.timesteps", a.timesteps.clone()),
                ("toy.channels", a.channels.clone()),
                ("toy.partition", a.partition.clone()),
                ("toy.scaler", a.scaler.clone()),
            ]),
            Command::Train(a) => kv.extend([
                ("train.data", a.data.clone()),
                ("train.epochs", a.epochs.clone()),
                ("train.checkpoint_every", a.checkpoint_every.clone()),
                ("train.batch_size", a.batch_size.clone()),
                ("train.hidden", a.hidden.clone()),
                ("train.d_learning_rate", a.d_lr.clone()),
                ("train.g_learning_rate", a.g_lr.clone()),
                ("train.conditioning", a.conditioning.clone()),
            ]),
            Command::Synth(a) => kv.extend([
                ("synth.checkpoint", a.checkpoint.clone()),
                ("synth.class", a.class.clone()),
                ("synth.count", a.count.clone()),
                ("synth.balance_with", a.balance_with.clone()),
            ]),
            Command::Eval(EvalCommand::Kl(a)) | Command::Eval(EvalCommand::Aa(a)) | Command::Report(a) => kv.extend([
                ("eval.checkpoints", a.checkpoints.clone()),
                ("eval.data", a.data.clone()),
                ("metrics.n_synth", a.n_synth.clone()),
                ("metrics.bins", a.bins.clone()),
                ("metrics.svg", a.svg.then(|| "true".to_string())),
            ]),
            Command::Eval(EvalCommand::Clf(a)) => kv.extend([
                ("clf.train", a.train.clone()),
                ("clf.synth", a.synth.clone()),
                ("clf.test", (!a.test.is_empty()).then(|| a.test.join(","))),
                ("svm.features", a.features.clone()),
            ]),
        }
        kv.into_iter().filter_map(|(k, v)| v.map(|v| (k, v))).collect()
    }
}

fn resolve(cli: &Cli) -> Result<RunConfig, UsageError> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &cli.config {
        cfg.load(path)?;
    }
    if let Some(seed) = cli.seed {
        cfg.set("seed", &seed.to_string())?;
    }
    if let Some(out) = &cli.out {
        cfg.set("out", &out.to_string_lossy())?;
    }
    for (k, v) in cli.command.overrides() {
        cfg.set(k, &v)?;
    }
    for kv in &cli.set {
        cfg.apply_override(kv)?;
    }
    Ok(cfg)
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<UsageError>().is_some() {
        return 2;
    }
    match err.downcast_ref::<mvts_cgan::Error>() {
        Some(mvts_cgan::Error::Config(_)) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = resolve(&cli)
        .map_err(anyhow::Error::from)
        .and_then(|cfg| commands::run(cli.command.name(), &cfg));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
