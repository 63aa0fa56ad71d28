use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use tokweight::pipeline::{self, Inputs, RunConfig};

#[derive(Parser)]
#[command(name = "tokweight", version, about = "Token-weighted training for semantic-ID recommenders")]
struct Cli {
    /// JSON run config; every field has a default.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config's top-level seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Root directory for stage outputs.
    #[arg(long, global = true, default_value = "runs")]
    out: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Only print errors.
    #[arg(long, short, global = true)]
    quiet: bool,
    /// Config override such as `train.c=0.001`; repeatable, applied after --config.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Default)]
struct Upstream {
    /// Dataset directory (default: derived from the config).
    #[arg(long)]
    data: Option<PathBuf>,
    /// Quantizer directory (default: derived from the config).
    #[arg(long)]
    quant: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset.
    Synth,
    /// Import interactions (.csv or .jsonl with user,item,timestamp) and item embeddings.
    Ingest {
        #[arg(long)]
        interactions: PathBuf,
        /// Embeddings as JSON lines ({"item": …, "vec": […]}) or the binary table format.
        #[arg(long)]
        embeddings: PathBuf,
    },
    /// Fit codebooks and assign semantic IDs.
    Quantize {
        #[command(flatten)]
        up: Upstream,
    },
    /// Write purity, filter-ratio and dispersion reports.
    Analyze {
        #[command(flatten)]
        up: Upstream,
    },
    /// Train a model, resuming from the stage checkpoint if one exists.
    Train {
        #[command(flatten)]
        up: Upstream,
    },
    /// Evaluate a trained checkpoint.
    Eval {
        #[command(flatten)]
        up: Upstream,
        /// Training directory (default: derived from the config).
        #[arg(long)]
        train: Option<PathBuf>,
    },
    /// Train and evaluate every configured mode over every configured seed.
    Ablate,
}

fn load_config(cli: &Cli) -> anyhow::Result<RunConfig> {
    let text = match &cli.config {
        Some(p) => std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
        None => String::new(),
    };
    let mut overrides = cli.overrides.clone();
    if let Some(seed) = cli.seed {
        overrides.push(format!("seed={seed}"));
    }
    Ok(RunConfig::from_json(&text, &overrides)?)
}

fn inputs(up: &Upstream, train: Option<&Path>) -> Inputs {
    Inputs {
        data: up.data.clone(),
        quant: up.quant.clone(),
        train: train.map(Path::to_path_buf),
    }
}

fn run(cli: &Cli) -> anyhow::Result<PathBuf> {
    let cfg = load_config(cli)?;
    let out = &cli.out;
    let dir = match &cli.command {
        Command::Synth => pipeline::cmd_synth(&cfg, out)?,
        Command::Ingest {
            interactions,
            embeddings,
        } => pipeline::cmd_ingest(&cfg, interactions, embeddings, out)?,
        Command::Quantize { up } => pipeline::cmd_quantize(&cfg, out, &inputs(up, None))?,
        Command::Analyze { up } => pipeline::cmd_analyze(&cfg, out, &inputs(up, None))?,
        Command::Train { up } => pipeline::cmd_train(&cfg, out, &inputs(up, None))?,
        Command::Eval { up, train } => pipeline::cmd_eval(&cfg, out, &inputs(up, train.as_deref()))?,
        Command::Ablate => pipeline::cmd_ablate(&cfg, out)?,
    };
    Ok(dir)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet { "error" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    }
    match run(&cli) {
        Ok(dir) => {
            println!("{}", dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
