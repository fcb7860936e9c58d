//! Command line front end: dataset generation, training, evaluation,
//! gradient checking, and filter/feature export.
//!
//! Log verbosity is controlled by the `STEG_LOG` environment variable
//! (error, warn, info, debug, trace; default info).

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use std::path::PathBuf;
use stegcli::commands;
use stegcli::config::RunConfig;
use stegcli::lockfile;
use stegcore::checkpoint::load_checkpoint;
use stegcore::stegosim::SplitKind;

#[derive(Parser)]
#[command(
    name = "steg",
    about = "End-to-end steganalysis: learned residuals + compact classifier over synthetic cover/stego pairs",
    version
)]
struct Cli {
    /// Run configuration file (key = value lines; missing keys take
    /// defaults).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Override the output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Checkpoint path (eval and the export commands).
    #[arg(long, global = true)]
    checkpoint: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic cover/stego dataset.
    Generate,
    /// Train the joint model on a generated dataset.
    Train,
    /// Evaluate a checkpoint on a dataset split.
    Eval {
        /// Split to evaluate: train, val or test.
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// Export the residual kernels (raw and effective) as CSV + PGM.
    ExportFilters,
    /// Export group-1 abs-layer feature maps for one image.
    ExportFeatures {
        /// PGM image to run through the residual network and first group.
        #[arg(long)]
        image: PathBuf,
    },
    /// Finite-difference check of every primitive and the composed graph.
    Gradcheck {
        /// Spatial size of the composed-graph check.
        #[arg(long, default_value_t = 16)]
        scale: usize,
    },
}

fn resolved_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.train.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    Ok(cfg)
}

fn require_checkpoint(cli: &Cli) -> Result<PathBuf> {
    cli.checkpoint
        .clone()
        .ok_or_else(|| anyhow::anyhow!("this command needs --checkpoint <path>"))
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("STEG_LOG", "info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();

    match &cli.command {
        Command::Generate => {
            let cfg = resolved_config(&cli)?;
            commands::generate::run(&cfg)
        }
        Command::Train => {
            let cfg = resolved_config(&cli)?;
            commands::train::run(&cfg)
        }
        Command::Eval { split } => {
            let cfg = resolved_config(&cli)?;
            let split: SplitKind = split
                .parse()
                .with_context(|| format!("bad --split '{split}'"))?;
            let checkpoint = require_checkpoint(&cli)?;
            commands::eval::run(&cfg, &checkpoint, split)
        }
        Command::ExportFilters => {
            let cfg = resolved_config(&cli)?;
            let checkpoint = require_checkpoint(&cli)?;
            let model = load_checkpoint(&checkpoint, None)?;
            let _lock = lockfile::DirLock::acquire(&cfg.out_dir)?;
            let written = commands::export::export_filters(&model, &cfg.out_dir)?;
            for path in written {
                println!("{}", path.display());
            }
            Ok(())
        }
        Command::ExportFeatures { image } => {
            let cfg = resolved_config(&cli)?;
            let checkpoint = require_checkpoint(&cli)?;
            let model = load_checkpoint(&checkpoint, None)?;
            let _lock = lockfile::DirLock::acquire(&cfg.out_dir)?;
            let written = commands::export::export_features(&model, image, &cfg.out_dir)?;
            for path in written {
                println!("{}", path.display());
            }
            Ok(())
        }
        Command::Gradcheck { scale } => {
            if commands::gradcheck::run(*scale)? {
                Ok(())
            } else {
                bail!("gradient check failed")
            }
        }
    }
}
