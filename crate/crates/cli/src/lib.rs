//! Configuration-driven pipeline: synthesize or ingest data, train models,
//! evaluate them against baselines, interpret them and run the image-count
//! ablation. Every command writes a manifest next to its outputs.

pub mod commands;
pub mod config;
pub mod manifest;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use livelihood_core::{Error, Result};

pub use config::{RunConfig, MODEL_NAMES};
pub use manifest::RunManifest;

#[derive(Debug, Parser)]
#[command(
    name = "livelihood",
    version,
    about = "Livelihood indicator prediction from street-level image features"
)]
pub struct Cli {
    /// TOML run configuration; built-in defaults when absent.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Overrides `seed` from the config.
    #[arg(long, global = true, value_name = "INT")]
    pub seed: Option<u64>,
    /// Overrides `out_dir` from the config.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Log more (repeat for debug output).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Load, match, label and split the input files.
    Ingest,
    /// Fit every configured model, indicator and task.
    Train,
    /// Score checkpoints and baselines on the validation split.
    Eval,
    /// Feature importance, shallow trees and prediction maps.
    Interpret,
    /// Generate a synthetic dataset with a planted signal.
    Synth,
    /// Accuracy against the number of images per cluster.
    #[command(name = "ablate-images")]
    AblateImages,
}

/// Config file (or defaults) with command-line overrides applied.
pub fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.out_dir = o.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Run one command under the output-directory lock.
pub fn run(command: Command, cfg: &RunConfig) -> Result<RunManifest> {
    let _lock = manifest::OutputLock::acquire(&cfg.out_dir)?;
    match command {
        Command::Ingest => commands::cmd_ingest(cfg),
        Command::Train => commands::cmd_train(cfg),
        Command::Eval => commands::cmd_eval(cfg),
        Command::Interpret => commands::cmd_interpret(cfg),
        Command::Synth => commands::cmd_synth(cfg),
        Command::AblateImages => commands::cmd_ablate_images(cfg),
    }
}

/// 1 for bad input or configuration, 2 for everything else.
pub fn exit_code(e: &Error) -> i32 {
    if e.is_validation() {
        1
    } else {
        2
    }
}
