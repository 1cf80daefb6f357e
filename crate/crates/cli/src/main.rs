//! `graphfraud`: command line front end for the fraud detection pipeline.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use graphfraud_core::{Error, ErrorCategory, Result};

use crate::commands::Run;
use crate::config::PipelineConfig;

#[derive(Parser, Debug)]
#[command(name = "graphfraud", version, about = "Fraud detection on non-attributed graphs")]
struct Cli {
    /// Pipeline configuration (TOML), or a run manifest to replay.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the base seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for parallel sections.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic multi-entity graph with planted fraud rings.
    Synth,
    /// Collapse the multi-entity graph into the single-entity graph.
    Transform,
    /// Compute node features on the single-entity graph.
    Featurize,
    /// Contrastive pre-training of the encoder.
    Pretrain,
    /// Supervised fine-tuning and prediction for every target node.
    Finetune,
    /// Cross-validated evaluation grid.
    Eval,
    /// Write node embeddings for plotting.
    Export {
        /// Use the pre-trained encoder instead of the fine-tuned model.
        #[arg(long)]
        encoder: bool,
    },
}

fn exit_code(category: ErrorCategory) -> u8 {
    match category {
        ErrorCategory::Config => 2,
        ErrorCategory::Io => 3,
        ErrorCategory::Numeric => 4,
        ErrorCategory::Validation => 5,
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.paths.output = out.clone();
    }
    if cli.threads == 0 {
        return Err(Error::Config("--threads must be at least 1".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build_global()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    std::fs::create_dir_all(&cfg.paths.output)?;

    let name = match cli.command {
        Command::Synth => "synth",
        Command::Transform => "transform",
        Command::Featurize => "featurize",
        Command::Pretrain => "pretrain",
        Command::Finetune => "finetune",
        Command::Eval => "eval",
        Command::Export { .. } => "export",
    };
    let mut run = Run::new(name, cfg);
    match cli.command {
        Command::Synth => commands::synth(&mut run)?,
        Command::Transform => commands::transform(&mut run)?,
        Command::Featurize => commands::featurize(&mut run)?,
        Command::Pretrain => commands::pretrain_cmd(&mut run)?,
        Command::Finetune => commands::finetune_cmd(&mut run)?,
        Command::Eval => commands::eval(&mut run)?,
        Command::Export { encoder } => commands::export(&mut run, encoder)?,
    }
    let manifest = run.write_manifest(cli.threads)?;
    commands::report(&run, &manifest);
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let category = e.category();
            eprintln!("error [{category}]: {e}");
            ExitCode::from(exit_code(category))
        }
    }
}
