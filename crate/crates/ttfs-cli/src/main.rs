//! Batch CLI for TTFS network experiments: train, evaluate under
//! constraint grids, run the circuit clock sweep, export traces, and fetch
//! datasets. Every command is reproducible: identical configs and seeds
//! produce byte-identical artifacts.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::ExperimentConfig;
use ttfs::Error;

#[derive(Parser)]
#[command(name = "ttfs", version, about = "TTFS spiking network experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config file (sectioned key = value text).
    #[arg(long)]
    config: PathBuf,
    /// Override the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the output directory.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Train a network and write the model archive plus loss curve.
    Train {
        #[command(flatten)]
        common: Common,
    },
    /// Evaluate a model archive over the constraint grid.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Model archive path.
        #[arg(long)]
        model: PathBuf,
    },
    /// Clock-period sweep with operating-point selection.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
    },
    /// Export membrane traces and spike rasters for selected samples.
    ExportTraces {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
    },
    /// Download dataset files into the cache.
    FetchData {
        #[command(flatten)]
        common: Common,
        /// Mirror base URL (overrides the config).
        #[arg(long)]
        mirror: Option<String>,
    },
}

fn resolve(common: &Common) -> ttfs::Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
        cfg.train.seed = seed;
        cfg.sections
            .entry("run".into())
            .or_default()
            .insert("seed".into(), seed.to_string());
    }
    if let Some(out_dir) = &common.out_dir {
        cfg.out_dir = out_dir.clone();
    }
    if let Some(workers) = common.workers {
        cfg.workers = workers;
    }
    if cfg.workers > 0 {
        // Ignore the error if a pool already exists (tests call this twice).
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build_global();
    }
    Ok(cfg)
}

fn run() -> ttfs::Result<()> {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap usage errors exit with code 1 (config/usage class).
            eprint!("{e}");
            std::process::exit(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match &cli.command {
        Command::Train { common } => commands::cmd_train(&resolve(common)?),
        Command::Eval { common, model } => commands::cmd_eval(&resolve(common)?, model),
        Command::Sweep { common, model } => commands::cmd_sweep(&resolve(common)?, model),
        Command::ExportTraces { common, model } => {
            commands::cmd_export_traces(&resolve(common)?, model)
        }
        Command::FetchData { common, mirror } => {
            commands::cmd_fetch_data(&resolve(common)?, mirror.as_deref())
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) | Error::ArchiveVersion { .. } => ExitCode::from(1),
                _ => ExitCode::from(2),
            }
        }
    }
}
