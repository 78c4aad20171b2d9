//! `dcl`: command-line front end for the clustering-pretraining laboratory.
//!
//! Exit codes: 0 success, 1 configuration error (bad flags, bad config
//! file, out-of-range hyperparameters), 2 runtime failure.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "dcl", version, about = "Clustering-based pretraining experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train with periodic re-clustering, then linear-probe the result.
    Run {
        /// Run config JSON (a manifest.json from a previous run also works).
        #[arg(long)]
        config: PathBuf,
        /// Output directory; must not already hold a run.
        #[arg(long)]
        out: PathBuf,
    },
    /// One full run per value of a single config field, plus a comparison table.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Field to vary: k, seed, halt, or pca.
        #[arg(long)]
        axis: String,
        /// Comma-separated values; children run in ascending order.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<u64>,
    },
    /// Sample the untrained-feature clustering alignment across seeds per
    /// candidate value and rank candidates by median.
    IaSample {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Field to rank: k, pca, batch_size, lr, weight_decay, or momentum.
        #[arg(long)]
        hyperparam: String,
        /// Comma-separated candidate values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        /// Weight initializations per candidate.
        #[arg(long, default_value_t = dcl_core::ia_select::DESK_DEFAULT_N_SEEDS)]
        seeds: usize,
        /// First seed; candidate i uses seed_base .. seed_base + seeds.
        #[arg(long, default_value_t = 0)]
        seed_base: u64,
    },
    /// Linear-probe a saved checkpoint on frozen features.
    Probe {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Feature layer to probe ("features" always names the probe layer).
        #[arg(long)]
        layer: String,
        /// Config supplying the dataset, transforms, and probe epochs.
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Pull artifacts out of a finished run directory.
    Export {
        /// A directory produced by `dcl run`.
        #[arg(long)]
        run: PathBuf,
        #[arg(long, value_enum)]
        what: ExportWhat,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ExportWhat {
    /// Re-extract probe-layer features from the checkpoint into features.fmat.
    Features,
    /// Print the per-cycle metrics CSV to stdout.
    Metrics,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Run { config, out } => commands::run(&config, &out),
        Command::Sweep { config, out, axis, values } => {
            commands::sweep(&config, &out, &axis, &values)
        }
        Command::IaSample { config, out, hyperparam, values, seeds, seed_base } => {
            commands::ia_sample(&config, &out, &hyperparam, &values, seeds, seed_base)
        }
        Command::Probe { checkpoint, layer, config, out } => {
            commands::probe(&checkpoint, &layer, &config, &out)
        }
        Command::Export { run, what } => commands::export(&run, what),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            let mut source = std::error::Error::source(&err);
            while let Some(cause) = source {
                eprintln!("  caused by: {cause}");
                source = cause.source();
            }
            ExitCode::from(if err.is_config() { 1 } else { 2 })
        }
    }
}
