use std::path::PathBuf;
use std::process::ExitCode;

use avgtime_cli::commands::{self, SweepAxis, SynthArgs};
use avgtime_cli::config::RunConfig;
use avgtime_cli::CliError;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "avgtime", about = "Channel-averaging long-horizon forecaster", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write checkpoint + metrics artifacts.
    Train {
        #[arg(short, long)]
        config: PathBuf,
    },
    /// Evaluate a checkpoint on the test split.
    Eval {
        #[arg(short, long)]
        config: PathBuf,
        #[arg(short = 'k', long)]
        checkpoint: PathBuf,
    },
    /// Compute and emit the channel grouping only.
    Cluster {
        #[arg(short, long)]
        config: PathBuf,
    },
    /// Train once per value of a sweep axis and tabulate the results.
    Sweep {
        #[arg(short, long)]
        config: PathBuf,
        #[arg(long)]
        axis: String,
        #[arg(long, value_delimiter = ',')]
        values: Vec<f64>,
        /// Run sweep points on separate threads.
        #[arg(long, default_value_t = false)]
        parallel: bool,
    },
    /// Compare the raw-path-only model against the full averaged model.
    Ablation {
        #[arg(short, long)]
        config: PathBuf,
    },
    /// Generate a synthetic dataset CSV.
    Synth {
        #[arg(long)]
        kind: String,
        #[arg(long)]
        channels: usize,
        #[arg(long)]
        length: usize,
        #[arg(long, default_value_t = 0.0)]
        noise_std: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        output: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Train { config } => {
            let config = RunConfig::from_file(config)?;
            let summary = commands::run_train(&config)?;
            println!(
                "done: test mse {:.6}, mae {:.6} ({} epochs, best {})",
                summary.report.mse,
                summary.report.mae,
                summary.report.epochs_run,
                summary.report.best_epoch
            );
            println!("artifacts in {}", config.output_dir);
            Ok(())
        }
        Command::Eval { config, checkpoint } => {
            let config = RunConfig::from_file(config)?;
            commands::run_eval(&config, &checkpoint)?;
            Ok(())
        }
        Command::Cluster { config } => {
            let config = RunConfig::from_file(config)?;
            commands::run_cluster(&config)
        }
        Command::Sweep { config, axis, values, parallel } => {
            let config = RunConfig::from_file(config)?;
            let axis = SweepAxis::parse(&axis)?;
            commands::run_sweep(&config, axis, &values, parallel)?;
            Ok(())
        }
        Command::Ablation { config } => {
            let config = RunConfig::from_file(config)?;
            commands::run_ablation(&config)?;
            Ok(())
        }
        Command::Synth { kind, channels, length, noise_std, seed, output } => {
            commands::run_synth(&SynthArgs { kind, channels, length, noise_std, seed, output })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e);
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
