//! `qtransistor`: regenerate the exchange, transistor and tomography data
//! sets as CSV/JSON files.

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgAction, Parser, Subcommand};

use config::Overrides;
use error::CliError;

#[derive(Parser)]
#[command(name = "qtransistor", version, about = "Coupler-controlled iSWAP simulator")]
struct Cli {
    /// JSON run configuration; omitted keys keep their defaults.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Output directory (overrides output.dir).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// RNG seed (overrides experiment.seed).
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,

    /// Include decoherence (overrides experiment.noisy).
    #[arg(long, global = true, value_name = "BOOL", action = ArgAction::Set)]
    noisy: Option<bool>,

    /// Override one config key, e.g. `--set circuit.g12_ghz=0.006`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// P(|01>) versus coupler frequency and interaction time.
    Chevron,
    /// Fitted and closed-form exchange rate versus coupler detuning.
    CouplingCurve,
    /// Open- and closed-gate transfer traces with a summary.
    Transistor,
    /// Process tomography of the gate for experiment.coupler_state.
    Qpt {
        /// Reconstruct from recorded JSON-lines tomography data instead of simulating.
        #[arg(long, value_name = "PATH")]
        records: Option<PathBuf>,
    },
    /// Readout assignment matrix, its inverse and a correction round trip.
    ReadoutCal,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let ov = Overrides {
        sets: cli.set,
        out: cli.out,
        seed: cli.seed,
        noisy: cli.noisy,
    };
    let cfg = config::load(cli.config.as_deref(), &ov)?;
    match cli.command {
        Command::Chevron => commands::chevron(&cfg),
        Command::CouplingCurve => commands::coupling_curve(&cfg),
        Command::Transistor => commands::transistor(&cfg),
        Command::Qpt { records } => commands::qpt(&cfg, records.as_deref()),
        Command::ReadoutCal => commands::readout_cal(&cfg),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
