//! `framestab`: dataset synthesis, training, stabilization and evaluation
//! from the command line.
//!
//! Exit codes: 0 success, 2 usage, 3 state/precondition, 4 data integrity.

mod cmd;
mod plot;
mod runmeta;

use clap::{ArgMatches, CommandFactory, FromArgMatches, Parser, Subcommand};
use framestab::Error;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Debug, Parser)]
#[command(name = "framestab", version, about = "Optical-flow-free video stabilization pipeline")]
pub struct Cli {
    /// Master seed; every random choice derives from it.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Scale profile for training and synthesis defaults.
    #[arg(long, global = true, default_value = "desk")]
    pub profile: String,
    /// Optional JSON config file; flags given on the command line win.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Log level (error|warn|info|debug|trace).
    #[arg(long, global = true, default_value = "info")]
    pub log_level: String,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic datasets.
    #[command(subcommand)]
    Synth(cmd::synth::SynthCommand),
    /// Train the stabilization or refinement network.
    Train(cmd::train::TrainArgs),
    /// Stabilize a frame sequence.
    Stabilize(cmd::stabilize::StabilizeArgs),
    /// Evaluate a stabilization run (stability, distortion, cropping).
    Evaluate(cmd::evaluate::EvaluateArgs),
    /// Demonstrate the trajectory smoothing oracle and its damping law.
    SmoothDemo(cmd::smooth::SmoothDemoArgs),
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Integrity(_) | Error::Format(_) => 4,
        Error::Io { .. } => 1,
        _ => 3,
    }
}

fn main() -> ExitCode {
    let matches = Cli::command().get_matches();
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(2);
        }
    };
    env_logger::Builder::new()
        .parse_filters(&cli.log_level)
        .format_timestamp(None)
        .init();

    let sub: &ArgMatches = match matches.subcommand() {
        Some((_, m)) => m,
        None => return ExitCode::from(2),
    };

    let result = match &cli.command {
        Command::Synth(args) => cmd::synth::run(&cli, args, sub),
        Command::Train(args) => cmd::train::run(&cli, args, sub),
        Command::Stabilize(args) => cmd::stabilize::run(&cli, args, sub),
        Command::Evaluate(args) => cmd::evaluate::run(&cli, args, sub),
        Command::SmoothDemo(args) => cmd::smooth::run(&cli, args, sub),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            log::error!("{err}");
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
