//! `multical`: generate synthetic data, calibrate, evaluate, audit and sweep.

use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod audit;
mod calibrate;
mod evaluate;
mod gen;
mod io;
mod sweep;

#[derive(Parser)]
#[command(
    name = "multical",
    version,
    about = "Multicalibration by depth-two tree ensemble ERM"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset and its JSON sidecar
    #[command(subcommand)]
    Gen(gen::GenCommand),
    /// Fit a calibrator and write the model JSON and a JSONL trace
    Calibrate(calibrate::CalibrateArgs),
    /// Evaluate a model over a sweep of discretization sizes
    Evaluate(evaluate::EvaluateArgs),
    /// Loss-saturation audit and multicalibration bound check
    Audit(audit::AuditArgs),
    /// Hyperparameter grid search over repeated validation splits
    Sweep(sweep::SweepArgs),
}

/// A flag combination the command does not accept.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<UsageError>().is_some() {
        return 2;
    }
    match err.downcast_ref::<multical::Error>() {
        Some(multical::Error::Config(_)) => 2,
        Some(multical::Error::Numeric(_)) => 4,
        _ => 3,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen(cmd) => gen::run(cmd),
        Command::Calibrate(args) => calibrate::run(args),
        Command::Evaluate(args) => evaluate::run(args),
        Command::Audit(args) => audit::run(args),
        Command::Sweep(args) => sweep::run(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let line = format!("{err:#}").replace('\n', " ");
            eprintln!("error: {line}");
            ExitCode::from(exit_code(&err))
        }
    }
}
