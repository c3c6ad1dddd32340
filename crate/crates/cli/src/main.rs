mod commands;
mod config;
mod model;

use std::fmt;
use std::path::Path;
use std::process::ExitCode;

use clap::Parser;
use graph_recon::Error;
use serde::Serialize;

use config::Cli;

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, config or input files. Exit code 2.
    Usage(String),
    /// The computation itself failed. Exit code 1.
    Compute(Error),
    /// As `Compute`, at a given place in the input.
    ComputeAt(String, Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            Self::Usage(_) => 2,
            Self::Compute(_) | Self::ComputeAt(..) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Usage(msg) => f.write_str(msg),
            Self::Compute(e) => write!(f, "{e}"),
            Self::ComputeAt(place, e) => write!(f, "{place}: {e}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidConfig(_)
            | Error::InvalidClusterCount { .. }
            | Error::NoObservedNodes { .. }
            | Error::InvalidTarget(_)
            | Error::BandwidthTooLarge { .. } => Self::Usage(e.to_string()),
            other => Self::Compute(other),
        }
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(Error::from)?;
    std::fs::write(path, text + "\n").map_err(Error::from)?;
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
