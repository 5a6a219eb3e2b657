mod args;
mod commands;
mod output;

use std::process::ExitCode;

use clap::Parser;
use crysplas::Error;

use crate::args::Cli;

/// Exit status: 0 success, 1 a check failed, 2 bad input.
pub enum Failure {
    Check(String),
    Input { kind: &'static str, reason: String },
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let kind = match &e {
            Error::Infeasible { .. } | Error::NotRepresentable { .. } | Error::SolverDiverged { .. } => {
                return Failure::Check(e.to_string())
            }
            Error::Io(_) => "io",
            Error::Parse(_) => "parse",
            Error::Resolution(_) => "resolution",
            _ => "config",
        };
        Failure::Input { kind, reason: e.to_string() }
    }
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand) {
                let _ = e.print();
                return ExitCode::from(if e.kind() == ErrorKind::DisplayHelp { 0 } else { 2 });
            }
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("error[usage]: {}", one_line(first));
            return ExitCode::from(2);
        }
    };
    if cli.version {
        println!("crysplas {} (format {})", env!("CARGO_PKG_VERSION"), crysplas::FORMAT_VERSION);
        return ExitCode::SUCCESS;
    }
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Check(reason)) => {
            eprintln!("error[check]: {}", one_line(&reason));
            ExitCode::from(1)
        }
        Err(Failure::Input { kind, reason }) => {
            eprintln!("error[{kind}]: {}", one_line(&reason));
            ExitCode::from(2)
        }
    }
}
