mod args;
mod commands;
mod config;
mod error;

use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use args::{Cli, Command};
use error::{CliError, CliResult};

const SUBCOMMANDS: [&str; 5] = ["ode-solve", "smile", "mc", "validate", "greeks"];

/// Locate `--config` before clap sees the arguments, since the config may
/// supply required flags.
fn find_config(args: &[OsString]) -> Option<PathBuf> {
    let mut it = args.iter().filter_map(|a| a.to_str());
    while let Some(a) = it.next() {
        if a == "--config" {
            return it.next().map(PathBuf::from);
        }
        if let Some(p) = a.strip_prefix("--config=") {
            return Some(PathBuf::from(p));
        }
    }
    None
}

fn parse(args: Vec<OsString>) -> CliResult<Option<Cli>> {
    let args = match find_config(&args) {
        Some(path) => {
            let sub = args
                .iter()
                .filter_map(|a| a.to_str())
                .find(|a| SUBCOMMANDS.contains(a))
                .ok_or_else(|| CliError::usage("missing subcommand"))?
                .to_string();
            config::splice(&args, &sub, config::config_tokens(&path)?)
        }
        None => args,
    };
    match Cli::try_parse_from(args) {
        Ok(cli) => Ok(Some(cli)),
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            Ok(None)
        }
        Err(e) if e.kind() == ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => {
            let _ = e.print();
            Err(CliError::usage("missing subcommand"))
        }
        Err(e) => {
            // keep the message and its detail lines, drop the usage footer
            let text = e.to_string();
            let msg: Vec<&str> = text
                .lines()
                .take_while(|l| !l.trim().is_empty())
                .map(str::trim)
                .collect();
            Err(CliError::usage(msg.join(" ").trim_start_matches("error: ").to_string()))
        }
    }
}

fn run() -> CliResult<()> {
    let Some(cli) = parse(std::env::args_os().collect())? else {
        return Ok(());
    };
    let g = &cli.global;
    match &cli.command {
        Command::OdeSolve(a) => commands::ode_solve(g, a),
        Command::Smile(a) => commands::smile(g, a),
        Command::Mc(a) => commands::mc(g, a),
        Command::Validate(a) => commands::validate(g, a),
        Command::Greeks(a) => commands::greeks(a),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("{}: {msg}", e.code());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
