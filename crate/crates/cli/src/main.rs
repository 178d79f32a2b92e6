mod commands;
mod io;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::io::UsageError;

#[derive(Parser, Debug)]
#[command(name = "cpn", version, about = "Simulate, analyze and fit chemical pathway networks")]
struct Cli {
    /// Worker threads for scans and fits [default: logical processors]
    #[arg(long, global = true, env = "CPN_JOBS", value_name = "N")]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Integrate a mechanism file and write its trajectory
    Simulate(commands::SimulateArgs),
    /// Run the self-regulating etch network and its diagnostics
    Etch(commands::EtchArgs),
    /// Drive the tweezer population with a wave and report the plasma frequency
    Signal(commands::SignalArgs),
    /// Fit free rate coefficients to a target trajectory
    Fit(commands::FitArgs),
    /// Parse a mechanism and report its elemental balance
    Validate(commands::ValidateArgs),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            if !err.use_stderr() {
                // --help and --version
                let _ = err.print();
                return ExitCode::SUCCESS;
            }
            let rendered = err.render().to_string();
            let first = rendered.lines().find(|l| !l.trim().is_empty()).unwrap_or("error: invalid arguments");
            eprintln!("{first}");
            return ExitCode::from(2);
        }
    };

    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            eprintln!("error: --jobs must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(err) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            eprintln!("error: cannot start worker threads: {err}");
            return ExitCode::from(1);
        }
    }

    let result = match cli.command {
        Command::Simulate(args) => commands::simulate(args),
        Command::Etch(args) => commands::etch(args),
        Command::Signal(args) => commands::signal(args),
        Command::Fit(args) => commands::fit(args),
        Command::Validate(args) => commands::validate(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let line = format!("{err:#}").replace(['\n', '\r'], " ");
            eprintln!("error: {line}");
            if err.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
