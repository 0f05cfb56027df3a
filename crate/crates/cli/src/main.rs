//! Command-line front end for the channel-flow trajectory solver.
//!
//! Exit codes: 0 on success, 1 for configuration/validation errors,
//! 2 for runtime failures (solver errors, I/O problems).

mod config;
mod io;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::RunConfig;

#[derive(Parser)]
#[command(
    name = "widechannel",
    about = "Variational space-time solver for unsteady shear-dependent channel flow",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario: relaxation ladder, reference solve, pressure, reports.
    Run {
        /// Path to a `section.key = value` config file.
        config: PathBuf,
    },
    /// Parse and validate a config file without running anything.
    Validate {
        /// Path to a `section.key = value` config file.
        config: PathBuf,
        /// Print the fully-resolved config (defaults filled in) on success.
        #[arg(long)]
        emit: bool,
    },
    /// Recompute diagnostics (energy, pressure, boundary) for a stored trajectory.
    Diagnose {
        /// Path to a trajectory CSV written by `run` (with its .meta companion).
        trajectory: PathBuf,
        /// Config file supplying the physics parameters.
        config: PathBuf,
        /// Output directory for the recomputed reports.
        #[arg(long, default_value = "diagnose_out")]
        out: PathBuf,
    },
    /// Compare two stored trajectories in the space-time norm.
    Compare {
        /// First trajectory CSV.
        a: PathBuf,
        /// Second trajectory CSV.
        b: PathBuf,
    },
}

fn load_config(path: &PathBuf) -> Result<RunConfig, String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    RunConfig::parse(&text).map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config } => {
            let cfg = match load_config(&config) {
                Ok(c) => c,
                Err(msg) => {
                    eprintln!("error(validation): {msg}");
                    return ExitCode::from(1);
                }
            };
            let dir = run::out_dir(&cfg);
            match run::run_scenario(&cfg, &dir) {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => {
                    eprintln!("error(runtime): {e:#}");
                    ExitCode::from(2)
                }
            }
        }
        Command::Validate { config, emit } => match load_config(&config) {
            Ok(cfg) => {
                println!("config ok");
                if emit {
                    print!("{}", cfg.emit());
                }
                ExitCode::SUCCESS
            }
            Err(msg) => {
                eprintln!("error(validation): {msg}");
                ExitCode::from(1)
            }
        },
        Command::Diagnose {
            trajectory,
            config,
            out,
        } => {
            let cfg = match load_config(&config) {
                Ok(c) => c,
                Err(msg) => {
                    eprintln!("error(validation): {msg}");
                    return ExitCode::from(1);
                }
            };
            let bundle = match io::read_trajectory(&trajectory) {
                Ok(b) => b,
                Err(e) => {
                    eprintln!("error(runtime): {e:#}");
                    return ExitCode::from(2);
                }
            };
            match run::diagnose(&cfg, &bundle, &out) {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => {
                    eprintln!("error(runtime): {e:#}");
                    ExitCode::from(2)
                }
            }
        }
        Command::Compare { a, b } => {
            let ba = match io::read_trajectory(&a) {
                Ok(x) => x,
                Err(e) => {
                    eprintln!("error(runtime): {e:#}");
                    return ExitCode::from(2);
                }
            };
            let bb = match io::read_trajectory(&b) {
                Ok(x) => x,
                Err(e) => {
                    eprintln!("error(runtime): {e:#}");
                    return ExitCode::from(2);
                }
            };
            match run::compare(&ba, &bb) {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => {
                    eprintln!("error(runtime): {e:#}");
                    ExitCode::from(2)
                }
            }
        }
    }
}
