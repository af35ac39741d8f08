use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use npe_cli::commands::{self, RunOptions};
use npe_cli::{configure_threads, CliError, RunConfig};

/// Nernst-Planck-Euler / Navier-Stokes simulations on the periodic square.
#[derive(Parser)]
#[command(name = "npe", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate a configuration, or run its experiment block.
    Run {
        config: PathBuf,
        /// Fail as soon as a recorded state violates an invariant.
        #[arg(long)]
        strict_invariants: bool,
        /// Continue from a snapshot instead of the configured initial data.
        #[arg(long, value_name = "SNAPSHOT")]
        resume: Option<PathBuf>,
        /// Replace a configuration value, e.g. `physics.nu=0.01`.
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Run the viscosity or mollification sweep of a configuration.
    Sweep {
        config: PathBuf,
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Run the Picard iteration of a configuration.
    Picard {
        config: PathBuf,
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Print the header and diagnostics of a snapshot.
    Inspect { snapshot: PathBuf },
}

fn load(path: &Path, overrides: &[String]) -> anyhow::Result<RunConfig> {
    RunConfig::load(path, overrides)
        .map_err(CliError::from)
        .with_context(|| format!("loading {}", path.display()))
}

fn sweep(cfg: &RunConfig) -> anyhow::Result<()> {
    let report = commands::run_sweep(cfg)?;
    print!("{}", commands::describe_sweep(&report));
    println!("report written to {}", cfg.output.report_path.display());
    Ok(())
}

fn picard(cfg: &RunConfig) -> anyhow::Result<()> {
    let report = commands::run_picard(cfg)?;
    print!("{}", commands::describe_picard(&report));
    println!("report written to {}", cfg.output.report_path.display());
    Ok(())
}

fn dispatch(cli: Cli) -> anyhow::Result<()> {
    configure_threads()?;
    match cli.command {
        Command::Run {
            config,
            strict_invariants,
            resume,
            overrides,
        } => {
            let cfg = load(&config, &overrides)?;
            match &cfg.experiment {
                Some(e) if resume.is_none() && e.is_sweep() => sweep(&cfg),
                Some(_) if resume.is_none() => picard(&cfg),
                _ => {
                    let opts = RunOptions {
                        strict_invariants,
                        resume,
                    };
                    let summary = commands::run_simulation(&cfg, &opts)?;
                    println!(
                        "reached t = {} ({} series rows, {} snapshots)",
                        summary.final_time,
                        summary.rows,
                        summary.snapshots.len()
                    );
                    Ok(())
                }
            }
        }
        Command::Sweep { config, overrides } => sweep(&load(&config, &overrides)?),
        Command::Picard { config, overrides } => picard(&load(&config, &overrides)?),
        Command::Inspect { snapshot } => {
            print!("{}", commands::inspect(&snapshot)?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e.downcast_ref::<CliError>().map_or(1, CliError::exit_code);
            ExitCode::from(code)
        }
    }
}
