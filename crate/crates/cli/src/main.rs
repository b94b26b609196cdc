//! `gks`: runs one experiment from a TOML configuration and writes CSV/JSON
//! results plus a manifest into the output directory.

mod commands;
mod config;
mod output;

use anyhow::Result;
use clap::{Parser, Subcommand};
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "gks", version, about = "Generalised Kuramoto-Sivashinsky experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct RunArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (created if missing).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Uncontrolled run.
    Simulate(RunArgs),
    /// Closed-loop run towards a zero, steady or travelling target.
    Feedback(RunArgs),
    /// Steady branches by continuation in nu.
    Equilibria(RunArgs),
    /// Adjoint-based actuator placement.
    Optimize(RunArgs),
    /// Two coupled fields, with or without control.
    Coupled(RunArgs),
    /// Closed loop with a mismatched target plus margin report.
    Robustness(RunArgs),
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Simulate(a) => commands::simulate_cmd(config::load(&a.config)?, &a.out),
        Command::Feedback(a) => commands::feedback_cmd(config::load(&a.config)?, &a.out),
        Command::Equilibria(a) => commands::equilibria_cmd(config::load(&a.config)?, &a.out),
        Command::Optimize(a) => commands::optimize_cmd(config::load(&a.config)?, &a.out),
        Command::Coupled(a) => commands::coupled_cmd(config::load(&a.config)?, &a.out),
        Command::Robustness(a) => commands::robustness_cmd(config::load(&a.config)?, &a.out),
    }
}
