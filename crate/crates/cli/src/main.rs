//! `gbl`: train and evaluate graph-structured backup operators on tabular
//! tasks, analyze transition graphs, and export visualizations.

mod commands;
mod config;
mod plots;

use clap::{Parser, Subcommand};
use config::Overrides;
use std::path::PathBuf;

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, config keys, or missing inputs (exit code 2).
    Usage(String),
    /// Failures while running (exit code 1).
    Runtime(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for CliError {
    fn from(e: E) -> Self {
        CliError::Runtime(e.into())
    }
}

#[derive(Parser)]
#[command(
    name = "gbl",
    about = "Graph Backup learner: value estimation over transition multigraphs",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train online on an environment, one run per seed.
    Train(Box<Overrides>),
    /// Train offline on a recorded trajectory log.
    OfflineTrain(commands::OfflineArgs),
    /// Evaluate a single backup target for debugging.
    ComputeTarget(commands::ComputeArgs),
    /// Density and crossover statistics of a stored transition graph.
    Analyze(commands::AnalyzeArgs),
    /// Radial-layout DOT (or edge-list) export of a stored transition graph.
    ExportGraph(commands::ExportArgs),
    /// Run several operators under identical seeds and tabulate the results.
    Compare(commands::CompareArgs),
}

fn main() {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Train(overrides) => commands::train(overrides),
        Command::OfflineTrain(args) => commands::offline_train(args),
        Command::ComputeTarget(args) => commands::compute_target(args),
        Command::Analyze(args) => commands::analyze(args),
        Command::ExportGraph(args) => commands::export_graph(args),
        Command::Compare(args) => commands::compare(args),
    };
    match result {
        Ok(()) => {}
        Err(CliError::Usage(message)) => {
            eprintln!("error: {message}");
            std::process::exit(2);
        }
        Err(CliError::Runtime(error)) => {
            eprintln!("error: {error:#}");
            std::process::exit(1);
        }
    }
}

pub(crate) fn seed_file(dir: &std::path::Path, stem: &str, seed: u64, ext: &str) -> PathBuf {
    dir.join(format!("{stem}_seed{seed}.{ext}"))
}
