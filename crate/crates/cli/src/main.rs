//! `orgmarl` command-line tool.

mod commands;
mod serve;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "orgmarl", version, about = "Organization-aware multi-agent RL runs and trajectory analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Overrides applied on top of a run config.
#[derive(Args, Debug, Clone, Default)]
pub struct RunFlags {
    /// Run config (JSON): env, train, optional org block.
    #[arg(long)]
    pub config: PathBuf,
    /// Train without the organization (reference baseline).
    #[arg(long)]
    pub no_org: bool,
    /// Disable goal reward guides (roles-only ablation).
    #[arg(long)]
    pub agr: bool,
    /// Override the constraint hardness of every rule.
    #[arg(long)]
    pub hardness: Option<f64>,
    #[arg(long)]
    pub episodes: Option<usize>,
    #[arg(long, conflicts_with = "seeds")]
    pub seed: Option<u64>,
    /// Seed range such as `0..4` (inclusive); one run directory per seed.
    #[arg(long)]
    pub seeds: Option<String>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Check an organization document and print its diagnostics.
    Validate { document: PathBuf },
    /// Train a joint policy and write a run directory.
    Train(RunFlags),
    /// Greedy evaluation of a trained run.
    Eval {
        run: PathBuf,
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Trajectory analysis of logs or run directories.
    Temm(commands::TemmArgs),
    /// Compute metrics for runs and print a comparison table.
    Report {
        runs: Vec<PathBuf>,
        /// Write the table here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Long-format CSV (`run,mode,seed,metric,value`).
        #[arg(long)]
        long: Option<PathBuf>,
    },
    /// Train, evaluate, analyse and report in one go.
    Run(RunFlags),
    /// Print a shipped organization document.
    Preset {
        #[arg(value_parser = ["predator-prey", "warehouse"])]
        name: String,
        /// Number of agents.
        #[arg(long)]
        agents: Option<usize>,
    },
    /// Serve the organizational layer to an external environment.
    Serve(serve::ServeArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Validate { document } => commands::validate(&document),
        Command::Train(flags) => commands::train(&flags).map(|_| ExitCode::SUCCESS),
        Command::Eval { run, episodes, seed } => commands::eval(&run, episodes, seed).map(|_| ExitCode::SUCCESS),
        Command::Temm(args) => commands::temm(&args).map(|_| ExitCode::SUCCESS),
        Command::Report { runs, out, long } => commands::report(&runs, out.as_deref(), long.as_deref()).map(|_| ExitCode::SUCCESS),
        Command::Run(flags) => commands::run_all(&flags).map(|_| ExitCode::SUCCESS),
        Command::Preset { name, agents } => commands::preset(&name, agents).map(|_| ExitCode::SUCCESS),
        Command::Serve(args) => serve::serve(&args).map(|_| ExitCode::SUCCESS),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
