use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use penreflect_cli::commands::{self, Outcome, RunError, RunOptions};
use penreflect_cli::config::LoadedConfig;

#[derive(Parser)]
#[command(name = "penreflect", version, about = "Penalty-method reflected diffusion experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output.directory`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Master seed; overrides `integrator.master_seed`.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Certify a penalty family: spike, singularity, emulation, boundary floor.
    Certify(Common),
    /// Penalized and reference ensembles, convergence table and verdicts.
    Converge(Common),
    /// Simulate paths and write per-path summaries or trajectories.
    Paths {
        #[command(flatten)]
        common: Common,
        /// Number of paths (default: `integrator.paths`).
        #[arg(long)]
        count: Option<usize>,
        /// Write one trajectory file per path.
        #[arg(long)]
        dump: bool,
    },
}

fn run(cli: Cli) -> Result<Outcome, RunError> {
    let common = match &cli.command {
        Command::Certify(c) | Command::Converge(c) => c,
        Command::Paths { common, .. } => common,
    };
    let loaded = LoadedConfig::load(&common.config)?;
    let opts = RunOptions {
        out: common.out.clone(),
        workers: common.workers,
        seed: common.seed,
    };
    match &cli.command {
        Command::Certify(_) => commands::certify(&loaded, &opts),
        Command::Converge(_) => commands::converge(&loaded, &opts).map(|c| c.outcome),
        Command::Paths { count, dump, .. } => commands::paths(&loaded, &opts, *count, *dump),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(outcome) => {
            for v in &outcome.verdicts {
                println!("{}", v.line());
            }
            if outcome.aborted_paths > 0 {
                println!("aborted paths: {}", outcome.aborted_paths);
            }
            println!("results: {}", outcome.directory.display());
            ExitCode::from(outcome.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
