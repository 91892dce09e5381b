//! Experiment harness for tabular Q-learning under adversarial reward
//! corruption. Exit codes: 0 success, 1 check failure, 2 configuration error.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{CmdError, RateCheckArgs, RunArgs};

#[derive(Parser)]
#[command(
    name = "robustq",
    about = "Synchronous Q-learning experiments under reward-corruption attacks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the configured MDP exactly and print Q*, the greedy policy, and
    /// (for the counter-example MDP) the closed-form attacked gap.
    Solve {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run the configured experiment over all sweep points and seeds,
    /// writing per-seed trace CSVs, per-point percentile bands, and an
    /// aggregate summary.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Override the config's base seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the config's trial count.
        #[arg(long)]
        trials: Option<usize>,
        /// Override the config's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overwrite a non-empty output directory.
        #[arg(long)]
        force: bool,
        /// Number of parallel worker threads.
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
    /// Reproduce the counter-example attack end to end and print a pass/fail
    /// table (vanilla converges to the attacked fixed point, robust to the
    /// clean one).
    AttackDemo {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 10)]
        trials: usize,
    },
    /// Fit the error-decay slope and plateau level of averaged robust runs.
    RateCheck {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        trials: Option<usize>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Solve { config } => commands::cmd_solve(&config),
        Command::Run {
            config,
            seed,
            trials,
            out,
            force,
            workers,
        } => commands::cmd_run(&RunArgs {
            config,
            seed,
            trials,
            out,
            force,
            workers,
        }),
        Command::AttackDemo { seed, trials } => commands::cmd_attack_demo(seed, trials),
        Command::RateCheck {
            config,
            seed,
            trials,
        } => commands::cmd_rate_check(&RateCheckArgs {
            config,
            seed,
            trials,
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CmdError::Failure(msg)) => {
            eprintln!("FAIL: {msg}");
            ExitCode::from(1)
        }
        Err(CmdError::Config(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
