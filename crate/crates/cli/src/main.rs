//! `mfc` — batch experiment runner for the mean-field control toolkit.
//!
//! One subcommand per experiment, each driven by a flat key-value config
//! file (see `config.rs` for the grammar and keys). Artifacts land in the
//! configured output directory: `manifest.txt` (full resolved settings),
//! experiment CSVs, and `summary.txt`. All randomness flows from the config
//! seed through named substreams, and outputs are byte-identical for any
//! worker count.
//!
//! Exit status: 0 when all requested checks pass, 1 on a failed check or
//! runtime error, 2 on a config error.

mod config;
mod experiments;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::Experiment;

#[derive(Parser)]
#[command(name = "mfc", version, about = "Mean-field control experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Path to the key-value config file.
    #[arg(long)]
    config: PathBuf,
    /// Worker threads (0 = all cores). Outputs do not depend on this.
    #[arg(long, default_value_t = 0)]
    threads: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Check coefficient derivatives against finite differences.
    Validate(RunArgs),
    /// Simulate the particle ensemble and dump the paths.
    Simulate(RunArgs),
    /// Estimate the cost functional of the configured control.
    Cost(RunArgs),
    /// Solve the first- and second-order adjoint equations.
    Adjoint(RunArgs),
    /// Evaluate maximum-principle residuals and the near-optimality bound.
    CheckSmp(RunArgs),
    /// Run the successive-approximation optimizer.
    Optimize(RunArgs),
    /// Tabulate relaxed-vs-chattered cost gaps over subdivision counts.
    ChatterGap(RunArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (experiment, args) = match &cli.command {
        Command::Validate(a) => (Experiment::Validate, a),
        Command::Simulate(a) => (Experiment::Simulate, a),
        Command::Cost(a) => (Experiment::Cost, a),
        Command::Adjoint(a) => (Experiment::Adjoint, a),
        Command::CheckSmp(a) => (Experiment::CheckSmp, a),
        Command::Optimize(a) => (Experiment::Optimize, a),
        Command::ChatterGap(a) => (Experiment::ChatterGap, a),
    };

    let cfg = match config::load(experiment, &args.config) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("config error: {e:#}");
            return ExitCode::from(2);
        }
    };

    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(args.threads)
        .build()
    {
        Ok(pool) => pool,
        Err(e) => {
            eprintln!("thread pool error: {e}");
            return ExitCode::from(1);
        }
    };

    match pool.install(|| experiments::run(&cfg)) {
        Ok(outcome) => {
            print!("{}", outcome.summary);
            if outcome.passed {
                println!("{}: PASS", experiment.name());
                ExitCode::SUCCESS
            } else {
                println!("{}: FAIL", experiment.name());
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("run error: {e:#}");
            ExitCode::from(1)
        }
    }
}
