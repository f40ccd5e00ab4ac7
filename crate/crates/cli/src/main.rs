use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use sol_core::Benchmark;

mod oracle;
mod plots;
mod run;

#[derive(Parser)]
#[command(name = "sol", version, about = "Structured online learning control experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one episode per seed and write traces, summaries and plots.
    Run {
        /// Config file (`benchmark = "..."` plus dotted-key overrides).
        config: PathBuf,
        /// Comma-separated seeds; defaults to the config's `seed`.
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
        #[arg(long, default_value = "sol-out")]
        out: PathBuf,
        #[arg(long)]
        no_plots: bool,
    },
    /// Print a benchmark's full default configuration.
    DumpDefaults { benchmark: String },
    /// Compare the basis-space flow on a linear plant against the Riccati solution.
    OracleCheck,
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run { config, seeds, out, no_plots } => run::run(&config, &seeds, &out, !no_plots),
        Command::DumpDefaults { benchmark } => {
            let benchmark: Benchmark = benchmark.parse().context("dump-defaults")?;
            print!("{}", sol_core::config::dump_defaults(benchmark));
            Ok(ExitCode::SUCCESS)
        }
        Command::OracleCheck => oracle::check(),
    }
}
