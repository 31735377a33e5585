//! `attune`: run the local service, build fixtures and benchmarks, evaluate
//! scorers, and replay recorded sessions.
//!
//! Exit codes: 0 success, 1 usage error, 2 runtime error.

mod bench;
mod fixtures;
mod output;
mod replay;
mod serve;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use output::{CliError, Output};

#[derive(Debug, Parser)]
#[command(name = "attune", version, about = "Intention-aware focus assistant")]
struct Cli {
    /// Print machine-readable JSON instead of text.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the local HTTP service until interrupted.
    Serve(serve::ServeArgs),
    /// Benchmark synthesis and evaluation.
    #[command(subcommand)]
    Bench(BenchCommand),
    /// Re-score a recorded session and report divergence from what was recorded.
    Replay(replay::ReplayArgs),
    /// Write the built-in fixture corpus.
    Fixtures(fixtures::FixturesArgs),
}

#[derive(Debug, Subcommand)]
enum BenchCommand {
    /// Mix focused sessions into labeled sessions.
    Synth(bench::SynthArgs),
    /// Score labeled sessions and report metrics.
    Eval(bench::EvalArgs),
}

/// Scorer backends selectable from the command line.
#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ScorerKind {
    /// Deterministic offline mock.
    Mock,
    /// The remote provider named in the config file.
    Remote,
    /// Ground-truth labels (evaluation only).
    Oracle,
}

/// Options shared by commands that score samples.
#[derive(Clone, Debug, Args)]
pub struct ScoringArgs {
    #[arg(long, value_enum, default_value = "mock")]
    pub scorer: ScorerKind,
    /// Service config file; supplies gateway, engine and refiner settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

fn run(cli: Cli, out: &Output) -> Result<(), CliError> {
    match cli.command {
        Command::Serve(a) => serve::run(a, out),
        Command::Bench(BenchCommand::Synth(a)) => bench::synth(a, out),
        Command::Bench(BenchCommand::Eval(a)) => bench::eval(a, out),
        Command::Replay(a) => replay::run(a, out),
        Command::Fixtures(a) => fixtures::run(a, out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_env("ATTUNE_LOG")
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn")),
        )
        .init();
    let out = Output { json: cli.json };
    match run(cli, &out) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            out.error(&e);
            ExitCode::from(e.code())
        }
    }
}
