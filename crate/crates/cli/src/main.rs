mod commands;
mod error;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use psibench_core::report::ReportFormat;

#[derive(Parser, Debug)]
#[command(
    name = "psibench",
    version,
    about = "Instruction survival and output-length analysis for compressed prompts"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Global {
    /// Plan file for `run`; analysis settings (energy, bootstrap, tmax) for other commands.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the plan, simulation or bootstrap seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output file: records for `run` and `simulate`, rendered tables otherwise.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Table rendering: table, csv or markdown.
    #[arg(long, global = true, default_value = "table", value_parser = parse_format)]
    pub format: ReportFormat,
}

fn parse_format(s: &str) -> Result<ReportFormat, String> {
    s.parse()
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Instruction survival per ratio for profiles, annotations or prompt files.
    Psi(commands::psi::PsiArgs),
    /// First-N-words compression of a prompt.
    Compress(commands::compress::CompressArgs),
    /// Executes an experiment plan into a JSONL record file (resumable).
    Run(commands::run::RunArgs),
    /// Draws synthetic output lengths over a survival grid.
    Simulate(commands::simulate::SimulateArgs),
    /// Renders cell, reconciliation, provider and CRI tables.
    Report(commands::report::ReportArgs),
    /// Compression Robustness Index per model.
    Cri(commands::cri::CriArgs),
    /// Per-cell inference: BCa intervals, Welch tests, Tobit fits.
    Stats(commands::stats::StatsArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Psi(a) => commands::psi::execute(&cli.global, a),
        Command::Compress(a) => commands::compress::execute(&cli.global, a),
        Command::Run(a) => commands::run::execute(&cli.global, a),
        Command::Simulate(a) => commands::simulate::execute(&cli.global, a),
        Command::Report(a) => commands::report::execute(&cli.global, a),
        Command::Cri(a) => commands::cri::execute(&cli.global, a),
        Command::Stats(a) => commands::stats::execute(&cli.global, a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::FAILURE
        }
    }
}
