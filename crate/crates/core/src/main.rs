use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use lagfol::harness::{self, HarnessError, RunConfig, RunOutput, Status};

#[derive(Parser)]
#[command(name = "lagfol", version, about = "Poisson-commuting symbols, their foliations and Toeplitz quantization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Io {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output_dir` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Pairwise Poisson brackets over the lattice.
    Bracket(Io),
    /// Trace leaves of the foliation through base points.
    Foliate(Io),
    /// Toeplitz matrices, commutators and Wick symbols on the disk.
    Toeplitz(Io),
    /// Commutator norms along h and their log-log slope.
    BerezinScan(Io),
    /// Operator commutativity, richness, Poisson commutativity, foliation.
    Pipeline(Io),
}

type Runner = fn(&RunConfig) -> Result<RunOutput, HarnessError>;

fn run(command: &Command) -> Result<(RunOutput, PathBuf), HarnessError> {
    let (io, runner): (&Io, Runner) = match command {
        Command::Bracket(io) => (io, harness::run_bracket),
        Command::Foliate(io) => (io, harness::run_foliate),
        Command::Toeplitz(io) => (io, harness::run_toeplitz),
        Command::BerezinScan(io) => (io, harness::run_berezin_scan),
        Command::Pipeline(io) => (io, harness::run_pipeline),
    };
    let config = RunConfig::load(&io.config)?;
    let dir = io
        .out
        .clone()
        .or_else(|| config.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    let output = runner(&config)?;
    let path = output.write(&dir)?;
    Ok((output, path))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli.command) {
        Ok((output, path)) => {
            for stage in &output.report.stages {
                let status = match stage.status {
                    Status::Pass => "PASS",
                    Status::Fail => "FAIL",
                    Status::Skipped => "SKIPPED",
                };
                eprintln!("{status:<8} {}", stage.name);
                for notice in &stage.notices {
                    eprintln!("         {notice}");
                }
            }
            if let Some(stage) = output.report.first_failure.as_deref().and_then(|n| output.report.stage(n)) {
                let witness = stage.witness.as_ref().map(|w| w.to_string()).unwrap_or_default();
                eprintln!("first failure: {} {witness}", stage.name);
            }
            eprintln!("report: {}", path.display());
            ExitCode::from(output.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("lagfol: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
