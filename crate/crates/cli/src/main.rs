//! `trustlab` command-line tool.

mod analyze;
mod gen;
mod io;
mod serve;
mod simulate;
mod trust;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Failure classes, mapped onto exit codes 2 and 1.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
}

impl CliError {
    pub fn data(e: impl std::fmt::Display) -> Self {
        Self::Data(e.to_string())
    }
}

pub type CliResult<T = ()> = Result<T, CliError>;

#[derive(Parser)]
#[command(name = "trustlab", version, about = "Trust-adaptive AI-assisted decision-making experiments")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Debug)]
pub struct Common {
    /// JSON configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for every random draw the command makes.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Directory outputs are written to.
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Write problem sequences with assistant recommendations.
    GenSequences(gen::GenArgs),
    /// Run synthetic participants through a study.
    Simulate(simulate::SimulateArgs),
    /// Reliance tables, trust-binned reports, bootstrap tests and plot data.
    Analyze(analyze::AnalyzeArgs),
    /// Fit the trust estimators on a session log.
    FitTrust(trust::FitArgs),
    /// Score fitted trust estimators against reported trust.
    EvalTrust(trust::EvalArgs),
    /// Run the study HTTP service.
    Serve(serve::ServeArgs),
    /// Export sessions from a service data directory.
    Export(serve::ExportArgs),
}

fn run(cli: Cli) -> CliResult {
    let c = &cli.common;
    match cli.command {
        Command::GenSequences(a) => gen::run(c, a),
        Command::Simulate(a) => simulate::run(c, a),
        Command::Analyze(a) => analyze::run(c, a),
        Command::FitTrust(a) => trust::fit(c, a),
        Command::EvalTrust(a) => trust::eval(c, a),
        Command::Serve(a) => serve::serve(c, a),
        Command::Export(a) => serve::export(c, a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(CliError::Data(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}
