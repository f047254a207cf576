use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sparseload_cli::{execute, load_config, worker_threads, CliError, Command, Summary};

#[derive(Parser)]
#[command(name = "sparseload", version, about = "Sparse hourly load forecasting experiments")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    /// Increase log detail on stderr (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
}

#[derive(clap::Args)]
struct Paths {
    /// Experiment config (JSON).
    config: PathBuf,
    /// Output directory; overrides `output_dir` from the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Interpolate, analyze, train, evaluate and compare.
    Run(Paths),
    /// Statistics and plot data for the imputed series.
    Analyze(Paths),
    /// Imputed CSV and the hourly Gaussian table.
    Interpolate(Paths),
    /// Train the configured models and save them.
    Train(Paths),
    /// Evaluate saved models on the test split.
    Evaluate(Paths),
}

fn run(cmd: Command, paths: &Paths) -> Result<Summary, CliError> {
    let threads = worker_threads(std::env::var("SPARSELOAD_THREADS").ok().as_deref())?;
    let cfg = load_config(&paths.config)?;
    let out = paths.out.clone().unwrap_or_else(|| cfg.output_dir());
    execute(cmd, &cfg, &out, threads)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let (cmd, paths) = match &cli.command {
        Cmd::Run(p) => (Command::Run, p),
        Cmd::Analyze(p) => (Command::Analyze, p),
        Cmd::Interpolate(p) => (Command::Interpolate, p),
        Cmd::Train(p) => (Command::Train, p),
        Cmd::Evaluate(p) => (Command::Evaluate, p),
    };
    match run(cmd, paths) {
        Ok(summary) => {
            println!("{}", serde_json::to_string(&summary).expect("summary serializes"));
            ExitCode::SUCCESS
        }
        Err(e) => {
            log::error!("{e}");
            println!("{}", e.to_json());
            ExitCode::from(e.exit_code())
        }
    }
}
