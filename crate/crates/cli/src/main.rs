use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use wdgnn_cli::{run, CliError, Command, ExperimentConfig};

/// Output root used when neither `--out` nor `out_dir` is given.
const OUT_DIR_ENV: &str = "WDGNN_OUT_DIR";
const DEFAULT_OUT_DIR: &str = "results";

#[derive(Parser)]
#[command(name = "wdgnn", version, about = "Run wide and deep graph neural network experiments")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Source localization: clean and perturbed accuracy plus online adaptation.
    Sourceloc(Common),
    /// Flocking by imitation of the centralized expert.
    Flocking(Common),
    /// Movie rating prediction on the 100k ratings file.
    Movielens(Common),
    /// Source-localization accuracy versus edge drop probability.
    StabilitySweep(Common),
    /// Source-localization accuracy versus online steps, both modes.
    ConvergenceSweep(Common),
    /// Stability, tracking and consensus bounds against measurements.
    Bounds(Common),
}

#[derive(Args)]
struct Common {
    /// TOML configuration; every key is optional.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Seed to run, replacing the configured list; repeat for several.
    #[arg(long = "seed", value_name = "N")]
    seeds: Vec<u64>,
    /// Output directory [default: out_dir from the config, then $WDGNN_OUT_DIR, then ./results].
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let (command, common) = match cli.command {
        Sub::Sourceloc(c) => (Command::Sourceloc, c),
        Sub::Flocking(c) => (Command::Flocking, c),
        Sub::Movielens(c) => (Command::Movielens, c),
        Sub::StabilitySweep(c) => (Command::StabilitySweep, c),
        Sub::ConvergenceSweep(c) => (Command::ConvergenceSweep, c),
        Sub::Bounds(c) => (Command::Bounds, c),
    };
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if !common.seeds.is_empty() {
        cfg.seeds = common.seeds.clone();
    }
    let out = common
        .out
        .or_else(|| cfg.out_dir.clone())
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR));
    let summary = run(command, &cfg, &out)?;
    println!("{}", summary.metrics.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(CliError::Usage(String::new()).exit_code() as u8);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("wdgnn: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
