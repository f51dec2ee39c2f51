use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use lsmdual_cli::{cmd_bounds, cmd_simulate, cmd_value, CliError, Context, RunConfig};

#[derive(Parser)]
#[command(name = "lsmdual")]
#[command(about = "Least squares Monte Carlo valuation with dual bounds")]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Overrides `simulation.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads (results do not depend on it).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Directory for artifacts with relative paths.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the continuation values and print the time-0 value estimates.
    Value { config: PathBuf },
    /// Print lower/upper bounds and the confidence interval.
    Bounds { config: PathBuf },
    /// Write the training path panel.
    Simulate { config: PathBuf },
}

fn run(cli: &Cli) -> Result<String, CliError> {
    let (Command::Value { config } | Command::Bounds { config } | Command::Simulate { config }) =
        &cli.command;
    let ctx = Context::new(RunConfig::load(config)?, cli.seed, cli.out_dir.clone());
    Ok(match cli.command {
        Command::Value { .. } => cmd_value(&ctx)?.to_string(),
        Command::Bounds { .. } => cmd_bounds(&ctx)?.to_string(),
        Command::Simulate { .. } => cmd_simulate(&ctx)?.to_string(),
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        pool = pool.num_threads(n);
    }
    let result = match pool.build() {
        Ok(pool) => pool.install(|| run(&cli)),
        Err(e) => Err(CliError::Config(format!(
            "cannot start {:?} threads: {e}",
            cli.threads
        ))),
    };
    match result {
        Ok(report) => {
            print!("{report}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
