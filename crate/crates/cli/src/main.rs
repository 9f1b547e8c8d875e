//! `nbdpsk`: simulation, threshold, design, bound and code-generation runs.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use commands::{execute, Failure};
use config::{Command, RunConfig};

#[derive(Parser, Debug)]
#[command(name = "nbdpsk", version, about = "Non-binary LDPC coded DPSK over phase-noise channels")]
struct Cli {
    command: Command,

    /// TOML configuration; defaults apply to everything it leaves out.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Overrides monte_carlo.seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads (default: available parallelism).
    #[arg(long, global = true, env = "NBDPSK_WORKERS")]
    workers: Option<usize>,

    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,

    /// Print the resolved configuration and exit.
    #[arg(long, global = true)]
    dry_run: bool,
}

fn run(cli: Cli) -> Result<(), Failure> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path).map_err(Failure::Config)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.monte_carlo.seed = seed;
    }
    if cfg.command.is_none() {
        cfg.command = Some(cli.command);
    }
    let plan = cfg.validate(cli.command).map_err(Failure::Config)?;
    if cli.dry_run {
        print!("{}", plan.config.to_toml());
        return Ok(());
    }
    let workers = match cli.workers {
        Some(0) => return Err(Failure::Config("--workers must be positive".into())),
        Some(w) => w,
        None => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build_global()
        .map_err(|e| Failure::Runtime(e.to_string()))?;
    execute(&plan, &cli.out_dir, workers)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.exit_code() as u8)
        }
    }
}
