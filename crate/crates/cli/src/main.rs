//! `pesuff`: simulate, calibrate, fit, test and report.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 configuration error,
//! 3 data error, 4 estimation failure.

mod commands;
mod config;
mod error;
mod output;
mod series;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::Config;
use error::{CliError, EXIT_CONFIG};

#[derive(Parser)]
#[command(name = "pesuff", version, about = "Permutation-entropy sufficiency test for point forecasts")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML configuration file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Reduced Monte Carlo sizes for smoke runs.
    #[arg(long, global = true)]
    quick: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Write simulated paths as `t,x,oracle,innovation` CSV.
    Simulate {
        /// Process label (x1..x6); repeatable.
        #[arg(long)]
        dgp: Vec<String>,
        #[arg(long)]
        length: Option<usize>,
    },
    /// Compute or reuse the independence critical value.
    Calibrate {
        /// Series length the fixture is computed for.
        #[arg(long)]
        length: Option<usize>,
        #[arg(long)]
        paths: Option<usize>,
    },
    /// Fit forecasters and score them out of sample.
    Fit {
        #[arg(long)]
        dgp: Vec<String>,
        /// Model label (arma11, garch11, gp); repeatable.
        #[arg(long)]
        model: Vec<String>,
        /// CSV with an `x` column (and optionally `oracle`).
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Run the sufficiency test for one predictor.
    Test {
        #[arg(long)]
        dgp: Vec<String>,
        /// oracle, mean, arma11, garch11, gp or column:<name>.
        #[arg(long)]
        predictor: Option<String>,
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Full grid of processes and models.
    Bench,
    /// BDS contrast experiment with an inadequate GARCH predictor.
    Bds {
        #[arg(long)]
        seeds: Option<usize>,
    },
    /// Realized volatility from 10-minute quotes.
    Rv {
        /// CSV with `timestamp,close_bid`; synthetic quotes when absent.
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        year: Option<i32>,
    },
}

fn resolve(cli: &Cli) -> Result<Config, CliError> {
    let mut cfg = Config::load(cli.common.config.as_deref())?;
    if let Some(s) = cli.common.seed {
        cfg.seed = s;
    }
    if let Some(d) = &cli.common.out_dir {
        cfg.out_dir = d.clone();
    }
    cfg.quick |= cli.common.quick;
    match &cli.command {
        Command::Simulate { dgp, length } => {
            if !dgp.is_empty() {
                cfg.data.dgps = dgp.clone();
            }
            if let Some(n) = length {
                cfg.data.length = *n;
            }
        }
        Command::Calibrate { length, paths } => {
            if let Some(n) = length {
                cfg.calibration.length = *n;
            }
            if let Some(p) = paths {
                cfg.calibration.paths = *p;
            }
        }
        Command::Fit { dgp, model, input } => {
            if !dgp.is_empty() {
                cfg.data.dgps = dgp.clone();
            }
            if !model.is_empty() {
                cfg.models.kinds = model.clone();
            }
            if input.is_some() {
                cfg.data.input = input.clone();
            }
        }
        Command::Test { dgp, predictor, input } => {
            if !dgp.is_empty() {
                cfg.data.dgps = dgp.clone();
            }
            if let Some(p) = predictor {
                cfg.models.predictor = p.clone();
            }
            if input.is_some() {
                cfg.data.input = input.clone();
            }
        }
        Command::Bench => {}
        Command::Bds { seeds } => {
            if let Some(s) = seeds {
                cfg.bds.seeds = *s;
            }
        }
        Command::Rv { input, year } => {
            if input.is_some() {
                cfg.rv.input = input.clone();
            }
            if let Some(y) = year {
                cfg.rv.year = *y;
            }
        }
    }
    cfg.apply_quick();
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = resolve(cli)?;
    match cli.command {
        Command::Simulate { .. } => commands::simulate_cmd(&cfg),
        Command::Calibrate { .. } => commands::calibrate_cmd(&cfg),
        Command::Fit { .. } => commands::fit_cmd(&cfg),
        Command::Test { .. } => commands::test_cmd(&cfg),
        Command::Bench => commands::bench_cmd(&cfg),
        Command::Bds { .. } => commands::bds_cmd(&cfg),
        Command::Rv { .. } => commands::rv_cmd(&cfg),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_CONFIG) } else { ExitCode::SUCCESS };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
