//! `credit-hjb`: solves, prices and verifies from a TOML run configuration.
//!
//! Exit codes: 0 success, 1 check or runtime failure, 2 configuration error.

// `!(x > 0.0)` is used on purpose so NaN inputs are rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{Check, CliError};
use config::{parse_grid_flag, Overrides, RunConfig};
use output::Output;

#[derive(Parser)]
#[command(name = "credit-hjb", version, about = "Certainty-equivalent solver for a defaultable asset")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Run configuration (TOML)
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Output directory; overrides [output] dir
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Base seed; overrides [mc] seed
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,

    /// Paths per seed; overrides [mc] paths
    #[arg(long, global = true, value_name = "N")]
    paths: Option<usize>,

    /// Space and time intervals; overrides [grid] n_space, n_time
    #[arg(long, global = true, value_name = "NX,NT", value_parser = parse_grid_flag)]
    grid: Option<(usize, usize)>,

    /// full | local:N[,N...] | protected; overrides [grid] mode
    #[arg(long, global = true, value_name = "MODE")]
    mode: Option<String>,

    /// Adds a constant to G inside the density (debugging the verifier)
    #[arg(long, global = true, value_name = "DELTA", allow_hyphen_values = true)]
    perturb_value: Option<f64>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Solve for the certainty-equivalent surface
    Solve,
    /// Indifference prices of the configured claim for each notional
    PriceBond,
    /// Dynamic default-insurance rate and the short-horizon curve
    PriceInsurance,
    /// Monte Carlo verification of the solved surface
    Verify,
    /// Standing assumptions and integrability report
    CheckAssumptions,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::PriceBond => "price-bond",
            Command::PriceInsurance => "price-insurance",
            Command::Verify => "verify",
            Command::CheckAssumptions => "check-assumptions",
        }
    }
}

fn run(cli: &Cli) -> Result<Vec<Check>, CliError> {
    let path = cli.config.as_ref().ok_or_else(|| config::ConfigError("--config PATH is required".into()))?;
    let mut cfg = RunConfig::load(path)?;
    cfg.apply(&Overrides {
        out: cli.out.clone(),
        seed: cli.seed,
        paths: cli.paths,
        grid: cli.grid,
        mode: cli.mode.clone(),
        value_shift: cli.perturb_value,
    });
    cfg.mode()?;
    let out = Output::create(&cfg.output.dir, cli.command.name(), cfg.echo())?;
    match cli.command {
        Command::Solve => commands::solve(&cfg, &out),
        Command::PriceBond => commands::price_bond(&cfg, &out),
        Command::PriceInsurance => commands::price_insurance(&cfg, &out),
        Command::Verify => commands::verify(&cfg, &out),
        Command::CheckAssumptions => commands::check_assumptions(&cfg, &out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(checks) => {
            for c in &checks {
                println!("{}", c.line());
            }
            if checks.iter().all(|c| c.passed) {
                ExitCode::SUCCESS
            } else {
                let failed: Vec<&str> = checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
                eprintln!("error: failed checks: {}", failed.join(", "));
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
