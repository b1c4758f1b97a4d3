//! Command-line front end: evaluate schedules, optimize controllers, run
//! Monte Carlo validation, and sweep parameter grids, emitting
//! machine-readable reports.

mod commands;
mod formats;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use macfb_core::{CostVariant, PowerMode};

/// Errors split by exit-code class: validation problems (bad files, bad
/// flags, bad schedules) exit 2, runtime and numerical failures exit 1.
#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Runtime(String),
}

impl From<macfb_core::Error> for CliError {
    fn from(e: macfb_core::Error) -> Self {
        if e.is_validation() {
            CliError::Validation(e.to_string())
        } else {
            CliError::Runtime(e.to_string())
        }
    }
}

#[derive(Parser)]
#[command(
    name = "macfb",
    version,
    about = "Linear feedback coding on the two-sender Gaussian MAC: evaluate, optimize, validate, sweep"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum CostVariantArg {
    /// Sum of the conditional message variances.
    Sum,
    /// Sum of the squared conditional message variances.
    SumSq,
}

impl From<CostVariantArg> for CostVariant {
    fn from(v: CostVariantArg) -> Self {
        match v {
            CostVariantArg::Sum => CostVariant::SumVariance,
            CostVariantArg::SumSq => CostVariant::SumSquaredVariance,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum PowerModeArg {
    /// Fixed per-slot power P/T.
    Inst,
    /// Budget split across slots by optimized fractions.
    Total,
}

impl From<PowerModeArg> for PowerMode {
    fn from(v: PowerModeArg) -> Self {
        match v {
            PowerModeArg::Inst => PowerMode::Instantaneous,
            PowerModeArg::Total => PowerMode::Total,
        }
    }
}

#[derive(clap::Args)]
struct CommonArgs {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory for report files.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Override the config's cost variant.
    #[arg(long, value_enum)]
    cost_variant: Option<CostVariantArg>,
    /// Override the config's power mode.
    #[arg(long, value_enum)]
    power_mode: Option<PowerModeArg>,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate a schedule file: terminal cost, per-step message variances,
    /// achieved powers.
    Evaluate {
        #[command(flatten)]
        common: CommonArgs,
        /// Schedule to evaluate (JSON).
        #[arg(long)]
        schedule: PathBuf,
    },
    /// Optimize controller parameters; writes the report and the best
    /// schedule.
    Optimize {
        #[command(flatten)]
        common: CommonArgs,
        /// RNG seed; required here or in the config (no wall-clock default).
        #[arg(long)]
        seed: Option<u64>,
        /// Search restarts [default: config value or 4].
        #[arg(long)]
        restarts: Option<usize>,
        /// Total cost-evaluation budget [default: config value or 10000].
        #[arg(long)]
        budget: Option<usize>,
        /// Freeze the receiver to the passive relay baseline.
        #[arg(long)]
        passive: bool,
    },
    /// Monte Carlo consistency check of a schedule against its analytic
    /// covariances and cost.
    Validate {
        #[command(flatten)]
        common: CommonArgs,
        /// Schedule to validate (JSON).
        #[arg(long)]
        schedule: PathBuf,
        /// Trajectory count [default: config value or 10000].
        #[arg(long)]
        samples: Option<usize>,
        /// RNG seed; required here or in the config (no wall-clock default).
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the optimize pipeline over a config grid; writes a CSV table
    /// (one row per grid point) for plotting cost against the axes.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        /// RNG seed; required here or in the config (no wall-clock default).
        #[arg(long)]
        seed: Option<u64>,
        /// Search restarts per grid point [default: config value or 2].
        #[arg(long)]
        restarts: Option<usize>,
        /// Evaluation budget per grid point [default: config value or 4000].
        #[arg(long)]
        budget: Option<usize>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Evaluate { common, schedule } => commands::evaluate(&common, &schedule),
        Command::Optimize {
            common,
            seed,
            restarts,
            budget,
            passive,
        } => commands::optimize(&common, seed, restarts, budget, passive),
        Command::Validate {
            common,
            schedule,
            samples,
            seed,
        } => commands::validate(&common, &schedule, samples, seed),
        Command::Sweep {
            common,
            seed,
            restarts,
            budget,
        } => commands::sweep(&common, seed, restarts, budget),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Validation(msg)) => {
            eprintln!("validation error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
