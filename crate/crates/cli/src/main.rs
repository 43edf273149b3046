//! `calibench`: calibration-aware benchmark reports for binary-decision
//! models. Exit codes: 0 success, 1 data error, 2 configuration error.

mod commands;
mod config;
mod report;

use calibench::protocols::Regime;
use calibench::Method;
use clap::{Parser, Subcommand};
use config::{AnalyzeArgs, CliError, FixtureArgs, GridArgs, IoArgs, KappaArgs, RunConfig};

#[derive(Parser)]
#[command(
    name = "calibench",
    version,
    about = "Calibration-aware benchmarking for binary-decision models: \
             AUC grids, calibrated expected-accuracy grids, kappa grids, \
             and rank-divergence analyses"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Per-dataset AUC grid with ranks and a mean row
    Auc {
        #[command(flatten)]
        io: IoArgs,
    },
    /// Expected-accuracy grids for calibration regimes and methods
    Calibrate(GridArgs),
    /// Kappa grids, best over the three calibration methods per regime
    Kappa(KappaArgs),
    /// Rank deltas, variance groups, and per-model score histograms
    Analyze(AnalyzeArgs),
    /// Write a seeded synthetic corpus whose AUC and calibrated-accuracy
    /// rankings disagree
    Fixture(FixtureArgs),
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Auc { io } => {
            let cfg = RunConfig::resolve(&io, &[], &[], 100, 0.8, &[Regime::AucOnly], &[])?;
            commands::cmd_auc(&cfg)
        }
        Command::Calibrate(args) => {
            let cfg = RunConfig::resolve(
                &args.io,
                &args.regime,
                &args.method,
                args.reps,
                args.ratio,
                &Regime::CALIBRATED,
                &Method::ALL,
            )?;
            commands::cmd_calibrate(&cfg)
        }
        Command::Kappa(args) => {
            let cfg = RunConfig::resolve(
                &args.io,
                &args.regime,
                &[],
                args.reps,
                args.ratio,
                &Regime::CALIBRATED,
                &Method::ALL,
            )?;
            commands::cmd_kappa(&cfg)
        }
        Command::Analyze(args) => {
            let cfg = RunConfig::resolve(
                &args.io,
                std::slice::from_ref(&args.regime),
                std::slice::from_ref(&args.method),
                args.reps,
                args.ratio,
                &Regime::CALIBRATED,
                &Method::ALL,
            )?;
            commands::cmd_analyze(&cfg, args.bins)
        }
        Command::Fixture(args) => commands::cmd_fixture(&args),
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(error) = dispatch(cli.command) {
        eprintln!("error: {error}");
        std::process::exit(error.exit_code());
    }
}
