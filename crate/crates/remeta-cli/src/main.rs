//! Command-line surface: model fitting, simulation studies, diagnostics
//! recomputation, and manifest replay.
//!
//! Exit codes: 0 on success, 2 for input/validation problems (unreadable or
//! malformed files, bad option values), 1 for anything else.

mod config_file;
mod io;
mod manifest;
mod options;
mod run;

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;

use crate::options::InputError;

#[derive(Parser)]
#[command(
    name = "remeta",
    version,
    about = "Bayesian multivariate random-effects meta-analysis under elliptical error models"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the model to a dataset and write summaries, chain traces,
    /// rank-histogram and density data.
    Fit(FitArgs),
    /// Simulation studies over a tau^2 grid.
    Simulate {
        #[command(subcommand)]
        which: SimulateCmd,
    },
    /// Recompute summaries, rank R-hat and rank histograms from stored
    /// chain traces.
    Diagnose(DiagnoseArgs),
    /// Re-run the command recorded in a manifest.
    Replay(ReplayArgs),
}

#[derive(Subcommand)]
enum SimulateCmd {
    /// Empirical coverage of probability-symmetric credible intervals.
    Coverage(SimArgs),
    /// Average rank-normalized split R-hat per parameter.
    Rhat(SimArgs),
    /// Coverage of beta-shifted intervals for psi_11 as a function of beta.
    BetaCurve(SimArgs),
}

#[derive(Args, Clone, Default)]
struct CommonFitArgs {
    /// Error family: normal | t
    #[arg(long)]
    family: Option<String>,
    /// Degrees of freedom of the t family
    #[arg(long)]
    dof: Option<f64>,
    /// Prior on the between-study covariance: reference | jeffreys
    #[arg(long)]
    prior: Option<String>,
    /// Number of chains
    #[arg(long)]
    chains: Option<usize>,
    /// Total iterations per chain, including burn-in
    #[arg(long)]
    length: Option<usize>,
    /// Burn-in iterations discarded from each chain
    #[arg(long)]
    burnin: Option<usize>,
    /// Master seed; chain k uses stream k
    #[arg(long)]
    seed: Option<u64>,
    /// Keep every thin-th post-burn-in draw
    #[arg(long)]
    thin: Option<usize>,
    /// On rejection: standard (keep the fresh mean draw) | paper-literal
    #[arg(long)]
    mode: Option<String>,
    /// Credible level is 1 - alpha
    #[arg(long)]
    alpha: Option<f64>,
}

#[derive(Args)]
struct FitArgs {
    /// Dataset CSV (see README for the two accepted layouts)
    #[arg(long)]
    data: PathBuf,
    /// Output directory, created if missing
    #[arg(long, short)]
    out: PathBuf,
    /// Flat key = value config file; flags win over file entries
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    common: CommonFitArgs,
    /// Lower quantile level of the covariance intervals
    #[arg(long)]
    beta: Option<f64>,
    /// Thinning applied before density estimation
    #[arg(long)]
    kde_thin: Option<usize>,
    /// Grid points per density curve
    #[arg(long)]
    kde_points: Option<usize>,
    /// Rank-histogram bins
    #[arg(long)]
    bins: Option<usize>,
}

#[derive(Args)]
struct SimArgs {
    /// Output directory, created if missing
    #[arg(long, short)]
    out: PathBuf,
    /// Flat key = value config file; flags win over file entries
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    common: CommonFitArgs,
    /// Effect dimension
    #[arg(long)]
    p: Option<usize>,
    /// Studies per dataset
    #[arg(long)]
    n: Option<usize>,
    /// Comma-separated tau^2 grid
    #[arg(long)]
    tau2: Option<String>,
    /// Repetitions per grid point
    #[arg(long)]
    reps: Option<usize>,
    /// Comma-separated beta grid (beta-curve only)
    #[arg(long)]
    betas: Option<String>,
    /// Redraw the true parameters each repetition (true|false)
    #[arg(long)]
    redraw: Option<bool>,
}

#[derive(Args)]
struct DiagnoseArgs {
    /// One or more trace CSVs written by `fit`
    #[arg(long, required = true, num_args = 1..)]
    traces: Vec<PathBuf>,
    /// Output directory, created if missing
    #[arg(long, short)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    bins: Option<usize>,
}

#[derive(Args)]
struct ReplayArgs {
    /// Manifest written by a previous run
    #[arg(long)]
    manifest: PathBuf,
    /// Output directory for the replayed run
    #[arg(long, short)]
    out: PathBuf,
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Command::Fit(args) => run::fit_from_args(&args),
        Command::Simulate { which } => match which {
            SimulateCmd::Coverage(args) => run::simulate_from_args(&args, options::SimKind::Coverage),
            SimulateCmd::Rhat(args) => run::simulate_from_args(&args, options::SimKind::Rhat),
            SimulateCmd::BetaCurve(args) => {
                run::simulate_from_args(&args, options::SimKind::BetaCurve)
            }
        },
        Command::Diagnose(args) => run::diagnose_from_args(&args),
        Command::Replay(args) => run::replay(&args.manifest, &args.out),
    };
    match result {
        Ok(()) => {}
        Err(err) => {
            eprintln!("error: {err:#}");
            let code = if err.downcast_ref::<InputError>().is_some() {
                2
            } else {
                1
            };
            std::process::exit(code);
        }
    }
}
