//! `rap`: simulate streams, run the adaptive-penalty learner on CSV data,
//! reproduce the benchmark presets and estimate time-varying networks.

mod commands;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rap_core::{Family, GradientMode};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
        }
    }
}

impl From<rap_core::Error> for CliError {
    fn from(e: rap_core::Error) -> Self {
        use rap_core::Error::*;
        match e {
            InvalidForgettingFactor(_) | NegativeLambda(_) | InvalidConfig(_) | EmptyDimension => {
                CliError::Usage(e.to_string())
            }
            _ => CliError::Data(e.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FamilyArg {
    Gaussian,
    Binomial,
}

impl From<FamilyArg> for Family {
    fn from(f: FamilyArg) -> Self {
        match f {
            FamilyArg::Gaussian => Family::Gaussian,
            FamilyArg::Binomial => Family::Binomial,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Exact,
    Approx,
}

impl From<ModeArg> for GradientMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Exact => GradientMode::Exact,
            ModeArg::Approx => GradientMode::Approximate,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PresetArg {
    Stationary,
    Nonstationary,
}

#[derive(Debug, Parser)]
#[command(
    name = "rap",
    version,
    about = "Streaming Lasso with an online-adapted penalty"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Learner settings shared by `run` and `network`.
#[derive(Debug, Clone, Args)]
pub struct LearnerArgs {
    /// Forgetting factor in (0, 1].
    #[arg(long, default_value_t = 0.95)]
    pub r: f64,
    /// Step size of the penalty update.
    #[arg(long, default_value_t = 0.025)]
    pub epsilon: f64,
    /// Initial penalty, per unit of total observation weight.
    #[arg(long, default_value_t = 0.1)]
    pub lambda0: f64,
    #[arg(long, value_enum, default_value = "exact")]
    pub mode: ModeArg,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a (piecewise) stationary stream as CSV.
    Simulate {
        #[arg(long, value_enum, default_value = "gaussian")]
        family: FamilyArg,
        /// Number of predictors.
        #[arg(long, default_value_t = 20)]
        p: usize,
        /// Proportion of nonzero coefficients.
        #[arg(long, default_value_t = 0.2)]
        rho: f64,
        /// Number of observations.
        #[arg(long, default_value_t = 300)]
        n: usize,
        /// Use a benchmark preset instead of --p/--rho/--n.
        #[arg(long, value_enum)]
        preset: Option<PresetArg>,
        /// Also write the generating coefficients b1..bp.
        #[arg(long)]
        truth: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, short, default_value = "-")]
        out: PathBuf,
    },
    /// Run the adaptive learner over a CSV stream and write its trace.
    Run {
        #[arg(long, short)]
        input: PathBuf,
        #[arg(long, short, default_value = "-")]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "gaussian")]
        family: FamilyArg,
        #[command(flatten)]
        learner: LearnerArgs,
    },
    /// Reproduce a benchmark preset over several replications.
    Bench {
        #[arg(long, value_enum)]
        preset: PresetArg,
        #[arg(long, value_enum, default_value = "gaussian")]
        family: FamilyArg,
        #[arg(long, default_value_t = 100)]
        reps: usize,
        /// Predictors for the stationary preset.
        #[arg(long, default_value_t = 10)]
        p: usize,
        /// Overrides the preset's step size.
        #[arg(long)]
        epsilon: Option<f64>,
        /// Overrides the preset's initial penalty.
        #[arg(long)]
        lambda0: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Directory for summary.csv and traces.csv.
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Estimate a time-varying dependence network by neighborhood selection.
    Network {
        #[arg(long, short)]
        input: PathBuf,
        /// Edge list output.
        #[arg(long, short)]
        out: PathBuf,
        /// Per-node penalty traces; defaults to the edge file with a
        /// `.lambda.csv` suffix.
        #[arg(long)]
        lambda_out: Option<PathBuf>,
        /// Emit the graph every this many observations.
        #[arg(long, default_value_t = 10)]
        stride: usize,
        /// Require both regressions to select an edge.
        #[arg(long)]
        and_rule: bool,
        #[command(flatten)]
        learner: LearnerArgs,
    },
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate {
            family,
            p,
            rho,
            n,
            preset,
            truth,
            seed,
            out,
        } => commands::simulate(family.into(), p, rho, n, preset, truth, seed, &out),
        Command::Run {
            input,
            out,
            family,
            learner,
        } => commands::run(&input, &out, family.into(), &learner),
        Command::Bench {
            preset,
            family,
            reps,
            p,
            epsilon,
            lambda0,
            seed,
            out_dir,
        } => commands::bench(
            preset,
            family.into(),
            reps,
            p,
            epsilon,
            lambda0,
            seed,
            &out_dir,
        ),
        Command::Network {
            input,
            out,
            lambda_out,
            stride,
            and_rule,
            learner,
        } => {
            let lambda_out = lambda_out.unwrap_or_else(|| {
                let mut s = out.clone().into_os_string();
                s.push(".lambda.csv");
                PathBuf::from(s)
            });
            commands::network(&input, &out, &lambda_out, stride, and_rule, &learner)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
