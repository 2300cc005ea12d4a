//! `crowd-mle`: estimate, simulate, benchmark, enumerate, sample and check.
//!
//! Exit codes: 0 success, 2 input error, 3 resource cap exceeded, 4 invalid
//! configuration.

mod commands;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use crowd_mle::experiment::{Algorithm, Mode};
use thiserror::Error;

use crate::io::IoError;

#[derive(Debug, Parser)]
#[command(
    name = "crowd-mle",
    version,
    about = "Globally optimal maximum-likelihood estimation for crowdsourced labels"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Estimate true labels and worker quality from a response file.
    Estimate(EstimateArgs),
    /// Generate a synthetic instance with known truth.
    Simulate(SimulateArgs),
    /// Run seeded synthetic trials and write mean quality metrics per m.
    Benchmark(BenchmarkArgs),
    /// Count (or list) the candidate mappings for a response count.
    Enumerate(EnumerateArgs),
    /// Keep m raw responses per item.
    Sample(SampleArgs),
    /// Re-score an estimate result against its input.
    Check(CheckArgs),
}

#[derive(Debug, Clone, Args)]
struct SearchArgs {
    /// Enumeration cap; overrides CROWD_MLE_CAP.
    #[arg(long)]
    cap: Option<u64>,
    #[arg(long, default_value_t = crowd_mle::em::DEFAULT_MAX_ITER)]
    max_iter: usize,
    #[arg(long, default_value_t = crowd_mle::em::DEFAULT_TOL)]
    tol: f64,
    /// Run on one thread.
    #[arg(long)]
    sequential: bool,
}

#[derive(Debug, Args)]
struct EstimateArgs {
    /// Counts CSV (`item_id,c1,...,cR`) or raw CSV (`item_id,worker_id,rating[,class]`).
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value = "filter")]
    mode: Mode,
    #[arg(long, default_value = "opt")]
    algorithm: Algorithm,
    /// Number of rating values; inferred from the input when omitted.
    #[arg(long = "R")]
    ratings: Option<usize>,
    /// Result JSON path; stdout when omitted.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Truth CSV (`item_id,value`) for quality metrics.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Order two-class buckets by expert answers as well.
    #[arg(long)]
    expert_prior: bool,
    #[command(flatten)]
    search: SearchArgs,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// `filter` or `rating`.
    #[arg(long, default_value = "filter")]
    mode: Mode,
    #[arg(long)]
    n: usize,
    #[arg(long = "R", default_value_t = 2)]
    ratings: usize,
    #[arg(long)]
    m: u32,
    /// Share of true "1" items, or a comma list over ratings `1..=R`.
    #[arg(long)]
    selectivity: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory for responses.csv, truth.csv and matrix.json.
    #[arg(long)]
    output: PathBuf,
    /// Write responses one row per worker answer.
    #[arg(long)]
    raw: bool,
}

#[derive(Debug, Args)]
struct BenchmarkArgs {
    /// `filter` or `rating`.
    #[arg(long, default_value = "filter")]
    mode: Mode,
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long = "R", default_value_t = 2)]
    ratings: usize,
    /// Comma list of responses per item.
    #[arg(long, default_value = "1,3,5,7,9")]
    m: String,
    #[arg(long)]
    selectivity: Option<String>,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Comma list of algorithms.
    #[arg(long, default_value = "opt,em1,em2,em3,em-star,majority")]
    algorithms: String,
    /// Results CSV path; stdout when omitted.
    #[arg(long)]
    output: Option<PathBuf>,
    #[command(flatten)]
    search: SearchArgs,
}

#[derive(Debug, Args)]
struct EnumerateArgs {
    #[arg(long, default_value = "rating")]
    mode: Mode,
    #[arg(long = "R", default_value_t = 2)]
    ratings: usize,
    /// Responses per item; the largest total in variable mode, the expert
    /// count in two-class mode.
    #[arg(long)]
    m: u32,
    /// Regular-worker responses per item in two-class mode.
    #[arg(long, default_value_t = 0)]
    m_regular: u32,
    #[arg(long)]
    expert_prior: bool,
    /// Write every mapping to this CSV.
    #[arg(long)]
    list: Option<PathBuf>,
    /// Listing cap; overrides CROWD_MLE_CAP.
    #[arg(long)]
    cap: Option<u64>,
}

#[derive(Debug, Args)]
struct SampleArgs {
    /// Raw CSV.
    #[arg(long)]
    input: PathBuf,
    #[arg(long = "R")]
    ratings: Option<usize>,
    #[arg(long)]
    m: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Debug, Args)]
struct CheckArgs {
    /// The response file the result was computed from.
    #[arg(long)]
    input: PathBuf,
    /// Result JSON written by `estimate`.
    #[arg(long)]
    result: PathBuf,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Core(#[from] crowd_mle::Error),
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Resource(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        use crowd_mle::Error as E;
        let core = match self {
            CliError::Io(IoError::Core(e)) | CliError::Core(e) => e,
            CliError::Io(_) => return 2,
            CliError::Config(_) => return 4,
            CliError::Resource(_) => return 3,
        };
        match core {
            E::Malformed(_) | E::InconsistentTotal { .. } | E::RatingOutOfRange { .. } => 2,
            E::CapExceeded { .. } => 3,
            E::InvalidConfig(_)
            | E::DimensionMismatch { .. }
            | E::InvalidMatrix(_)
            | E::MappingMismatch(_)
            | E::InsufficientResponses { .. } => 4,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Estimate(a) => commands::estimate(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Benchmark(a) => commands::benchmark(a),
        Command::Enumerate(a) => commands::enumerate(a),
        Command::Sample(a) => commands::sample(a),
        Command::Check(a) => commands::check(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
