//! `hkq`: simulate envelopes, train estimators, evaluate them on the test grid
//! and produce predictions or parametric maps.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hkq_core::eval::MapFormat;
use hkq_core::{Error, EstimatorKind};
use serde::Serialize;

#[derive(Parser, Debug)]
#[command(name = "hkq", version, about = "Homodyned-K parameter estimation")]
struct Cli {
    /// Cap on worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Draw synthetic HK envelope blocks or rasters.
    Simulate(SimulateArgs),
    /// Build a training set and fit an ANN or BNN for one sample size.
    Train(TrainArgs),
    /// Score estimators on the log10(alpha) x k test grid.
    Evaluate(EvaluateArgs),
    /// Estimate (log10 alpha, k) for one envelope block or patch.
    Predict(PredictArgs),
    /// Sliding-window parametric maps over a raster.
    Map(MapArgs),
    /// Tabulate the moment-matching baseline.
    Lookup(LookupArgs),
}

fn parse_kind(s: &str) -> Result<EstimatorKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_format(s: &str) -> Result<MapFormat, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Args, Debug, Serialize)]
pub struct SimulateArgs {
    /// Target log10(alpha); omit together with --k to draw targets from the training box.
    #[arg(long, allow_hyphen_values = true)]
    pub log10_alpha: Option<f64>,
    #[arg(long)]
    pub k: Option<f64>,
    /// Samples per block.
    #[arg(long)]
    pub n: Option<usize>,
    /// Number of blocks with random targets (stored as frames).
    #[arg(long)]
    pub count: Option<usize>,
    /// Raster mode: frames, rows and columns.
    #[arg(long)]
    pub frames: Option<usize>,
    #[arg(long)]
    pub rows: Option<usize>,
    #[arg(long)]
    pub cols: Option<usize>,
    /// Raster mode: log10(alpha) of a second layer filling the bottom half.
    #[arg(long, allow_hyphen_values = true)]
    pub bottom_log10_alpha: Option<f64>,
    #[arg(long, env = "HKQ_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long, value_parser = parse_kind)]
    pub estimator: Option<EstimatorKind>,
    #[arg(long)]
    pub n_s: Option<usize>,
    /// JSON run config; flags given on the command line take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Training records.
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub mc_loss_samples: Option<usize>,
    #[arg(long)]
    pub kl_weight: Option<f64>,
    #[arg(long, env = "HKQ_SEED")]
    pub seed: Option<u64>,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct EvaluateArgs {
    /// Trained model checkpoint; may be repeated.
    #[arg(long)]
    pub model: Vec<PathBuf>,
    /// Moment-matching lookup table built by `hkq lookup`.
    #[arg(long)]
    pub moment_grid: Option<PathBuf>,
    /// Sample size of the grid blocks (default: the first model's).
    #[arg(long)]
    pub n_s: Option<usize>,
    #[arg(long, default_value_t = 31)]
    pub alpha_points: usize,
    #[arg(long, default_value_t = 11)]
    pub k_points: usize,
    #[arg(long, default_value_t = 100)]
    pub reps: usize,
    #[arg(long, default_value_t = hkq_core::estimators::DEFAULT_DRAWS)]
    pub n_draws: usize,
    #[arg(long)]
    pub clamp: bool,
    #[arg(long)]
    pub force: bool,
    #[arg(long, default_value = "csv", value_parser = parse_format)]
    pub format: MapFormat,
    #[arg(long, env = "HKQ_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Scores the ground truth itself.
    #[arg(long, hide = true)]
    pub oracle: bool,
    /// Scores a fixed (log10 alpha, k) estimate.
    #[arg(long, hide = true, num_args = 2, allow_hyphen_values = true)]
    pub constant: Option<Vec<f64>>,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct SourceArgs {
    #[arg(long, conflicts_with = "moment_grid", required_unless_present = "moment_grid")]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub moment_grid: Option<PathBuf>,
    /// Envelope file written by `simulate` or any tool following the same format.
    #[arg(short, long)]
    pub input: PathBuf,
    /// Rows skipped between kept samples (default 14 for rasters, 0 for 1-row blocks).
    #[arg(long)]
    pub axial_skip: Option<usize>,
    /// Columns skipped between kept samples (default 3 for rasters, 0 for 1-row blocks).
    #[arg(long)]
    pub lateral_skip: Option<usize>,
    #[arg(long, default_value_t = hkq_core::estimators::DEFAULT_DRAWS)]
    pub n_draws: usize,
    #[arg(long)]
    pub clamp: bool,
    #[arg(long)]
    pub force: bool,
    #[arg(long, env = "HKQ_SEED", default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug, Serialize)]
pub struct PredictArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub source: SourceArgs,
    /// Restrict to a patch: ROW,COL,ROWS,COLS.
    #[arg(long, value_delimiter = ',', num_args = 4)]
    pub patch: Option<Vec<usize>>,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct MapArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub source: SourceArgs,
    #[arg(long)]
    pub window_rows: usize,
    #[arg(long)]
    pub window_cols: usize,
    /// Defaults to the window height.
    #[arg(long)]
    pub step_rows: Option<usize>,
    /// Defaults to the window width.
    #[arg(long)]
    pub step_cols: Option<usize>,
    #[arg(long, default_value = "csv", value_parser = parse_format)]
    pub format: MapFormat,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct LookupArgs {
    #[arg(long, default_value_t = 16384)]
    pub samples_per_cell: usize,
    #[arg(long, default_value_t = hkq_core::estimators::LOOKUP_SHAPE.0)]
    pub alpha_points: usize,
    #[arg(long, default_value_t = hkq_core::estimators::LOOKUP_SHAPE.1)]
    pub k_points: usize,
    #[arg(long, env = "HKQ_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(short, long)]
    pub output: PathBuf,
}

fn exit_code(e: &Error) -> u8 {
    if e.is_numeric() {
        3
    } else if e.is_io() {
        4
    } else {
        2
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("hkq: error: --threads must be positive");
            return ExitCode::from(2);
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().expect("thread pool is configured once");
    }
    let result = match cli.command {
        Command::Simulate(a) => commands::simulate(a),
        Command::Train(a) => commands::train(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Predict(a) => commands::predict(a),
        Command::Map(a) => commands::map(a),
        Command::Lookup(a) => commands::lookup(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("hkq: error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
