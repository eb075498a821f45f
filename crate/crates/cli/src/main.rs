//! `c2l`: synthetic data, training, evaluation, benchmarking and streaming
//! prediction for the short-window SOC estimator.

mod commands;
mod config;
mod layout;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "c2l", version, about = "Short-window battery state-of-charge estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train one model per seed and report metrics on the validation cycles.
    Train(TrainArgs),
    /// Score a checkpoint on the cycles of a data directory.
    Eval(EvalArgs),
    /// Print parameter count, storage and single-window latency.
    Bench(BenchArgs),
    /// Write synthetic drive cycles and a manifest.
    Synth(SynthArgs),
    /// Stream a telemetry CSV through a checkpoint, one SOC per line.
    Predict(PredictArgs),
}

/// Overrides for individual config keys.
#[derive(Args, Debug, Default)]
pub struct Overrides {
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    /// Step between training windows.
    #[arg(long)]
    pub stride: Option<usize>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub harmonics: Option<usize>,
    #[arg(long)]
    pub window_len: Option<usize>,
    #[arg(long)]
    pub chunks: Option<usize>,
    /// Comma-separated seed list, e.g. `1,2,3`.
    #[arg(long, value_parser = config::parse_seeds)]
    pub seeds: Option<Vec<u64>>,
    /// Keep final-epoch weights instead of the best validation epoch.
    #[arg(long)]
    pub last_epoch: bool,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// TOML config with [model] and [train] tables (default: $C2L_CONFIG).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Seeds trained concurrently.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Do not echo epoch lines to stderr.
    #[arg(long)]
    pub quiet: bool,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Scaler fitted on the checkpoint's training cycles.
    #[arg(long)]
    pub scaler: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Which partition of the data manifest to score.
    #[arg(long, default_value = "test", value_parser = ["train", "val", "test", "all"])]
    pub split: String,
    /// Directory for metrics/ and traces/.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write one trace CSV per cycle under <out>/traces.
    #[arg(long)]
    pub export_traces: bool,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    /// Benchmark this checkpoint instead of a freshly initialized model.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 1000)]
    pub trials: usize,
    #[arg(long, default_value_t = 50)]
    pub warmup: usize,
    /// Also print the report as JSON.
    #[arg(long)]
    pub json: bool,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 8)]
    pub cycles: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Cap on each cycle's length in seconds.
    #[arg(long)]
    pub duration_s: Option<f64>,
    /// Mean discharge current in amperes.
    #[arg(long)]
    pub mean_current: Option<f64>,
    #[arg(long, default_value_t = 25.0)]
    pub ambient_c: f64,
}

#[derive(Args, Debug)]
pub struct PredictArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub scaler: PathBuf,
    /// CSV with current_a, voltage_v and temperature_c columns.
    #[arg(long)]
    pub input: PathBuf,
}

/// Marks failures caused by missing or unusable inputs; they exit with status 2.
#[derive(Debug)]
pub struct InputError(pub String);

impl std::fmt::Display for InputError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InputError {}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::Bench(a) => commands::bench(a),
        Command::Synth(a) => commands::synth(a),
        Command::Predict(a) => commands::predict(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.chain().any(|c| c.is::<InputError>()) {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
