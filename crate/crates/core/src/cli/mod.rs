//! The `evsnn` command line.
//!
//! Every command reads the experiment file given with `--config` (where it
//! needs one); `--seed`, `--jobs` and `--out` override the file and each
//! override is logged. Reports are written as JSON and as aligned text.
//! Exit codes: 0 success, 2 usage or schema error, 3 training divergence,
//! 4 file error.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;
use std::sync::Mutex;

use clap::{Args, Parser, Subcommand};

use crate::snn::ModelKind;
use crate::Error;

mod commands;

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DIVERGENCE: i32 = 3;
pub const EXIT_IO: i32 = 4;

#[derive(Debug, Parser)]
#[command(
    name = "evsnn",
    version,
    about = "Spiking-network classification of event streams"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Experiment file (JSON).
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Master seed; for `synth`, the dataset seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Parallel jobs (default: the file's value, else all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Output directory (default: the file's `output`, else `out`).
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset: event files plus manifest.
    Synth(SynthArgs),
    /// Show the binary frames of one event stream.
    Voxelize(VoxelizeArgs),
    /// Apply an augmentation pipeline to one event file.
    Augment(AugmentArgs),
    /// Train one fold; writes a checkpoint and a per-epoch metrics log.
    Train(TrainArgs),
    /// Cross-validate the experiment, or score a checkpoint on one fold.
    Eval(EvalArgs),
    /// Cross-validate every combination of the common augmentations.
    Sweep(SweepArgs),
    /// Regress sweep scores on the augmentations used.
    Regress(RegressArgs),
    /// Print the energy constants, or estimate inference energy.
    Energy(EnergyArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Number of classes, taken in order from the template list.
    #[arg(long)]
    pub classes: Option<usize>,
    #[arg(long)]
    pub samples_per_class: Option<usize>,
    #[arg(long)]
    pub width: Option<u16>,
    #[arg(long)]
    pub height: Option<u16>,
    /// Sample duration in microseconds.
    #[arg(long)]
    pub duration_us: Option<u64>,
    /// Mean events per sample.
    #[arg(long)]
    pub events: Option<u32>,
}

#[derive(Debug, Args)]
pub struct VoxelizeArgs {
    /// Event file, or a dataset manifest / directory together with `--sample`.
    pub input: PathBuf,
    /// Sample index when `input` is a dataset.
    #[arg(long, default_value_t = 0)]
    pub sample: usize,
    /// Time bins (default: the file's `network.time_bins`, else 6).
    #[arg(long)]
    pub bins: Option<usize>,
}

#[derive(Debug, Args)]
pub struct AugmentArgs {
    /// Event file to transform.
    pub input: PathBuf,
    /// Transform to apply with default parameters, always firing; repeat
    /// for a pipeline. Without it the experiment's `augment` section is used.
    #[arg(long, value_name = "NAME")]
    pub eda: Vec<String>,
    /// Index that keys the random draws of this sample.
    #[arg(long, default_value_t = 0)]
    pub sample_index: u64,
}

#[derive(Debug, Args)]
pub struct ProtocolArgs {
    /// Model kind (overrides the file).
    #[arg(long, value_parser = parse_model)]
    pub model: Option<ModelKind>,
    /// Number of folds (overrides the file).
    #[arg(long)]
    pub folds: Option<usize>,
    /// Training epochs (overrides the file).
    #[arg(long)]
    pub epochs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub protocol: ProtocolArgs,
    /// Fold whose training part is used.
    #[arg(long, default_value_t = 0)]
    pub fold: usize,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub protocol: ProtocolArgs,
    /// Score this checkpoint on the test part of `--fold` instead of
    /// running the cross-validation.
    #[arg(long, value_name = "FILE")]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub fold: usize,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub protocol: ProtocolArgs,
    /// Also run EventDrop and EventDrop+Mirror on the best combination.
    #[arg(long)]
    pub specific: bool,
}

#[derive(Debug, Args)]
pub struct RegressArgs {
    /// A `sweep.json` written by `sweep`.
    pub sweep: PathBuf,
    /// Only this model kind.
    #[arg(long, value_parser = parse_model)]
    pub model: Option<ModelKind>,
}

#[derive(Debug, Args)]
pub struct EnergyArgs {
    /// Trained spiking checkpoint (default: freshly initialized weights).
    #[arg(long, value_name = "FILE")]
    pub checkpoint: Option<PathBuf>,
    /// Measure on the test part of this fold instead of the whole dataset.
    #[arg(long)]
    pub fold: Option<usize>,
    /// Rate charged to each layer: `input` or `output` spikes.
    #[arg(long, value_parser = parse_charging)]
    pub charging: Option<crate::energy::Charging>,
}

fn parse_model(s: &str) -> Result<ModelKind, String> {
    match s {
        "spiking" => Ok(ModelKind::Spiking),
        "dense" => Ok(ModelKind::Dense),
        _ => Err(format!("unknown model `{s}` (expected spiking or dense)")),
    }
}

fn parse_charging(s: &str) -> Result<crate::energy::Charging, String> {
    match s {
        "input" => Ok(crate::energy::Charging::Input),
        "output" => Ok(crate::energy::Charging::Output),
        _ => Err(format!("unknown charging `{s}` (expected input or output)")),
    }
}

/// Serializes all terminal output. Reports go to stdout, progress and
/// override notices to stderr, one whole line at a time.
pub struct Console {
    lock: Mutex<()>,
}

impl Console {
    pub fn new() -> Self {
        Console {
            lock: Mutex::new(()),
        }
    }

    pub fn info(&self, line: &str) {
        let _g = self.lock.lock().unwrap_or_else(|e| e.into_inner());
        let mut err = std::io::stderr().lock();
        let _ = writeln!(err, "{line}");
    }

    pub fn out(&self, text: &str) {
        let _g = self.lock.lock().unwrap_or_else(|e| e.into_inner());
        let mut out = std::io::stdout().lock();
        let _ = out.write_all(text.as_bytes());
        let _ = out.flush();
    }
}

impl Default for Console {
    fn default() -> Self {
        Self::new()
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e.root() {
        Error::Divergence { .. } => EXIT_DIVERGENCE,
        Error::Io { .. } | Error::Parse { .. } => EXIT_IO,
        _ => EXIT_USAGE,
    }
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    let console = Console::new();
    match commands::dispatch(cli, &console) {
        Ok(()) => 0,
        Err(e) => {
            console.info(&format!("error: {e}"));
            exit_code(&e)
        }
    }
}

pub fn main() -> i32 {
    run(std::env::args_os())
}
