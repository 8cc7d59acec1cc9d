//! `dynmask` command line: gradient checks, demo decoding, grounding-token
//! parsing, the overfit probe and the evaluators.
//!
//! Exit codes: 0 success, 1 check or metric failure, 2 usage error,
//! 3 I/O or format error.

mod commands;
mod settings;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub use settings::Settings;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "dynmask",
    version,
    about = "Dynamic-convolution mask decoder toolkit"
)]
pub struct Cli {
    /// JSON file with default flag values; explicit flags take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    pub settings: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Finite-difference check of the decoder and its primitives.
    Gradcheck(GradcheckArgs),
    /// Decode one mask from saved parameters and features.
    DemoDecode(DemoDecodeArgs),
    /// Write random parameters and features for `demo-decode`.
    InitDemo(InitDemoArgs),
    /// Parse grounding tokens into elements and diagnostics.
    Parse(ParseArgs),
    /// Fit the decoder to a centered disk and report the dice trajectory.
    Probe(ProbeArgs),
    /// Score a prediction corpus against ground truth.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// Seed for configurations and inputs [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of random decoder configurations [default: 20]
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub trials: Option<u64>,
}

#[derive(Debug, Args)]
pub struct DemoDecodeArgs {
    /// Parameter header (JSON) written by `init-demo` or `write_params`
    #[arg(long, value_name = "FILE")]
    pub params: PathBuf,
    /// Decoder configuration (JSON)
    #[arg(long, value_name = "FILE")]
    pub config: PathBuf,
    /// Features: {"f_img": matrix, "f_q": matrix}
    #[arg(long, value_name = "FILE")]
    pub features: PathBuf,
    /// Logits output (JSON); the mask goes next to it as .pgm
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct InitDemoArgs {
    /// Decoder configuration (JSON)
    #[arg(long, value_name = "FILE")]
    pub config: PathBuf,
    /// Output directory for params.json, params.bin and features.json
    #[arg(long, value_name = "DIR")]
    pub dir: PathBuf,
    /// [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("input").required(true).args(["text", "file"])))]
pub struct ParseArgs {
    /// Text to parse
    #[arg(long)]
    pub text: Option<String>,
    /// File to parse (UTF-8)
    #[arg(long, value_name = "FILE")]
    pub file: Option<PathBuf>,
    /// Check elements against a task: segment, detect, point or line
    #[arg(long)]
    pub task: Option<String>,
    /// Expected mask tokens per segmentation target [default: 16]
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub n_query: Option<u64>,
}

#[derive(Debug, Args)]
pub struct ProbeArgs {
    /// Gradient steps [default: 300]
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub steps: Option<u64>,
    /// Learning rate [default: 0.05]
    #[arg(long, value_parser = positive_f64)]
    pub lr: Option<f64>,
    /// [default: 7]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Exit 1 unless the final soft dice exceeds this value
    #[arg(long, value_parser = unit_interval)]
    pub min_dice: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EvalKind {
    Seg,
    Det,
    Kpt,
    Dx,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    pub kind: EvalKind,
    /// Prediction corpus (JSON Lines)
    #[arg(long, value_name = "FILE")]
    pub pred: PathBuf,
    /// Ground-truth corpus (JSON Lines)
    #[arg(long, value_name = "FILE")]
    pub gt: PathBuf,
    /// Detection IoU threshold in (0, 1] [default: 0.5]
    #[arg(long, value_parser = unit_interval)]
    pub iou_thresh: Option<f64>,
    /// Detection: report the best-F1 operating point over score thresholds
    #[arg(long)]
    pub best_f1: bool,
    /// Print an aligned text table instead of JSON
    #[arg(long)]
    pub table: bool,
}

fn positive_f64(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(v),
        Ok(v) => Err(format!("{v} is not a positive finite number")),
        Err(e) => Err(e.to_string()),
    }
}

fn unit_interval(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v <= 1.0 => Ok(v),
        Ok(v) => Err(format!("{v} is outside (0, 1]")),
        Err(e) => Err(e.to_string()),
    }
}

/// Command failure with its exit code.
#[derive(Debug, thiserror::Error)]
pub enum Failure {
    #[error("{0}")]
    Check(String),
    #[error("usage: {0}")]
    Usage(String),
    #[error("{0}")]
    Io(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Check(_) => EXIT_CHECK,
            Failure::Usage(_) => EXIT_USAGE,
            Failure::Io(_) => EXIT_IO,
        }
    }
}

/// Parses `argv` (including the program name) and runs the command.
pub fn run<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                write!(err, "{text}")
            } else {
                write!(out, "{text}")
            };
            return e.exit_code();
        }
    };
    match commands::dispatch(&cli, out, err) {
        Ok(code) => code,
        Err(f) => {
            let _ = writeln!(err, "dynmask: {f}");
            f.exit_code()
        }
    }
}
