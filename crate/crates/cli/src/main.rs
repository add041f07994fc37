//! `bocf`: train, evaluate, and run illumination estimators from the shell.
//!
//! Every run resolves its settings from defaults, an optional flat JSON
//! config file (`--config`), and explicit flags, in that order of
//! precedence, and echoes the fully resolved configuration next to its
//! outputs so any run can be reproduced from its own artifacts.
//!
//! Exit codes: 0 success, 1 usage or input error, 2 numerical failure
//! (non-finite loss during training).

mod cmd;
mod config;
mod output;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use bocf_core::train::TrainError;

#[derive(Parser)]
#[command(
    name = "bocf",
    version,
    about = "Bag-of-color-features illumination estimation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write a timestamped run directory.
    Train(TrainArgs),
    /// Evaluate a trained model over a manifest.
    Eval(EvalArgs),
    /// Print one illuminant estimate per manifest image.
    Predict(PredictArgs),
    /// Evaluate a statistical estimator over a manifest.
    Baseline(BaselineArgs),
    /// K-fold cross-validation: train and evaluate one model per fold.
    Crossval(CrossvalArgs),
    /// Generate a synthetic dataset with exact ground truth.
    Gensynth(GensynthArgs),
}

/// Flags shared by every subcommand.
#[derive(Args)]
struct CommonArgs {
    /// Flat JSON config file; explicit flags override its values.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Seed for every random choice the command makes.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for batch gradients and evaluation.
    #[arg(long)]
    workers: Option<usize>,
    /// Where run artifacts are written.
    #[arg(long, value_name = "DIR")]
    out_dir: Option<PathBuf>,
}

/// Model topology flags, shared by `train` and `crossval`.
#[derive(Args)]
struct ModelArgs {
    /// Number of conv/pool layers.
    #[arg(long)]
    conv_layers: Option<usize>,
    /// Filters per conv layer.
    #[arg(long)]
    filters: Option<usize>,
    /// Conv kernel side length.
    #[arg(long)]
    kernel_size: Option<usize>,
    /// Codebook size K.
    #[arg(long)]
    codebook: Option<usize>,
    /// Hidden units in the estimation head.
    #[arg(long)]
    hidden: Option<usize>,
    /// Attention stage: none, variant1, or variant2.
    #[arg(long)]
    attention: Option<String>,
    /// Network input side length.
    #[arg(long)]
    input_size: Option<usize>,
}

/// Optimization and augmentation flags, shared by `train` and `crossval`.
#[derive(Args)]
struct OptimArgs {
    /// Images per gradient step.
    #[arg(long)]
    batch_size: Option<usize>,
    /// Adam step size.
    #[arg(long)]
    learning_rate: Option<f64>,
    /// Passes over the training set.
    #[arg(long)]
    epochs: Option<usize>,
    /// Adam first-moment decay.
    #[arg(long)]
    beta1: Option<f64>,
    /// Adam second-moment decay.
    #[arg(long)]
    beta2: Option<f64>,
    /// Adam denominator offset.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Initial attention blend weight.
    #[arg(long)]
    lambda_init: Option<f64>,
    /// Initialize the codebook by k-means over extracted features.
    #[arg(long)]
    kmeans_init: Option<bool>,
    /// Random crop side before resizing to the input size.
    #[arg(long)]
    crop_size: Option<usize>,
    /// Maximum rotation magnitude in degrees.
    #[arg(long)]
    rotation: Option<f64>,
    /// Lower bound of the random intensity rescale.
    #[arg(long)]
    rescale_min: Option<f64>,
    /// Upper bound of the random intensity rescale.
    #[arg(long)]
    rescale_max: Option<f64>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Dataset manifest CSV.
    #[arg(long, value_name = "FILE")]
    manifest: Option<PathBuf>,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    optim: OptimArgs,
    /// Also save the model every N epochs (0 = final only).
    #[arg(long)]
    checkpoint_interval: Option<usize>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Dataset manifest CSV.
    #[arg(long, value_name = "FILE")]
    manifest: Option<PathBuf>,
    /// Trained model checkpoint.
    #[arg(long, value_name = "FILE")]
    model: Option<PathBuf>,
    /// Apply this 3x3 color conversion matrix to every image first.
    #[arg(long, value_name = "FILE")]
    ccm: Option<PathBuf>,
    /// Also write per-image errors to this CSV.
    #[arg(long, value_name = "FILE")]
    errors_csv: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Dataset manifest CSV.
    #[arg(long, value_name = "FILE")]
    manifest: Option<PathBuf>,
    /// Trained model checkpoint.
    #[arg(long, value_name = "FILE")]
    model: Option<PathBuf>,
    /// Apply this 3x3 color conversion matrix to every image first.
    #[arg(long, value_name = "FILE")]
    ccm: Option<PathBuf>,
}

#[derive(Args)]
struct BaselineArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Dataset manifest CSV.
    #[arg(long, value_name = "FILE")]
    manifest: Option<PathBuf>,
    /// gray-world, white-patch, shades-of-gray, gray-edge,
    /// general-gray-world, or framework.
    #[arg(long)]
    method: Option<String>,
    /// Minkowski norm for methods that take one.
    #[arg(long)]
    p: Option<f64>,
    /// Gaussian smoothing scale for methods that take one.
    #[arg(long)]
    sigma: Option<f64>,
    /// Derivative order for the raw framework method.
    #[arg(long)]
    n: Option<u64>,
    /// Apply this 3x3 color conversion matrix to every image first.
    #[arg(long, value_name = "FILE")]
    ccm: Option<PathBuf>,
    /// Also write per-image errors to this CSV.
    #[arg(long, value_name = "FILE")]
    errors_csv: Option<PathBuf>,
}

#[derive(Args)]
struct CrossvalArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Dataset manifest CSV.
    #[arg(long, value_name = "FILE")]
    manifest: Option<PathBuf>,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    optim: OptimArgs,
    /// Number of cross-validation folds.
    #[arg(long)]
    folds: Option<usize>,
}

#[derive(Args)]
struct GensynthArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Number of scenes to generate.
    #[arg(long)]
    n: Option<u64>,
    /// Scene side length in pixels.
    #[arg(long)]
    size: Option<usize>,
    /// Patches per scene.
    #[arg(long)]
    patches: Option<usize>,
    /// Include a unit-reflectance patch in every scene.
    #[arg(long)]
    white_patch: Option<bool>,
    /// PNG bit depth: 8 or 16.
    #[arg(long)]
    bit_depth: Option<u8>,
}

/// A command failure with the process exit code it maps to.
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    /// Usage and input problems: exit 1.
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: 1,
            message: message.into(),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        let code = match e {
            TrainError::NonFiniteLoss { .. } => 2,
            _ => 1,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

macro_rules! usage_error_from {
    ($($ty:ty),*) => {$(
        impl From<$ty> for CliError {
            fn from(e: $ty) -> Self {
                CliError::usage(e.to_string())
            }
        }
    )*};
}

usage_error_from!(
    bocf_core::imageio::ImageIoError,
    bocf_core::bocf::ModelError,
    bocf_core::evaluate::EvalError,
    bocf_core::statistical::StatError,
    std::io::Error,
    serde_json::Error
);

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Train(args) => cmd::train::run(&args),
        Command::Eval(args) => cmd::eval::run(&args),
        Command::Predict(args) => cmd::predict::run(&args),
        Command::Baseline(args) => cmd::baseline::run(&args),
        Command::Crossval(args) => cmd::crossval::run(&args),
        Command::Gensynth(args) => cmd::gensynth::run(&args),
    }
}

fn main() {
    // Rust ignores SIGPIPE by default, turning `bocf predict | head` into a
    // panic on the first write after the pipe closes. Restore the default
    // disposition so a closed pipe ends the process quietly like any filter.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    // Clap's default exit code for usage errors is 2, which this tool
    // reserves for numerical failures.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    match run(cli) {
        Ok(()) => {}
        Err(e) => {
            eprintln!("error: {}", e.message);
            std::process::exit(e.code);
        }
    }
}
