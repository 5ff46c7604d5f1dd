use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;

#[derive(Parser, Debug)]
#[command(
    name = "blockcrypt",
    version,
    about = "Block-scrambling image encryption and learnable image transforms"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a fresh 32-byte key file.
    Keygen {
        #[arg(short, long)]
        out: PathBuf,
        /// Derive the key from a seed instead of the OS generator.
        #[arg(long)]
        seed: Option<u64>,
        /// Store an explicit FFX password in the key file.
        #[arg(long)]
        ffx_password: Option<String>,
    },
    /// EtC-encrypt a PPM image.
    Encrypt(EtcArgs),
    /// Decrypt an EtC image. Grayscale variants write the RGB image back.
    Decrypt(EtcArgs),
    /// Apply a learnable transform to a PPM image.
    Transform(LearnArgs),
    /// Undo a pixel-wise, SHF or NEG transform.
    Invert(LearnArgs),
    /// Block count and key-space size for the color EtC scheme.
    Keyspace {
        #[arg(long)]
        x: u64,
        #[arg(long)]
        y: u64,
        #[arg(long)]
        bx: u64,
        #[arg(long)]
        by: u64,
    },
    /// Check distance, inner-product and feature-order conservation on a
    /// labeled image directory.
    Verify {
        #[command(flatten)]
        transform: TransformArgs,
        #[arg(long)]
        dataset: PathBuf,
    },
    /// k-nearest-neighbor classification, optionally on transformed data.
    Knn {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(short, long, default_value_t = 1)]
        k: usize,
        #[command(flatten)]
        transform: OptTransformArgs,
        /// Write `filename,label` predictions here.
        #[arg(long)]
        preds: Option<PathBuf>,
    },
    /// Accuracy with the correct key, random incorrect keys and plain input.
    Keysense {
        #[command(flatten)]
        transform: TransformArgs,
        /// Directory holding `train/` and `test/` labeled subdirectories.
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long, default_value_t = 1)]
        k: usize,
    },
    /// Agreement between two prediction files.
    Watermark {
        #[arg(long)]
        preds_a: PathBuf,
        #[arg(long)]
        preds_b: PathBuf,
    },
    /// Write a synthetic two-split prototype dataset.
    Synth {
        #[arg(short, long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 2)]
        classes: usize,
        #[arg(long, default_value_t = 10)]
        prototypes: usize,
        #[arg(long, default_value_t = 2)]
        samples: usize,
        #[arg(long, default_value_t = 16)]
        size: usize,
    },
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum EtcKind {
    Color,
    GrayscaleRgb,
    GrayscaleYcbcr,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Step {
    Scramble,
    Rotate,
    Negpos,
    Color,
}

#[derive(Args, Debug)]
struct EtcArgs {
    #[arg(long, value_enum)]
    variant: EtcKind,
    #[arg(long, default_value_t = 16)]
    bx: usize,
    #[arg(long, default_value_t = 16)]
    by: usize,
    #[arg(long)]
    key: PathBuf,
    /// Comma-separated subset of steps; all by default.
    #[arg(long, value_enum, value_delimiter = ',')]
    steps: Option<Vec<Step>>,
    input: PathBuf,
    output: PathBuf,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum LearnKind {
    Pixelwise,
    Shf,
    Neg,
    Ffx,
}

#[derive(Args, Debug)]
struct LearnArgs {
    #[arg(long, value_enum)]
    variant: LearnKind,
    #[arg(long, default_value_t = 4)]
    block: usize,
    #[arg(long)]
    key: PathBuf,
    input: PathBuf,
    output: PathBuf,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum TransformKind {
    EtcColor,
    EtcGrayscaleRgb,
    EtcGrayscaleYcbcr,
    Pixelwise,
    Shf,
    Neg,
    Ffx,
}

#[derive(Args, Debug)]
struct TransformArgs {
    #[arg(long = "transform", value_enum)]
    kind: TransformKind,
    #[arg(long)]
    key: PathBuf,
    #[arg(long, default_value_t = 16)]
    bx: usize,
    #[arg(long, default_value_t = 16)]
    by: usize,
    /// Block size for SHF, NEG and FFX.
    #[arg(long, default_value_t = 4)]
    block: usize,
    #[arg(long, value_enum, value_delimiter = ',')]
    steps: Option<Vec<Step>>,
}

#[derive(Args, Debug)]
struct OptTransformArgs {
    #[arg(long = "transform", value_enum, requires = "key")]
    kind: Option<TransformKind>,
    #[arg(long)]
    key: Option<PathBuf>,
    #[arg(long, default_value_t = 16)]
    bx: usize,
    #[arg(long, default_value_t = 16)]
    by: usize,
    #[arg(long, default_value_t = 4)]
    block: usize,
    #[arg(long, value_enum, value_delimiter = ',')]
    steps: Option<Vec<Step>>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_io() { 2 } else { 3 })
        }
    }
}
