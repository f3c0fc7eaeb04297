use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gmc_core::interp::DEFAULT_ALPHA;

#[derive(Parser, Debug)]
#[command(name = "gmc", version, about = "Learned image codec with a distortion/perception dial")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Settings shared by every command.
#[derive(Args, Debug, Clone)]
pub struct Common {
    /// key = value file with model and training settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override one setting, e.g. `--set mixtures=2`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Seed for initialization and sampling.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Network,
    Image,
}

impl From<Mode> for gmc_core::InterpMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Network => gmc_core::InterpMode::Network,
            Mode::Image => gmc_core::InterpMode::Image,
        }
    }
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run one training stage and write a checkpoint, weights and a loss log.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
        stage: u8,
        /// Stage-1 checkpoint to start stage 2 from.
        #[arg(long)]
        from: Option<PathBuf>,
        /// Continue an interrupted run of the same stage.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Also write `stageN_iterK.gmck` every K iterations.
        #[arg(long)]
        checkpoint_every: Option<u64>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Compress a PPM image into a bitstream.
    Compress {
        #[command(flatten)]
        common: Common,
        input: PathBuf,
        /// Weight file holding the encoder and context model.
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Write the coded integer latents as text.
        #[arg(long)]
        dump_latents: Option<PathBuf>,
    },
    /// Decode a bitstream, optionally blending the two decoders.
    Decompress {
        #[command(flatten)]
        common: Common,
        input: PathBuf,
        /// Weight file holding the context model and the first decoder.
        #[arg(long)]
        weights: PathBuf,
        /// Weight file holding the adversarially tuned decoder.
        #[arg(long)]
        weights_g2: Option<PathBuf>,
        /// 0 selects the first decoder, 1 the second.
        #[arg(long, default_value_t = DEFAULT_ALPHA)]
        alpha: f64,
        #[arg(long, value_enum, default_value_t = Mode::Network)]
        mode: Mode,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        dump_latents: Option<PathBuf>,
    },
    /// Decode one bitstream across a grid of α and score each result.
    Sweep {
        #[command(flatten)]
        common: Common,
        input: PathBuf,
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        weights_g2: PathBuf,
        /// The uncompressed image, for PSNR.
        #[arg(long)]
        original: PathBuf,
        /// Comma-separated α values.
        #[arg(long, value_delimiter = ',', default_values_t = gmc_core::interp::DEFAULT_ALPHAS.to_vec())]
        alphas: Vec<f64>,
        #[arg(long, value_enum, default_value_t = Mode::Network)]
        mode: Mode,
        /// Output directory for the report and images.
        #[arg(long)]
        out: PathBuf,
    },
    /// PSNR between two images and, given a bitstream, its bit rate.
    Eval {
        #[command(flatten)]
        common: Common,
        original: PathBuf,
        reconstruction: PathBuf,
        #[arg(long)]
        bitstream: Option<PathBuf>,
        /// Context weights; with a bitstream, adds the model's rate estimate.
        #[arg(long)]
        weights: Option<PathBuf>,
    },
}

impl Command {
    pub fn common(&self) -> &Common {
        match self {
            Command::Train { common, .. }
            | Command::Compress { common, .. }
            | Command::Decompress { common, .. }
            | Command::Sweep { common, .. }
            | Command::Eval { common, .. } => common,
        }
    }
}
