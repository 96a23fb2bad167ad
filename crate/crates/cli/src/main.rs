use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;

/// Texel-space relighting toolkit.
#[derive(Debug, Parser)]
#[command(name = "relit", version)]
pub struct Cli {
    /// Overrides the seed of the scene spec or experiment.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Worker threads; 1 gives bit-reproducible output.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Scene spec JSON for scene commands, experiment JSON for `train`.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a dataset directory for the scene.
    Gen {
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the 24-channel feature stack (and target texture) of a frame.
    Features {
        #[command(flatten)]
        frame: FrameArgs,
        #[arg(long)]
        out: PathBuf,
        /// Also write the baked target texture here.
        #[arg(long)]
        target: Option<PathBuf>,
    },
    /// Write the pre-integrated diffuse shading UV map of a frame.
    Shade {
        #[command(flatten)]
        frame: FrameArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Ray-trace the reference image of a frame from one camera.
    Oracle {
        #[command(flatten)]
        frame: FrameArgs,
        /// Index into input cameras followed by test cameras.
        #[arg(long, default_value_t = 0)]
        camera: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the relighting network on a dataset.
    Train {
        #[arg(long)]
        dataset: PathBuf,
        /// Checkpoint directory.
        #[arg(long)]
        out: PathBuf,
        /// Continue from the checkpoint in `--out`.
        #[arg(long)]
        resume: bool,
    },
    /// Predict Gaussians for a frame and splat them into a camera.
    Relight {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        frame: usize,
        /// Environment id; defaults to the frame's own.
        #[arg(long)]
        env: Option<usize>,
        /// Index into input cameras followed by test cameras; defaults to the target camera.
        #[arg(long)]
        camera: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        /// Also write the ray-traced reference here.
        #[arg(long)]
        reference: Option<PathBuf>,
    },
    /// PSNR and SSIM between two PFM images.
    Metrics {
        a: PathBuf,
        b: PathBuf,
        /// Values are clamped to [0, peak]; also the PSNR peak and SSIM range.
        #[arg(long, default_value_t = 1.0)]
        peak: f64,
    },
    /// Compare a direct render against the weighted sum of one-LED renders.
    OlatCheck {
        /// Overrides the rig size.
        #[arg(long)]
        leds: Option<usize>,
        #[arg(long, default_value_t = 0)]
        frame: usize,
        #[arg(long, default_value_t = 0)]
        env: usize,
        #[arg(long, default_value_t = 0)]
        camera: usize,
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
    },
}

#[derive(Debug, Args)]
pub struct FrameArgs {
    #[arg(long, default_value_t = 1)]
    pub frame: usize,
    /// Environment id; defaults to the frame's scheduled lighting.
    #[arg(long)]
    pub env: Option<usize>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
