use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use memseconv::circuit::WeightMode;
use memseconv::pipeline::Model;
use memseconv::power::MeanBasis;

mod commands;
mod config;
mod error;

use config::Format;

/// Behavioral simulator for memristive selective-convolution denoising.
#[derive(Debug, Parser)]
#[command(name = "memseconv", version)]
pub struct Cli {
    /// TOML config file; flags override its values.
    #[arg(long, global = true, env = "MEMSECONV_CONFIG")]
    pub config: Option<PathBuf>,
    /// Report format.
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Output directory (tabular commands print to stdout without it).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Corrupt an image with salt-and-pepper noise.
    AddNoise(AddNoiseArgs),
    /// Corrupt, restore and score one image.
    Denoise(DenoiseArgs),
    /// Mean PSNR/SSIM per model and density over an image set.
    Sweep(SweepArgs),
    /// Paired vs single-device weight encoding at one density.
    #[command(name = "ablation-fig7")]
    Ablation(AblationArgs),
    /// Per-input and per-image power tables, programming power.
    Power(PowerArgs),
    /// Every intermediate of one stage on a small tensor.
    Trace(TraceArgs),
    /// Ternarize a full-precision weight file.
    Quantize(QuantizeArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct NoiseArgs {
    #[arg(long)]
    pub density: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub salt_fraction: Option<f64>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct InputArgs {
    /// 8-bit PGM (P2 or P5).
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Crop to WIDTHxHEIGHT (centered unless --crop-seed is given).
    #[arg(long, value_parser = parse_dims)]
    pub crop: Option<(usize, usize)>,
    #[arg(long, requires = "crop")]
    pub crop_seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct ModelArgs {
    /// FPSC, TSC, MSC or MSCE.
    #[arg(long)]
    pub model: Option<Model>,
    /// Fixture name (ones, cross, signed, fp, fp-signed) or weight-file path.
    #[arg(long)]
    pub kernel: Option<String>,
    /// Stage list such as `3:cross,5:ones:always-one`.
    #[arg(long)]
    pub stages: Option<String>,
    /// Ternarize full-precision kernels for ternary models.
    #[arg(long)]
    pub quantize: bool,
    #[command(flatten)]
    pub circuit: CircuitArgs,
}

#[derive(Debug, Clone, Default, Args)]
pub struct CircuitArgs {
    #[arg(long, value_parser = parse_weight_mode)]
    pub weight_mode: Option<WeightMode>,
    #[arg(long)]
    pub rail: Option<f64>,
    #[arg(long)]
    pub transimpedance_gain: Option<f64>,
    #[arg(long)]
    pub divider_floor: Option<f64>,
    #[arg(long)]
    pub conductance_sigma: Option<f64>,
    #[arg(long)]
    pub conductance_seed: Option<u64>,
    #[arg(long)]
    pub r_on: Option<f64>,
    #[arg(long)]
    pub r_off: Option<f64>,
    #[arg(long)]
    pub v_th: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
}

#[derive(Debug, Args)]
pub struct AddNoiseArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub noise: NoiseArgs,
}

#[derive(Debug, Args)]
pub struct DenoiseArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub noise: NoiseArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// provenance.json written by add-noise; supplies input, crop and noise.
    #[arg(long)]
    pub provenance: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Comma-separated densities.
    #[arg(long, value_delimiter = ',')]
    pub densities: Option<Vec<f64>>,
    /// Comma-separated models.
    #[arg(long, value_delimiter = ',')]
    pub models: Option<Vec<Model>>,
    /// Number of generated images (ignored when --image is given).
    #[arg(long)]
    pub images: Option<usize>,
    #[arg(long)]
    pub image_size: Option<usize>,
    #[arg(long)]
    pub image_seed: Option<u64>,
    /// PGM files to use instead of generated images.
    #[arg(long = "image")]
    pub image_files: Vec<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Args)]
pub struct AblationArgs {
    #[arg(long)]
    pub density: Option<f64>,
    #[arg(long)]
    pub images: Option<usize>,
    #[arg(long)]
    pub image_size: Option<usize>,
    #[arg(long)]
    pub image_seed: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Args)]
pub struct PowerArgs {
    /// Ternary kernel whose weight mix sets the per-input mean.
    #[arg(long)]
    pub kernel: Option<String>,
    /// Per-class means from the model cells or the printed Mean column.
    #[arg(long, value_parser = parse_basis)]
    pub basis: Option<MeanBasis>,
    #[arg(long)]
    pub n_pixels: Option<usize>,
    /// Programming pulse amplitude, volts.
    #[arg(long)]
    pub program_voltage: Option<f64>,
    /// Euler step for the programming cross-check, seconds.
    #[arg(long)]
    pub dt: Option<f64>,
    #[command(flatten)]
    pub circuit: CircuitArgs,
}

#[derive(Debug, Args)]
pub struct TraceArgs {
    /// JSON tensor `{width, height, data}` with normalized values.
    #[arg(long)]
    pub input: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Args)]
pub struct QuantizeArgs {
    /// Full-precision weight file, or a fixture name.
    #[arg(long)]
    pub weights: String,
}

fn parse_dims(s: &str) -> Result<(usize, usize), String> {
    let (w, h) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected WIDTHxHEIGHT, got '{s}'"))?;
    let w = w.parse().map_err(|_| format!("bad width '{w}'"))?;
    let h = h.parse().map_err(|_| format!("bad height '{h}'"))?;
    Ok((w, h))
}

fn parse_weight_mode(s: &str) -> Result<WeightMode, String> {
    match s {
        "differential" => Ok(WeightMode::Differential),
        "single" => Ok(WeightMode::Single),
        _ => Err(format!("expected 'differential' or 'single', got '{s}'")),
    }
}

fn parse_basis(s: &str) -> Result<MeanBasis, String> {
    match s {
        "model" => Ok(MeanBasis::Model),
        "published" => Ok(MeanBasis::Published),
        _ => Err(format!("expected 'model' or 'published', got '{s}'")),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("memseconv: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
