use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rawpipe::CfaPattern;

#[derive(Debug, Parser)]
#[command(name = "rawpipe", version, about = "Raw-domain sensor pipeline tools")]
pub struct Cli {
    /// Seed for every random draw (noise, initialization, batching).
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Floating-point precision for model application and fused convolution.
    #[arg(long, global = true, value_enum, default_value_t = Precision::F64)]
    pub precision: Precision,

    /// Suppress progress output on stderr.
    #[arg(long, global = true)]
    pub quiet: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Precision {
    F32,
    F64,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample an RGB image through a Bayer filter.
    Mosaic(MosaicArgs),
    /// Reconstruct RGB from a Bayer frame.
    Demosaic(DemosaicArgs),
    /// Read a frame out of the simulated dual select-line pixel array.
    Pixelsim(PixelsimArgs),
    /// Train or apply the invertible ISP.
    Invisp {
        #[command(subcommand)]
        command: InvispCommand,
    },
    /// Demosaic fused into a strided convolution on the Bayer grid.
    Fuse(FuseArgs),
    /// Intensity histograms and distribution-shift metrics.
    Stats(StatsArgs),
    /// Bits per frame across the pipeline stages.
    Bandwidth(BandwidthArgs),
}

fn parse_pattern(s: &str) -> Result<CfaPattern, String> {
    s.parse::<CfaPattern>().map_err(|e| e.to_string())
}

#[derive(Debug, Args)]
pub struct MosaicArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long = "out")]
    pub output: PathBuf,
    #[arg(long, default_value = "rggb", value_parser = parse_pattern)]
    pub pattern: CfaPattern,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DemosaicMethod {
    Bilinear,
    Inpixel,
}

#[derive(Debug, Args)]
pub struct DemosaicArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long = "out")]
    pub output: PathBuf,
    #[arg(long, value_enum, default_value_t = DemosaicMethod::Inpixel)]
    pub method: DemosaicMethod,
}

#[derive(Debug, Args)]
pub struct PixelsimArgs {
    /// Bayer PGM, or an RGB PPM that is mosaiced with --pattern first.
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long = "out")]
    pub output: PathBuf,
    #[arg(long, default_value = "rggb", value_parser = parse_pattern)]
    pub pattern: CfaPattern,
    /// ADC resolution in bits.
    #[arg(long = "bitdepth", default_value_t = 12)]
    pub bit_depth: u8,
    /// Read noise standard deviation in full-well units.
    #[arg(long, default_value_t = 0.0)]
    pub noise_sigma: f64,
    /// Standard deviation of the per-pixel green gain error.
    #[arg(long, default_value_t = 0.0)]
    pub mismatch_sigma: f64,
    /// Write the cycle-by-cycle read-out schedule to this file.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum InvispCommand {
    Train(TrainArgs),
    Apply(ApplyArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Directory with raw/ and rgb/ subdirectories of same-named images.
    #[arg(long, conflicts_with = "synthetic", required_unless_present = "synthetic")]
    pub data: Option<PathBuf>,
    /// Train on this many generated pairs instead of --data.
    #[arg(long)]
    pub synthetic: Option<usize>,
    /// Side length of generated pairs.
    #[arg(long, default_value_t = 32)]
    pub size: usize,
    #[arg(long, default_value_t = 5000)]
    pub steps: usize,
    #[arg(long, default_value_t = 4)]
    pub batch: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 4)]
    pub blocks: usize,
    #[arg(long, default_value_t = 32)]
    pub hidden: usize,
    #[arg(long, default_value_t = 2)]
    pub squeeze: usize,
    #[arg(long, default_value_t = 2.0)]
    pub alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    #[arg(long = "out")]
    pub output: PathBuf,
    /// Loss curve CSV.
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// Rewrite the checkpoint every N steps (0 = only at the end).
    #[arg(long, default_value_t = 0)]
    pub checkpoint_every: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Direction {
    Rgb2raw,
    Raw2rgb,
}

#[derive(Debug, Args)]
pub struct ApplyArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, value_enum)]
    pub direction: Direction,
    #[arg(long = "in", conflicts_with = "in_dir", required_unless_present = "in_dir")]
    pub input: Option<PathBuf>,
    #[arg(long = "out", requires = "input")]
    pub output: Option<PathBuf>,
    #[arg(long, requires = "out_dir")]
    pub in_dir: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Output bit depth (default: that of the input).
    #[arg(long = "bitdepth")]
    pub bit_depth: Option<u8>,
    /// With rgb2raw, write a Bayer PGM sampled with this pattern.
    #[arg(long, value_parser = parse_pattern)]
    pub mosaic: Option<CfaPattern>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FuseMode {
    Real,
    Quantized,
}

#[derive(Debug, Args)]
pub struct FuseArgs {
    /// Bayer PGM.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Manifest with out_channels, kernel, stride, weights and bias lines.
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long, value_enum, default_value_t = FuseMode::Real)]
    pub mode: FuseMode,
    /// Output tensor (FTEN).
    #[arg(long = "out")]
    pub output: PathBuf,
    /// Multiplicative error on the green taps, seeded by --seed.
    #[arg(long, default_value_t = 0.0)]
    pub mismatch_sigma: f64,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long = "in", required_unless_present = "compare")]
    pub input: Option<PathBuf>,
    #[arg(long, default_value_t = 256)]
    pub hist_bins: usize,
    /// Compare against a second image; both are scaled to [0, 1].
    #[arg(long, num_args = 2, value_names = ["A", "B"], conflicts_with = "input")]
    pub compare: Option<Vec<PathBuf>>,
    /// Write the histogram as gnuplot two-column data.
    #[arg(long)]
    pub gnuplot: Option<PathBuf>,
    /// Write the histogram as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Text,
    Csv,
}

#[derive(Debug, Args)]
pub struct BandwidthArgs {
    #[arg(long)]
    pub width: usize,
    #[arg(long)]
    pub height: usize,
    #[arg(long = "bitdepth", default_value_t = 12)]
    pub bit_depth: u8,
    #[arg(long, default_value_t = 8)]
    pub output_bits: u8,
    /// Add a fused convolution stage with this many output channels.
    #[arg(long)]
    pub out_channels: Option<u64>,
    #[arg(long, default_value_t = 2)]
    pub stride: u64,
    /// Energy per transferred bit for the linear energy column.
    #[arg(long)]
    pub e_bit: Option<f64>,
    #[arg(long, value_enum, default_value_t = ReportFormat::Text)]
    pub format: ReportFormat,
}
