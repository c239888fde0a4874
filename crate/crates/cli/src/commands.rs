use std::fs;
use std::path::{Path, PathBuf};

use rawpipe::analysis::{bandwidth_report, histogram, histogram_unit, shift_metrics, ConvSummary};
use rawpipe::cfa::{demosaic_bilinear, demosaic_inpixel, mosaic};
use rawpipe::p2m::{
    expand_weights, expand_weights_with_mismatch, fused_conv_quantized, fused_conv_real, BayerFrame,
    ConvSpec,
};
use rawpipe::pixelsim::{build_schedule, simulate_readout, PixelArrayConfig};
use rawpipe::{load_image, save_image, AnyImage, BayerImage, Error, Tensor};

use crate::args::*;
use crate::{CliError, CliResult};

pub fn run(cli: &Cli) -> CliResult {
    configure_threads()?;
    match &cli.command {
        Command::Mosaic(a) => run_mosaic(a),
        Command::Demosaic(a) => run_demosaic(a),
        Command::Pixelsim(a) => run_pixelsim(cli, a),
        Command::Invisp { command } => match command {
            InvispCommand::Train(a) => crate::invisp::train(cli, a),
            InvispCommand::Apply(a) => crate::invisp::apply(cli, a),
        },
        Command::Fuse(a) => run_fuse(cli, a),
        Command::Stats(a) => run_stats(a),
        Command::Bandwidth(a) => run_bandwidth(a),
    }
}

/// RAWPIPE_THREADS caps the worker pool; 0 or unset leaves it automatic.
fn configure_threads() -> CliResult {
    let Ok(v) = std::env::var("RAWPIPE_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .map_err(|_| CliError::Usage(format!("RAWPIPE_THREADS must be a count, got {v:?}")))?;
    // A pool that is already initialised keeps its size.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

pub fn progress(cli: &Cli, msg: impl AsRef<str>) {
    if !cli.quiet {
        eprintln!("{}", msg.as_ref());
    }
}

fn run_mosaic(a: &MosaicArgs) -> CliResult {
    let rgb = load_image(&a.input)?.into_rgb()?;
    let bayer = mosaic(&rgb, a.pattern)?;
    save_image(&a.output, &bayer.into())?;
    Ok(())
}

fn run_demosaic(a: &DemosaicArgs) -> CliResult {
    let bayer = load_image(&a.input)?.into_bayer()?;
    let rgb = match a.method {
        DemosaicMethod::Bilinear => demosaic_bilinear(&bayer),
        DemosaicMethod::Inpixel => demosaic_inpixel(&bayer),
    };
    save_image(&a.output, &rgb.into())?;
    Ok(())
}

/// Bayer codes from a PGM, or from a PPM mosaiced with `pattern`.
fn load_bayer(path: &Path, pattern: rawpipe::CfaPattern) -> CliResult<BayerImage> {
    Ok(match load_image(path)? {
        AnyImage::Bayer(b) => b,
        AnyImage::Rgb(rgb) => mosaic(&rgb, pattern)?,
    })
}

fn run_pixelsim(cli: &Cli, a: &PixelsimArgs) -> CliResult {
    let bayer = load_bayer(&a.input, a.pattern)?;
    let max = rawpipe::image::max_code(bayer.bit_depth()) as f64;
    let voltages: Vec<f64> = bayer.data().iter().map(|&c| c as f64 / max).collect();
    let config = PixelArrayConfig {
        bit_depth: a.bit_depth,
        pattern: bayer.pattern(),
        read_noise_sigma: a.noise_sigma,
        green_gain_mismatch_sigma: a.mismatch_sigma,
        seed: cli.seed,
        ..PixelArrayConfig::new(bayer.height(), bayer.width())
    };
    if let Some(path) = &a.trace {
        fs::write(path, build_schedule(&config)?.to_string())?;
    }
    let rgb = simulate_readout(&voltages, &config)?;
    save_image(&a.output, &rgb.into())?;
    Ok(())
}

/// Parses a `key=value` manifest; tensor paths are relative to the manifest.
pub fn load_spec(path: &Path) -> CliResult<ConvSpec> {
    let text = fs::read_to_string(path)?;
    let dir = path.parent().unwrap_or(Path::new("."));
    let (mut out, mut kernel, mut stride) = (None, None, None);
    let (mut weights, mut bias): (Option<PathBuf>, Option<PathBuf>) = (None, None);
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = || Error::Parse { offset: i, message: format!("bad manifest line {:?}", line) };
        let (key, value) = line.split_once('=').ok_or_else(bad)?;
        let (key, value) = (key.trim(), value.trim());
        let int = || value.parse::<usize>().map_err(|_| bad());
        match key {
            "out_channels" => out = Some(int()?),
            "kernel" => kernel = Some(int()?),
            "stride" => stride = Some(int()?),
            "weights" => weights = Some(dir.join(value)),
            "bias" => bias = Some(dir.join(value)),
            _ => return Err(bad().into()),
        }
    }
    let missing = |k: &str| Error::Parse { offset: text.len(), message: format!("manifest lacks {k}") };
    let out = out.ok_or_else(|| missing("out_channels"))?;
    let kernel = kernel.ok_or_else(|| missing("kernel"))?;
    let stride = stride.ok_or_else(|| missing("stride"))?;
    let weights = read_tensor(&weights.ok_or_else(|| missing("weights"))?)?;
    let bias = match bias {
        Some(p) => read_tensor(&p)?,
        None => Tensor::zeros(vec![out]),
    };
    Ok(ConvSpec::new(out, kernel, stride, weights, bias)?)
}

fn read_tensor(path: &Path) -> CliResult<Tensor<f64>> {
    Ok(Tensor::read_ften(fs::File::open(path)?)?)
}

fn run_fuse(cli: &Cli, a: &FuseArgs) -> CliResult {
    let bayer = load_image(&a.input)?.into_bayer()?;
    let spec = load_spec(&a.spec)?;
    let fused = if a.mismatch_sigma == 0.0 {
        expand_weights(&spec, bayer.pattern())
    } else {
        expand_weights_with_mismatch(&spec, bayer.pattern(), a.mismatch_sigma, cli.seed)
    };
    let out = match a.mode {
        FuseMode::Real => fused_conv_real(&BayerFrame::from_codes(&bayer), &fused)?,
        FuseMode::Quantized => fused_conv_quantized(&bayer, &fused)?,
    };
    let bytes = match cli.precision {
        Precision::F64 => out.to_ften(),
        Precision::F32 => out.cast::<f32>().to_ften(),
    };
    fs::write(&a.output, bytes)?;
    Ok(())
}

fn image_ref(img: &AnyImage) -> rawpipe::analysis::ImageRef<'_> {
    match img {
        AnyImage::Bayer(b) => b.into(),
        AnyImage::Rgb(r) => r.into(),
    }
}

fn run_stats(a: &StatsArgs) -> CliResult {
    let report = match (&a.compare, &a.input) {
        (Some(pair), _) => {
            let (x, y) = (load_image(&pair[0])?, load_image(&pair[1])?);
            let hx = histogram_unit(image_ref(&x), a.hist_bins)?;
            let hy = histogram_unit(image_ref(&y), a.hist_bins)?;
            println!("{}", pair[0].display());
            print!("{}", hx.summary());
            println!("{}", pair[1].display());
            print!("{}", hy.summary());
            print!("{}", shift_metrics(&hx, &hy)?.to_text());
            hx
        }
        (None, Some(path)) => {
            let h = histogram(image_ref(&load_image(path)?), a.hist_bins)?;
            print!("{}", h.summary());
            h
        }
        (None, None) => return Err(CliError::Usage("stats needs --in or --compare".into())),
    };
    if let Some(p) = &a.gnuplot {
        fs::write(p, report.to_gnuplot())?;
    }
    if let Some(p) = &a.csv {
        fs::write(p, report.to_csv())?;
    }
    Ok(())
}

fn run_bandwidth(a: &BandwidthArgs) -> CliResult {
    let conv = a.out_channels.map(|out_channels| ConvSummary { out_channels, stride: a.stride });
    let report = bandwidth_report(a.width, a.height, a.bit_depth, conv, a.output_bits)?;
    match a.format {
        ReportFormat::Text => print!("{}", report.to_text(a.e_bit)),
        ReportFormat::Csv => print!("{}", report.to_csv(a.e_bit)),
    }
    Ok(())
}
