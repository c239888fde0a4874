use std::fs;
use std::path::{Path, PathBuf};

use rawpipe::cfa::{demosaic_inpixel, mosaic};
use rawpipe::invisp::{
    load_checkpoint, rgb_to_tensor, save_checkpoint, tensor_to_rgb, InvIspModel, LogRow, ModelConfig,
    Pair, TrainConfig, Trainer,
};
use rawpipe::synth::synthetic_pairs;
use rawpipe::{load_image, save_image, AnyImage, Error, RgbImage, Tensor};
use rayon::prelude::*;

use crate::args::{ApplyArgs, Cli, Direction, Precision, TrainArgs};
use crate::commands::progress;
use crate::{CliError, CliResult};

/// Raw side of a training pair or model input: Bayer frames go through the
/// in-pixel demosaic, RGB images are used as they are.
fn load_raw(path: &Path) -> CliResult<RgbImage> {
    Ok(match load_image(path)? {
        AnyImage::Bayer(b) => demosaic_inpixel(&b),
        AnyImage::Rgb(r) => r,
    })
}

fn is_image(path: &Path) -> bool {
    matches!(path.extension().and_then(|e| e.to_str()), Some("pgm" | "ppm"))
}

fn sorted_entries(dir: &Path) -> CliResult<Vec<PathBuf>> {
    let mut entries = fs::read_dir(dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<Vec<_>, _>>()?;
    entries.retain(|p| p.is_file());
    entries.sort();
    Ok(entries)
}

/// Pairs `raw/<stem>.{pgm,ppm}` with `rgb/<stem>.ppm`.
fn load_pairs(dir: &Path) -> CliResult<Vec<Pair>> {
    let mut pairs = vec![];
    for raw_path in sorted_entries(&dir.join("raw"))?.into_iter().filter(|p| is_image(p)) {
        let stem = raw_path.file_stem().unwrap_or_default();
        let rgb_path = dir.join("rgb").join(stem).with_extension("ppm");
        let raw = rgb_to_tensor(&load_raw(&raw_path)?);
        let rgb = rgb_to_tensor(&load_image(&rgb_path)?.into_rgb()?);
        if raw.dims() != rgb.dims() {
            return Err(Error::Dimension(format!(
                "{} is {:?} but {} is {:?}",
                raw_path.display(),
                raw.dims(),
                rgb_path.display(),
                rgb.dims()
            ))
            .into());
        }
        pairs.push(Pair { raw, rgb });
    }
    if pairs.is_empty() {
        return Err(Error::Parameter(format!("no training pairs under {}", dir.display())).into());
    }
    Ok(pairs)
}

pub fn train(cli: &Cli, a: &TrainArgs) -> CliResult {
    let data = match (&a.data, a.synthetic) {
        (Some(dir), _) => load_pairs(dir)?,
        (None, Some(n)) => synthetic_pairs(n, a.size, a.size, cli.seed)?,
        (None, None) => return Err(CliError::Usage("train needs --data or --synthetic".into())),
    };
    let config = TrainConfig {
        model: ModelConfig {
            squeeze: a.squeeze,
            blocks: a.blocks,
            hidden: a.hidden,
            alpha: a.alpha,
            ..ModelConfig::default()
        },
        lr: a.lr,
        steps: a.steps,
        batch: a.batch,
        seed: cli.seed,
        lambda: a.lambda,
    };
    progress(cli, format!("training on {} pairs for {} steps", data.len(), a.steps));
    let mut trainer = Trainer::new(&data, config)?;
    let result = trainer.run_with(a.steps, |t, row| {
        let step = t.steps_done();
        if a.checkpoint_every > 0 && step % a.checkpoint_every == 0 {
            save_checkpoint(&a.output, t.model())?;
        }
        if step % 100 == 0 || step == a.steps {
            progress(cli, format!("step {step} loss {:.6e}", row.loss_total));
        }
        Ok(())
    });
    // The trainer never keeps a failed update, so its model is always the
    // last good one.
    save_checkpoint(&a.output, trainer.model())?;
    if let Some(path) = &a.log {
        LogRow::write_csv(trainer.log(), fs::File::create(path)?)?;
    }
    result?;
    Ok(())
}

fn apply_model(model: &InvIspModel, precision: Precision, direction: Direction, x: &Tensor) -> CliResult<Tensor> {
    Ok(match (precision, direction) {
        (Precision::F64, Direction::Raw2rgb) => model.forward(x)?,
        (Precision::F64, Direction::Rgb2raw) => model.inverse(x)?,
        (Precision::F32, dir) => {
            let m = model.cast::<f32>();
            let x = x.cast::<f32>();
            let y = match dir {
                Direction::Raw2rgb => m.forward(&x)?,
                Direction::Rgb2raw => m.inverse(&x)?,
            };
            y.cast()
        }
    })
}

fn convert(cli: &Cli, a: &ApplyArgs, model: &InvIspModel, input: &Path, output: &Path) -> CliResult {
    let image = match a.direction {
        Direction::Raw2rgb => load_raw(input)?,
        Direction::Rgb2raw => load_image(input)?.into_rgb()?,
    };
    let bits = a.bit_depth.or(image.bit_depth()).unwrap_or(8);
    let y = apply_model(model, cli.precision, a.direction, &rgb_to_tensor(&image))?;
    let codes = tensor_to_rgb(&y)?.to_codes(bits)?;
    let out: AnyImage = match (a.direction, a.mosaic) {
        (Direction::Rgb2raw, Some(pattern)) => mosaic(&codes, pattern)?.into(),
        _ => codes.into(),
    };
    save_image(output, &out)?;
    Ok(())
}

fn output_name(a: &ApplyArgs, input: &Path) -> PathBuf {
    let ext = match (a.direction, a.mosaic) {
        (Direction::Rgb2raw, Some(_)) => "pgm",
        _ => "ppm",
    };
    PathBuf::from(input.file_name().unwrap_or_default()).with_extension(ext)
}

pub fn apply(cli: &Cli, a: &ApplyArgs) -> CliResult {
    if a.mosaic.is_some() && a.direction == Direction::Raw2rgb {
        return Err(CliError::Usage("--mosaic only applies to rgb2raw".into()));
    }
    let model = load_checkpoint(&a.model)?;
    if let (Some(input), Some(output)) = (&a.input, &a.output) {
        return convert(cli, a, &model, input, output);
    }
    let (Some(in_dir), Some(out_dir)) = (&a.in_dir, &a.out_dir) else {
        return Err(CliError::Usage("apply needs --in/--out or --in-dir/--out-dir".into()));
    };
    fs::create_dir_all(out_dir)?;
    let entries = sorted_entries(in_dir)?;
    let results: Vec<(PathBuf, CliResult<PathBuf>)> = entries
        .par_iter()
        .map(|input| {
            let result = if is_image(input) {
                let output = out_dir.join(output_name(a, input));
                convert(cli, a, &model, input, &output).map(|_| output)
            } else {
                // Annotations and other side files pass through untouched.
                let output = out_dir.join(input.file_name().unwrap_or_default());
                fs::copy(input, &output).map(|_| output).map_err(CliError::from)
            };
            (input.clone(), result)
        })
        .collect();
    let mut first_err = None;
    for (input, result) in results {
        match result {
            Ok(output) => progress(cli, format!("{} -> {}", input.display(), output.display())),
            Err(e) => {
                eprintln!("{}: {e}", input.display());
                first_err.get_or_insert(e);
            }
        }
    }
    first_err.map_or(Ok(()), Err)
}
