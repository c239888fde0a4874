use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use rawpipe::cfa::{demosaic_inpixel, mosaic};
use rawpipe::invisp::{
    load_checkpoint, save_checkpoint, CouplingBlock, InvIspModel, MixMatrix, ModelConfig, Provenance,
};
use rawpipe::pixelsim::{simulate_readout, PixelArrayConfig};
use rawpipe::{load_image, save_image, CfaPattern, Prng, RgbImage, Tensor};
use tempfile::TempDir;

fn rawpipe(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rawpipe"))
        .args(args)
        .env("RAWPIPE_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = rawpipe(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn random_rgb(seed: u64, w: usize, h: usize, bits: u8) -> RgbImage {
    let mut rng = Prng::new(seed);
    let max = 1u64 << bits;
    let planes = std::array::from_fn(|_| (0..w * h).map(|_| rng.next_below(max) as u16).collect());
    RgbImage::from_codes(w, h, bits, planes).unwrap()
}

#[test]
fn mosaic_writes_bayer_file() {
    let dir = TempDir::new().unwrap();
    let (a, b) = (dir.path().join("a.ppm"), dir.path().join("a.pgm"));
    let rgb = random_rgb(1, 8, 6, 8);
    save_image(&a, &rgb.clone().into()).unwrap();
    ok(&["mosaic", "--in", p(&a), "--out", p(&b), "--pattern", "gbrg"]);
    let bayer = load_image(&b).unwrap().into_bayer().unwrap();
    assert_eq!(bayer, mosaic(&rgb, CfaPattern::Gbrg).unwrap());
}

#[test]
fn mosaic_then_inpixel_equals_ideal_pixelsim() {
    let dir = TempDir::new().unwrap();
    let path = |n: &str| dir.path().join(n);
    let rgb = random_rgb(2, 16, 12, 8);
    save_image(path("in.ppm"), &rgb.into()).unwrap();
    ok(&["mosaic", "--in", p(&path("in.ppm")), "--out", p(&path("m.pgm"))]);
    ok(&["demosaic", "--in", p(&path("m.pgm")), "--out", p(&path("d.ppm")), "--method", "inpixel"]);
    ok(&[
        "pixelsim", "--in", p(&path("m.pgm")), "--out", p(&path("s.ppm")),
        "--bitdepth", "8", "--trace", p(&path("trace.txt")),
    ]);
    assert_eq!(fs::read(path("d.ppm")).unwrap(), fs::read(path("s.ppm")).unwrap());
    let trace = fs::read_to_string(path("trace.txt")).unwrap();
    assert_eq!(trace.lines().count(), 12);
    assert!(trace.starts_with("cycle 0: ROWSEL 0,1 SWITCH=open"));
}

#[test]
fn pixelsim_noise_is_seeded() {
    let dir = TempDir::new().unwrap();
    let path = |n: &str| dir.path().join(n);
    save_image(path("in.ppm"), &random_rgb(3, 8, 8, 8).into()).unwrap();
    let run = |seed: &str, out: &str| {
        ok(&[
            "pixelsim", "--in", p(&path("in.ppm")), "--out", p(&path(out)),
            "--noise-sigma", "0.01", "--mismatch-sigma", "0.05", "--seed", seed,
        ])
    };
    run("5", "a.ppm");
    run("5", "b.ppm");
    run("6", "c.ppm");
    assert_eq!(fs::read(path("a.ppm")).unwrap(), fs::read(path("b.ppm")).unwrap());
    assert_ne!(fs::read(path("a.ppm")).unwrap(), fs::read(path("c.ppm")).unwrap());
}

#[test]
fn bilinear_demosaic_keeps_resolution() {
    let dir = TempDir::new().unwrap();
    let path = |n: &str| dir.path().join(n);
    save_image(path("in.ppm"), &random_rgb(4, 8, 8, 16).into()).unwrap();
    ok(&["mosaic", "--in", p(&path("in.ppm")), "--out", p(&path("m.pgm"))]);
    ok(&["demosaic", "--in", p(&path("m.pgm")), "--out", p(&path("d.ppm")), "--method", "bilinear"]);
    let d = load_image(path("d.ppm")).unwrap().into_rgb().unwrap();
    assert_eq!((d.width(), d.height(), d.bit_depth()), (8, 8, Some(16)));
}

#[test]
fn bandwidth_report_for_vga() {
    let out = ok(&["bandwidth", "--width", "640", "--height", "480", "--bitdepth", "12"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("307200"), "{text}");
    assert!(text.contains("230400"));
    let reduction = text.lines().find(|l| l.starts_with("element reduction")).unwrap();
    assert!(reduction.contains("1/4"), "{reduction}");

    let out = ok(&[
        "bandwidth", "--width", "640", "--height", "480", "--out-channels", "8", "--format", "csv",
    ]);
    let csv = String::from_utf8(out.stdout).unwrap();
    assert!(csv.contains("fused conv,153600,8,1228800"), "{csv}");
    assert!(csv.contains("spatial ratio,4,4"));
    assert!(csv.contains("channel ratio,8/3,"));
}

#[test]
fn train_zero_steps_is_initialization() {
    let dir = TempDir::new().unwrap();
    let path = |n: &str| dir.path().join(n);
    for sub in ["raw", "rgb"] {
        fs::create_dir(path(sub)).unwrap();
    }
    for i in 0..2 {
        save_image(path(&format!("raw/{i}.ppm")), &random_rgb(10 + i, 8, 8, 8).into()).unwrap();
        save_image(path(&format!("rgb/{i}.ppm")), &random_rgb(20 + i, 8, 8, 8).into()).unwrap();
    }
    let data = path("");
    let m = path("m.iisp");
    ok(&["invisp", "train", "--data", p(&data), "--steps", "0", "--out", p(&m), "--hidden", "4", "--seed", "9"]);
    let model = load_checkpoint(&m).unwrap();
    let config = ModelConfig { hidden: 4, ..ModelConfig::default() };
    let init = InvIspModel::new(config, 9).unwrap();
    assert_eq!(model.flatten_params(), init.flatten_params());
}

#[test]
fn training_is_byte_reproducible() {
    let dir = TempDir::new().unwrap();
    let path = |n: &str| dir.path().join(n);
    let run = |tag: &str| {
        ok(&[
            "invisp", "train", "--synthetic", "4", "--size", "8", "--steps", "5", "--batch", "2",
            "--blocks", "2", "--hidden", "4", "--seed", "3", "--quiet",
            "--out", p(&path(&format!("{tag}.iisp"))), "--log", p(&path(&format!("{tag}.csv"))),
        ])
    };
    run("a");
    run("b");
    assert_eq!(fs::read(path("a.iisp")).unwrap(), fs::read(path("b.iisp")).unwrap());
    let log = fs::read_to_string(path("a.csv")).unwrap();
    assert_eq!(log, fs::read_to_string(path("b.csv")).unwrap());
    assert!(log.starts_with("step,loss_fwd,loss_inv,loss_total\n"));
    assert_eq!(log.lines().count(), 6);
}

/// Identity mixing and weak couplings keep mid-range inputs inside [0, 1],
/// so nothing is clamped between the two directions.
fn near_identity_model() -> InvIspModel {
    let config = ModelConfig { blocks: 2, hidden: 4, ..ModelConfig::default() };
    let (d, split) = (config.channels(), config.split());
    let mut rng = Prng::new(7);
    let couplings = (0..2)
        .map(|_| CouplingBlock::random(d, split, 4, config.alpha, 0.01, &mut rng).unwrap())
        .collect();
    let provenance = Provenance { seed: 7, step: 0, lambda: 1.0 };
    InvIspModel::from_parts(config, vec![MixMatrix::identity(d); 2], couplings, provenance).unwrap()
}

fn mid_range_rgb(seed: u64, w: usize, h: usize) -> RgbImage {
    let mut rng = Prng::new(seed);
    let planes = std::array::from_fn(|_| (0..w * h).map(|_| 64 + rng.next_below(128) as u16).collect());
    RgbImage::from_codes(w, h, 8, planes).unwrap()
}

#[test]
fn apply_batch_round_trip_and_copies_side_files() {
    let dir = TempDir::new().unwrap();
    let path = |n: &str| dir.path().join(n);
    let m = path("m.iisp");
    save_checkpoint(&m, &near_identity_model()).unwrap();
    fs::create_dir(path("in")).unwrap();
    for i in 0..3 {
        save_image(path(&format!("in/{i}.ppm")), &mid_range_rgb(30 + i, 8, 8).into()).unwrap();
    }
    fs::write(path("in/labels.json"), b"{\"boxes\": []}").unwrap();
    let common = ["invisp", "apply", "--model", p(&m)];
    let batch = |dir_in: &str, dir_out: &str, extra: &[&str]| {
        let (i, o) = (path(dir_in), path(dir_out));
        let mut args = common.to_vec();
        args.extend(["--in-dir", p(&i), "--out-dir", p(&o)]);
        args.extend(extra);
        ok(&args)
    };
    batch("in", "raw", &["--direction", "rgb2raw", "--bitdepth", "16"]);
    batch("in", "bayer", &["--direction", "rgb2raw", "--mosaic", "rggb", "--quiet"]);
    batch("raw", "back", &["--direction", "raw2rgb", "--bitdepth", "8"]);
    assert_eq!(fs::read(path("back/labels.json")).unwrap(), b"{\"boxes\": []}");
    let bayer = load_image(path("bayer/0.pgm")).unwrap().into_bayer().unwrap();
    assert_eq!((bayer.width(), bayer.pattern()), (8, CfaPattern::Rggb));
    for i in 0..3 {
        let a = load_image(path(&format!("in/{i}.ppm"))).unwrap().into_rgb().unwrap();
        let b = load_image(path(&format!("back/{i}.ppm"))).unwrap().into_rgb().unwrap();
        let (a, b) = (a.code_planes().unwrap(), b.code_planes().unwrap());
        let worst = a.iter().flatten().zip(b.iter().flatten()).map(|(x, y)| x.abs_diff(*y)).max().unwrap();
        // 16-bit intermediate: at most one code of rounding drift
        assert!(worst <= 1, "{worst}");
    }
}

#[test]
fn apply_single_file_in_both_precisions() {
    let dir = TempDir::new().unwrap();
    let path = |n: &str| dir.path().join(n);
    let m = path("m.iisp");
    ok(&["invisp", "train", "--synthetic", "2", "--size", "8", "--steps", "1", "--batch", "1",
        "--hidden", "4", "--out", p(&m), "--quiet"]);
    save_image(path("x.ppm"), &random_rgb(40, 8, 8, 8).into()).unwrap();
    for (precision, out) in [("f64", "a.ppm"), ("f32", "b.ppm")] {
        ok(&["invisp", "apply", "--model", p(&m), "--direction", "raw2rgb", "--precision", precision,
            "--in", p(&path("x.ppm")), "--out", p(&path(out))]);
    }
    let a = load_image(path("a.ppm")).unwrap().into_rgb().unwrap();
    let b = load_image(path("b.ppm")).unwrap().into_rgb().unwrap();
    let worst = a.code_planes().unwrap().iter().flatten()
        .zip(b.code_planes().unwrap().iter().flatten())
        .map(|(x, y)| x.abs_diff(*y)).max().unwrap();
    assert!(worst <= 1);
}

fn write_spec(dir: &Path, out: usize, k: usize, stride: usize, seed: u64) {
    let mut rng = Prng::new(seed);
    let w: Vec<f64> = (0..out * 3 * k * k).map(|_| rng.next_gaussian(1.0)).collect();
    let b: Vec<f64> = (0..out).map(|_| rng.next_gaussian(1.0)).collect();
    fs::write(dir.join("w.ften"), Tensor::new(vec![out, 3, k, k], w).unwrap().to_ften()).unwrap();
    fs::write(dir.join("b.ften"), Tensor::new(vec![out], b).unwrap().to_ften()).unwrap();
    fs::write(
        dir.join("conv.spec"),
        format!("# first layer\nout_channels={out}\nkernel={k}\nstride={stride}\nweights=w.ften\nbias=b.ften\n"),
    )
    .unwrap();
}

#[test]
fn fuse_matches_demosaic_then_convolve() {
    let dir = TempDir::new().unwrap();
    let path = |n: &str| dir.path().join(n);
    write_spec(dir.path(), 8, 3, 2, 50);
    let bayer = mosaic(&random_rgb(51, 16, 16, 12), CfaPattern::Rggb).unwrap();
    save_image(path("f.pgm"), &bayer.clone().into()).unwrap();
    for mode in ["real", "quantized"] {
        ok(&["fuse", "--in", p(&path("f.pgm")), "--spec", p(&path("conv.spec")), "--mode", mode,
            "--out", p(&path(&format!("{mode}.ften")))]);
    }
    let read = |n: &str| Tensor::<f64>::read_ften(fs::File::open(path(n)).unwrap()).unwrap();
    let (real, quant) = (read("real.ften"), read("quantized.ften"));
    assert_eq!(real.dims(), &[8, 4, 4]);
    let spec = rawpipe::p2m::ConvSpec::new(
        8, 3, 2,
        Tensor::read_ften(fs::File::open(path("w.ften")).unwrap()).unwrap(),
        Tensor::read_ften(fs::File::open(path("b.ften")).unwrap()).unwrap(),
    )
    .unwrap();
    let reference = rawpipe::p2m::reference_conv(&demosaic_inpixel(&bayer), &spec).unwrap();
    assert!(quant.max_abs_diff(&reference) < 1e-9);
    assert!(real.max_abs_diff(&quant) > 0.0);

    ok(&["fuse", "--in", p(&path("f.pgm")), "--spec", p(&path("conv.spec")), "--precision", "f32",
        "--out", p(&path("r32.ften"))]);
    assert_eq!(fs::read(path("r32.ften")).unwrap()[5], 0);
}

#[test]
fn stats_compare_reports_intersection() {
    let dir = TempDir::new().unwrap();
    let path = |n: &str| dir.path().join(n);
    let raw = random_rgb(60, 16, 16, 12);
    save_image(path("raw.ppm"), &raw.clone().into()).unwrap();
    ok(&["stats", "--in", p(&path("raw.ppm")), "--hist-bins", "16", "--gnuplot", p(&path("h.dat")),
        "--csv", p(&path("h.csv"))]);
    let dat = fs::read_to_string(path("h.dat")).unwrap();
    assert_eq!(dat.lines().filter(|l| !l.is_empty() && !l.starts_with('#')).count(), 48);
    assert!(fs::read_to_string(path("h.csv")).unwrap().starts_with("bin,lo,hi,R,G,B\n"));

    let out = ok(&["stats", "--compare", p(&path("raw.ppm")), p(&path("raw.ppm"))]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("overall intersection 1.000000"), "{text}");
}

#[test]
fn exit_codes() {
    assert_eq!(rawpipe(&["--no-such-flag"]).status.code(), Some(1));
    assert_eq!(rawpipe(&["bandwidth", "--width", "3", "--height", "4"]).status.code(), Some(2));
    assert_eq!(rawpipe(&["bandwidth", "--width", "4", "--height", "4", "--bitdepth", "0"]).status.code(), Some(1));
    let dir = TempDir::new().unwrap();
    let bad = dir.path().join("bad.pgm");
    fs::write(&bad, b"P5\n4 4\n255\nxx").unwrap();
    let out = rawpipe(&["demosaic", "--in", p(&bad), "--out", p(&dir.path().join("o.ppm"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(rawpipe(&["--help"]).status.success());
}

#[test]
fn odd_sized_bayer_file_is_a_format_error() {
    let dir = TempDir::new().unwrap();
    let bad = dir.path().join("odd.pgm");
    fs::write(&bad, b"P5\n3 2\n255\n\x01\x02\x03\x04\x05\x06").unwrap();
    let out = rawpipe(&["pixelsim", "--in", p(&bad), "--out", p(&dir.path().join("o.ppm"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn library_pixelsim_agrees_with_cli_on_noisy_input() {
    let dir = TempDir::new().unwrap();
    let path = |n: &str| dir.path().join(n);
    let bayer = mosaic(&random_rgb(70, 8, 8, 12), CfaPattern::Bggr).unwrap();
    save_image(path("b.pgm"), &bayer.clone().into()).unwrap();
    ok(&["pixelsim", "--in", p(&path("b.pgm")), "--out", p(&path("o.ppm")), "--noise-sigma", "0.002",
        "--seed", "4"]);
    let config = PixelArrayConfig {
        pattern: CfaPattern::Bggr,
        read_noise_sigma: 0.002,
        seed: 4,
        ..PixelArrayConfig::new(8, 8)
    };
    let v: Vec<f64> = bayer.data().iter().map(|&c| c as f64 / 4095.0).collect();
    let want = simulate_readout(&v, &config).unwrap();
    assert_eq!(load_image(path("o.ppm")).unwrap().into_rgb().unwrap(), want);
}
