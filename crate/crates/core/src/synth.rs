//! Seeded synthetic scenes with natural-image-like structure: smooth
//! illumination, soft blobs and hard-edged objects.
//!
//! Frames are linear raw intensities kept in a dark range with mild chroma,
//! which is where real sensor data sits and where the reference ISP's
//! colour matrix never clips.

use crate::error::Result;
use crate::image::RgbImage;
use crate::invisp::{rgb_to_tensor, synth_isp_oracle, Pair};
use crate::prng::Prng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneParams {
    pub luminance_min: f64,
    pub luminance_max: f64,
    /// Maximum relative red/blue deviation from the green channel.
    pub chroma: f64,
    pub blobs: usize,
    pub objects: usize,
}

impl Default for SceneParams {
    fn default() -> Self {
        Self {
            luminance_min: 0.02,
            luminance_max: 0.3,
            chroma: 0.2,
            blobs: 4,
            objects: 2,
        }
    }
}

fn field(rng: &mut Prng, w: usize, h: usize, blobs: usize, objects: usize) -> Vec<f64> {
    let (fw, fh) = (w as f64, h as f64);
    let gx = rng.next_gaussian(1.0) / fw;
    let gy = rng.next_gaussian(1.0) / fh;
    let mut v: Vec<f64> = (0..h)
        .flat_map(|y| (0..w).map(move |x| gx * x as f64 + gy * y as f64))
        .collect();
    for _ in 0..blobs {
        let (cx, cy) = (rng.next_real() * fw, rng.next_real() * fh);
        let radius = (0.1 + 0.4 * rng.next_real()) * fw.max(fh);
        let amp = rng.next_gaussian(1.0);
        for y in 0..h {
            for x in 0..w {
                let d2 = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
                v[y * w + x] += amp * (-d2 / (2.0 * radius * radius)).exp();
            }
        }
    }
    for _ in 0..objects {
        let x0 = rng.next_below(w as u64) as usize;
        let y0 = rng.next_below(h as u64) as usize;
        let x1 = (x0 + 1 + rng.next_below((w / 2).max(1) as u64) as usize).min(w);
        let y1 = (y0 + 1 + rng.next_below((h / 2).max(1) as u64) as usize).min(h);
        let amp = rng.next_gaussian(0.7);
        for y in y0..y1 {
            for x in x0..x1 {
                v[y * w + x] += amp;
            }
        }
    }
    v
}

fn rescale(v: &mut [f64], lo: f64, hi: f64) {
    let min = v.iter().copied().fold(f64::INFINITY, f64::min);
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = (max - min).max(1e-12);
    for x in v {
        *x = lo + (hi - lo) * (*x - min) / span;
    }
}

/// One linear raw frame (unit-real RGB).
pub fn natural_raw(rng: &mut Prng, width: usize, height: usize, params: &SceneParams) -> RgbImage {
    let mut lum = field(rng, width, height, params.blobs, params.objects);
    // Each frame covers a random sub-range of the allowed luminance band.
    let band = params.luminance_max - params.luminance_min;
    let a = params.luminance_min + band * rng.next_real();
    let b = params.luminance_min + band * rng.next_real();
    let (lo, hi) = if (a - b).abs() < 0.05 * band {
        (params.luminance_min, params.luminance_max)
    } else {
        (a.min(b), a.max(b))
    };
    rescale(&mut lum, lo, hi);
    let chroma = |rng: &mut Prng| {
        let mut c = field(rng, width, height, 2, 1);
        let span = params.chroma * rng.next_real();
        rescale(&mut c, -span, span);
        c
    };
    let cr = chroma(rng);
    let cb = chroma(rng);
    let red = lum.iter().zip(&cr).map(|(l, c)| l * (1.0 + c)).collect();
    let blue = lum.iter().zip(&cb).map(|(l, c)| l * (1.0 + c)).collect();
    RgbImage::from_unit(width, height, [red, lum, blue]).expect("planes sized to the frame")
}

/// `count` raw frames paired with their reference-ISP renderings.
pub fn synthetic_pairs(count: usize, width: usize, height: usize, seed: u64) -> Result<Vec<Pair>> {
    let params = SceneParams::default();
    (0..count)
        .map(|i| {
            let mut rng = Prng::derive(seed, &[i as u64]);
            let raw = natural_raw(&mut rng, width, height, &params);
            let rgb = synth_isp_oracle(&raw)?;
            Ok(Pair {
                raw: rgb_to_tensor(&raw),
                rgb: rgb_to_tensor(&rgb),
            })
        })
        .collect()
}
