//! In-pixel demosaic fused into a strided first convolution layer.
//!
//! A convolution over the demosaiced `X × Y × 3` grid is rewritten as a
//! convolution over the `2X × 2Y` Bayer grid with stride `2s`: each
//! demosaiced tap becomes a 2×2 Bayer tap whose red and blue entries carry
//! the red and blue weights and whose two green entries each carry half the
//! green weight. Both paths use cross-correlation (no kernel flip) with zero
//! padding of `k/2` demosaiced pixels, i.e. whole zero tiles on the Bayer
//! grid.

use crate::cfa::demosaic_inpixel;
use crate::error::{Error, Result};
use crate::image::{check_even_dims, BayerImage, CfaPattern, Channel, RgbEncoding, RgbImage};
use crate::prng::Prng;
use crate::tensor::Tensor;

const MISMATCH_STREAM: u64 = 0x6EE7;

#[derive(Debug, Clone, PartialEq)]
pub struct ConvSpec {
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    /// `out × 3 × k × k`
    pub weights: Tensor<f64>,
    /// `out`
    pub bias: Tensor<f64>,
}

impl ConvSpec {
    pub fn new(
        out_channels: usize,
        kernel: usize,
        stride: usize,
        weights: Tensor<f64>,
        bias: Tensor<f64>,
    ) -> Result<Self> {
        if kernel == 0 || kernel.is_multiple_of(2) {
            return Err(Error::Parameter(format!("kernel size {kernel} must be odd")));
        }
        if stride == 0 || out_channels == 0 {
            return Err(Error::Parameter("stride and output channels must be positive".into()));
        }
        if weights.dims() != [out_channels, 3, kernel, kernel] {
            return Err(Error::Dimension(format!(
                "weights have dims {:?}, expected [{out_channels}, 3, {kernel}, {kernel}]",
                weights.dims()
            )));
        }
        if bias.dims() != [out_channels] {
            return Err(Error::Dimension(format!(
                "bias has dims {:?}, expected [{out_channels}]",
                bias.dims()
            )));
        }
        if weights.data().iter().chain(bias.data()).any(|v| !v.is_finite()) {
            return Err(Error::numeric(None, "non-finite convolution weight"));
        }
        Ok(Self { out_channels, kernel, stride, weights, bias })
    }

    /// Gaussian weights and biases with unit standard deviation.
    pub fn random(out_channels: usize, kernel: usize, stride: usize, rng: &mut Prng) -> Result<Self> {
        let n = out_channels * 3 * kernel * kernel;
        let w = (0..n).map(|_| rng.next_gaussian(1.0)).collect();
        let b = (0..out_channels).map(|_| rng.next_gaussian(1.0)).collect();
        Self::new(
            out_channels,
            kernel,
            stride,
            Tensor::new(vec![out_channels, 3, kernel, kernel], w)?,
            Tensor::new(vec![out_channels], b)?,
        )
    }

    pub fn padding(&self) -> usize {
        self.kernel / 2
    }

    #[inline]
    pub fn weight(&self, o: usize, c: usize, ky: usize, kx: usize) -> f64 {
        let k = self.kernel;
        self.weights.data()[((o * 3 + c) * k + ky) * k + kx]
    }

    /// Output extent along a demosaiced axis of length `n`.
    pub fn output_len(&self, n: usize) -> usize {
        (n + 2 * self.padding() - self.kernel) / self.stride + 1
    }

    /// Sum of |green weight| over all taps of output channel `o`.
    pub fn green_weight_l1(&self, o: usize) -> f64 {
        let k = self.kernel;
        (0..k * k).map(|i| self.weight(o, 1, i / k, i % k).abs()).sum()
    }
}

/// Bayer-domain kernels produced by [`expand_weights`].
#[derive(Debug, Clone, PartialEq)]
pub struct FusedWeights {
    pub pattern: CfaPattern,
    pub out_channels: usize,
    /// Demosaiced-grid kernel size; Bayer kernels are `2k × 2k`.
    pub kernel: usize,
    pub stride: usize,
    /// `out × 2k × 2k`
    pub taps: Vec<f64>,
    pub bias: Vec<f64>,
}

impl FusedWeights {
    fn bayer_kernel(&self) -> usize {
        2 * self.kernel
    }

    #[inline]
    pub fn tap(&self, o: usize, by: usize, bx: usize) -> f64 {
        let bk = self.bayer_kernel();
        self.taps[(o * bk + by) * bk + bx]
    }
}

/// Expands demosaiced-grid weights onto the Bayer grid: red and blue taps
/// map one-to-one, each green tap splits into two taps of half its value.
pub fn expand_weights(spec: &ConvSpec, pattern: CfaPattern) -> FusedWeights {
    expand(spec, pattern, |_, _, _, w| w)
}

/// [`expand_weights`] followed by a seeded multiplicative error
/// `1 + N(0, sigma)` on every green tap, modelling in-pixel weight mismatch.
pub fn expand_weights_with_mismatch(
    spec: &ConvSpec,
    pattern: CfaPattern,
    sigma: f64,
    seed: u64,
) -> FusedWeights {
    expand(spec, pattern, |o, by, bx, w| {
        w * (1.0 + Prng::derive(seed, &[MISMATCH_STREAM, o as u64, by as u64, bx as u64]).next_gaussian(sigma))
    })
}

fn expand(
    spec: &ConvSpec,
    pattern: CfaPattern,
    green: impl Fn(usize, usize, usize, f64) -> f64,
) -> FusedWeights {
    let k = spec.kernel;
    let bk = 2 * k;
    let mut taps = vec![0.0; spec.out_channels * bk * bk];
    for o in 0..spec.out_channels {
        for by in 0..bk {
            for bx in 0..bk {
                let (ky, kx) = (by / 2, bx / 2);
                let v = match pattern.color_at(by, bx) {
                    Channel::Red => spec.weight(o, 0, ky, kx),
                    Channel::Blue => spec.weight(o, 2, ky, kx),
                    Channel::Green => green(o, by, bx, 0.5 * spec.weight(o, 1, ky, kx)),
                };
                taps[(o * bk + by) * bk + bx] = v;
            }
        }
    }
    FusedWeights {
        pattern,
        out_channels: spec.out_channels,
        kernel: k,
        stride: spec.stride,
        taps,
        bias: spec.bias.data().to_vec(),
    }
}

/// Real-valued Bayer frame (codes, voltages or normalized values).
#[derive(Debug, Clone, PartialEq)]
pub struct BayerFrame {
    pub width: usize,
    pub height: usize,
    pub pattern: CfaPattern,
    pub data: Vec<f64>,
}

impl BayerFrame {
    pub fn new(width: usize, height: usize, pattern: CfaPattern, data: Vec<f64>) -> Result<Self> {
        check_even_dims(width, height)?;
        if data.len() != width * height {
            return Err(Error::Dimension(format!(
                "{} samples for a {width}x{height} frame",
                data.len()
            )));
        }
        Ok(Self { width, height, pattern, data })
    }

    /// Codes as reals, in LSB units.
    pub fn from_codes(bayer: &BayerImage) -> Self {
        Self {
            width: bayer.width(),
            height: bayer.height(),
            pattern: bayer.pattern(),
            data: bayer.data().iter().map(|&c| c as f64).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConvMode {
    /// Expanded-weight convolution evaluated directly on the Bayer grid.
    Real,
    /// Green pairs pass through the digital `(G1 + G2) >> 1` stage before
    /// weighting, as in the ADC-then-shift read-out path.
    Quantized,
}

/// Fused convolution on an integer-code Bayer frame. Outputs are in LSB
/// units.
pub fn fused_conv(bayer: &BayerImage, spec: &ConvSpec, mode: ConvMode) -> Result<Tensor<f64>> {
    let fused = expand_weights(spec, bayer.pattern());
    match mode {
        ConvMode::Real => fused_conv_real(&BayerFrame::from_codes(bayer), &fused),
        ConvMode::Quantized => fused_conv_quantized(bayer, &fused),
    }
}

fn check_pattern(frame: CfaPattern, fused: &FusedWeights) -> Result<()> {
    if frame != fused.pattern {
        return Err(Error::Parameter(format!(
            "weights expanded for {} applied to a {} frame",
            fused.pattern, frame
        )));
    }
    Ok(())
}

fn output_dims(fused: &FusedWeights, width: usize, height: usize) -> (usize, usize, usize) {
    let p = fused.kernel / 2;
    let len = |n: usize| (n / 2 + 2 * p - fused.kernel) / fused.stride + 1;
    (len(height), len(width), p)
}

pub fn fused_conv_real(frame: &BayerFrame, fused: &FusedWeights) -> Result<Tensor<f64>> {
    check_pattern(frame.pattern, fused)?;
    let (oh, ow, p) = output_dims(fused, frame.width, frame.height);
    let bk = fused.bayer_kernel();
    let step = 2 * fused.stride;
    let mut out = Vec::with_capacity(fused.out_channels * oh * ow);
    for o in 0..fused.out_channels {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = fused.bias[o];
                for by in 0..bk {
                    let row = (oy * step + by) as isize - 2 * p as isize;
                    if row < 0 || row >= frame.height as isize {
                        continue;
                    }
                    for bx in 0..bk {
                        let col = (ox * step + bx) as isize - 2 * p as isize;
                        if col < 0 || col >= frame.width as isize {
                            continue;
                        }
                        acc += fused.tap(o, by, bx) * frame.data[row as usize * frame.width + col as usize];
                    }
                }
                out.push(acc);
            }
        }
    }
    Tensor::new(vec![fused.out_channels, oh, ow], out)
}

pub fn fused_conv_quantized(bayer: &BayerImage, fused: &FusedWeights) -> Result<Tensor<f64>> {
    check_pattern(bayer.pattern(), fused)?;
    let (oh, ow, p) = output_dims(fused, bayer.width(), bayer.height());
    let k = fused.kernel;
    let off = bayer.pattern().offsets();
    let (tiles_h, tiles_w) = (bayer.height() / 2, bayer.width() / 2);
    let mut out = Vec::with_capacity(fused.out_channels * oh * ow);
    for o in 0..fused.out_channels {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = fused.bias[o];
                for ky in 0..k {
                    let ty = (oy * fused.stride + ky) as isize - p as isize;
                    if ty < 0 || ty >= tiles_h as isize {
                        continue;
                    }
                    for kx in 0..k {
                        let tx = (ox * fused.stride + kx) as isize - p as isize;
                        if tx < 0 || tx >= tiles_w as isize {
                            continue;
                        }
                        let (ty, tx) = (ty as usize, tx as usize);
                        let at = |(r, c): (usize, usize)| bayer.get(2 * ty + r, 2 * tx + c);
                        let tap = |(r, c): (usize, usize)| fused.tap(o, 2 * ky + r, 2 * kx + c);
                        let g = (at(off.greens[0]) as u32 + at(off.greens[1]) as u32) >> 1;
                        acc += tap(off.red) * at(off.red) as f64
                            + (tap(off.greens[0]) + tap(off.greens[1])) * g as f64
                            + tap(off.blue) * at(off.blue) as f64;
                    }
                }
                out.push(acc);
            }
        }
    }
    Tensor::new(vec![fused.out_channels, oh, ow], out)
}

/// Standard strided cross-correlation over three planes of `height × width`
/// values. Accumulates bias, then channel-major, kernel row-major.
pub fn reference_conv_planes(
    planes: &[Vec<f64>; 3],
    width: usize,
    height: usize,
    spec: &ConvSpec,
) -> Result<Tensor<f64>> {
    if planes.iter().any(|p| p.len() != width * height) {
        return Err(Error::Dimension(format!("planes do not match {width}x{height}")));
    }
    let (k, p, s) = (spec.kernel, spec.padding() as isize, spec.stride);
    let (oh, ow) = (spec.output_len(height), spec.output_len(width));
    let mut out = Vec::with_capacity(spec.out_channels * oh * ow);
    for o in 0..spec.out_channels {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = spec.bias.data()[o];
                for (c, plane) in planes.iter().enumerate() {
                    for ky in 0..k {
                        let y = (oy * s + ky) as isize - p;
                        if y < 0 || y >= height as isize {
                            continue;
                        }
                        for kx in 0..k {
                            let x = (ox * s + kx) as isize - p;
                            if x < 0 || x >= width as isize {
                                continue;
                            }
                            acc += spec.weight(o, c, ky, kx) * plane[y as usize * width + x as usize];
                        }
                    }
                }
                out.push(acc);
            }
        }
    }
    Tensor::new(vec![spec.out_channels, oh, ow], out)
}

/// Reference path on an RGB image: integer codes are used as LSB-unit
/// reals, unit-real images as-is.
pub fn reference_conv(rgb: &RgbImage, spec: &ConvSpec) -> Result<Tensor<f64>> {
    let planes = match rgb.encoding() {
        RgbEncoding::IntegerCodes(_) => rgb
            .code_planes()?
            .each_ref()
            .map(|p| p.iter().map(|&c| c as f64).collect()),
        RgbEncoding::UnitReal => rgb.unit_planes()?.clone(),
    };
    reference_conv_planes(&planes, rgb.width(), rgb.height(), spec)
}

/// Demosaic-then-convolve path for a code frame, using the floored green
/// average.
pub fn reference_pipeline(bayer: &BayerImage, spec: &ConvSpec) -> Result<Tensor<f64>> {
    reference_conv(&demosaic_inpixel(bayer), spec)
}
