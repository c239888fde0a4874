//! Distribution-shift diagnostics and the sensor-to-processor bandwidth
//! calculator.

use std::fmt::Write as _;

use num_rational::Ratio;

use crate::error::{Error, Result};
use crate::image::{check_even_dims, max_code, BayerImage, RgbEncoding, RgbImage};

/// Image accepted by [`histogram`]. Bayer frames are split into one plane
/// per CFA colour.
#[derive(Debug, Clone, Copy)]
pub enum ImageRef<'a> {
    Bayer(&'a BayerImage),
    Rgb(&'a RgbImage),
}

impl<'a> From<&'a BayerImage> for ImageRef<'a> {
    fn from(b: &'a BayerImage) -> Self {
        ImageRef::Bayer(b)
    }
}

impl<'a> From<&'a RgbImage> for ImageRef<'a> {
    fn from(r: &'a RgbImage) -> Self {
        ImageRef::Rgb(r)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlaneHistogram {
    pub name: char,
    pub counts: Vec<u64>,
    pub mean: f64,
    pub std: f64,
}

impl PlaneHistogram {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    fn normalized(&self) -> Vec<f64> {
        let n = self.total().max(1) as f64;
        self.counts.iter().map(|&c| c as f64 / n).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HistogramReport {
    pub bins: usize,
    /// `bins + 1` edges shared by every plane.
    pub edges: Vec<f64>,
    pub planes: Vec<PlaneHistogram>,
}

/// Uniform-width histogram over the full code range (`[0, 2^b - 1]`) or
/// `[0, 1]` for unit-real images. Bins are left-closed, the last one also
/// right-closed. Out-of-range unit values land in the end bins.
pub fn histogram<'a>(image: impl Into<ImageRef<'a>>, bins: usize) -> Result<HistogramReport> {
    build_histogram(image.into(), bins, false)
}

/// [`histogram`] with integer codes scaled to `[0, 1]` first, so frames of
/// different bit depths (or a code frame and a unit-real one) share a bin
/// structure.
pub fn histogram_unit<'a>(image: impl Into<ImageRef<'a>>, bins: usize) -> Result<HistogramReport> {
    build_histogram(image.into(), bins, true)
}

fn build_histogram(image: ImageRef<'_>, bins: usize, unit: bool) -> Result<HistogramReport> {
    if bins < 2 {
        return Err(Error::Parameter(format!("need at least 2 bins, got {bins}")));
    }
    let (hi, mut planes): (f64, Vec<(char, Vec<f64>)>) = match image {
        ImageRef::Bayer(b) => {
            let mut split: [Vec<f64>; 3] = Default::default();
            for row in 0..b.height() {
                for col in 0..b.width() {
                    split[b.color_at(row, col).index()].push(b.get(row, col) as f64);
                }
            }
            let [r, g, bl] = split;
            (max_code(b.bit_depth()) as f64, vec![('R', r), ('G', g), ('B', bl)])
        }
        ImageRef::Rgb(img) => {
            let (hi, planes): (f64, [Vec<f64>; 3]) = match img.encoding() {
                RgbEncoding::IntegerCodes(b) => (
                    max_code(b) as f64,
                    img.code_planes()?.each_ref().map(|p| p.iter().map(|&c| c as f64).collect()),
                ),
                RgbEncoding::UnitReal => (1.0, img.unit_planes()?.clone()),
            };
            let [r, g, b] = planes;
            (hi, vec![('R', r), ('G', g), ('B', b)])
        }
    };
    let hi = if unit {
        for (_, values) in &mut planes {
            values.iter_mut().for_each(|v| *v /= hi);
        }
        1.0
    } else {
        hi
    };
    let edges = (0..=bins).map(|i| hi * i as f64 / bins as f64).collect();
    let planes = planes
        .into_iter()
        .map(|(name, values)| bin_plane(name, &values, bins, hi))
        .collect();
    Ok(HistogramReport { bins, edges, planes })
}

fn bin_plane(name: char, values: &[f64], bins: usize, hi: f64) -> PlaneHistogram {
    let mut counts = vec![0u64; bins];
    for &v in values {
        let idx = (v / hi * bins as f64).floor();
        let idx = if idx < 0.0 { 0 } else { (idx as usize).min(bins - 1) };
        counts[idx] += 1;
    }
    let n = values.len().max(1) as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    PlaneHistogram { name, counts, mean, std: var.sqrt() }
}

impl HistogramReport {
    /// Gnuplot-friendly blocks of `center count`, one block per plane.
    pub fn to_gnuplot(&self) -> String {
        let mut out = String::new();
        for (i, plane) in self.planes.iter().enumerate() {
            if i > 0 {
                out.push_str("\n\n");
            }
            let _ = writeln!(out, "# plane {} mean={} std={}", plane.name, plane.mean, plane.std);
            for (b, c) in plane.counts.iter().enumerate() {
                let center = 0.5 * (self.edges[b] + self.edges[b + 1]);
                let _ = writeln!(out, "{center} {c}");
            }
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin,lo,hi");
        for p in &self.planes {
            let _ = write!(out, ",{}", p.name);
        }
        out.push('\n');
        for b in 0..self.bins {
            let _ = write!(out, "{},{},{}", b, self.edges[b], self.edges[b + 1]);
            for p in &self.planes {
                let _ = write!(out, ",{}", p.counts[b]);
            }
            out.push('\n');
        }
        out
    }

    pub fn summary(&self) -> String {
        let mut out = format!("{:<6}{:>12}{:>16}{:>16}\n", "plane", "samples", "mean", "std");
        for p in &self.planes {
            let _ = writeln!(out, "{:<6}{:>12}{:>16.6}{:>16.6}", p.name, p.total(), p.mean, p.std);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShiftMetrics {
    /// `b.mean - a.mean`, per plane.
    pub mean_delta: Vec<f64>,
    pub std_delta: Vec<f64>,
    pub intersection: Vec<f64>,
}

impl ShiftMetrics {
    /// Mean intersection over planes.
    pub fn overall_intersection(&self) -> f64 {
        self.intersection.iter().sum::<f64>() / self.intersection.len() as f64
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{:<6}{:>16}{:>16}{:>14}\n", "plane", "mean_delta", "std_delta", "intersection");
        for (i, name) in ['R', 'G', 'B'].iter().enumerate().take(self.intersection.len()) {
            let _ = writeln!(
                out,
                "{:<6}{:>16.6}{:>16.6}{:>14.6}",
                name, self.mean_delta[i], self.std_delta[i], self.intersection[i]
            );
        }
        let _ = writeln!(out, "overall intersection {:.6}", self.overall_intersection());
        out
    }
}

pub fn shift_metrics(a: &HistogramReport, b: &HistogramReport) -> Result<ShiftMetrics> {
    if a.bins != b.bins || a.edges != b.edges || a.planes.len() != b.planes.len() {
        return Err(Error::Parameter("histograms have different bin structures".into()));
    }
    let mut m = ShiftMetrics { mean_delta: vec![], std_delta: vec![], intersection: vec![] };
    for (pa, pb) in a.planes.iter().zip(&b.planes) {
        m.mean_delta.push(pb.mean - pa.mean);
        m.std_delta.push(pb.std - pa.std);
        let inter = pa.normalized().iter().zip(pb.normalized()).map(|(p, q)| p.min(q)).sum::<f64>();
        m.intersection.push(inter.min(1.0));
    }
    Ok(m)
}

/// Peak signal-to-noise ratio in dB. Identical inputs give infinity.
pub fn psnr(a: &[f64], b: &[f64], peak: f64) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::Dimension(format!("psnr over {} and {} samples", a.len(), b.len())));
    }
    let mse = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64;
    Ok(10.0 * (peak * peak / mse).log10())
}

/// The parts of a first-layer convolution that affect its output size.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSummary {
    pub out_channels: u64,
    pub stride: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageRecord {
    pub name: &'static str,
    pub elements: u64,
    pub bits_per_element: u64,
    pub bits_per_frame: u64,
}

impl StageRecord {
    fn new(name: &'static str, elements: u64, bits_per_element: u64) -> Self {
        Self { name, elements, bits_per_element, bits_per_frame: elements * bits_per_element }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BandwidthReport {
    pub stages: Vec<StageRecord>,
    /// Raw elements over demosaiced elements.
    pub element_ratio: Ratio<u64>,
    /// Raw bits per element over output bits per element.
    pub bit_ratio: Ratio<u64>,
    /// Demosaiced-grid pixels over convolution output pixels.
    pub spatial_ratio: Option<Ratio<u64>>,
    /// Convolution output channels over the three colour channels.
    pub channel_ratio: Option<Ratio<u64>>,
    /// `(from, to, bits(from) / bits(to))` for every ordered stage pair.
    pub pairwise: Vec<(&'static str, &'static str, Ratio<u64>)>,
}

pub fn bandwidth_report(
    width: usize,
    height: usize,
    bit_depth: u8,
    conv: Option<ConvSummary>,
    output_bits: u8,
) -> Result<BandwidthReport> {
    check_even_dims(width, height)?;
    if bit_depth == 0 || output_bits == 0 {
        return Err(Error::Parameter("bit depths must be positive".into()));
    }
    let (w, h) = (width as u64, height as u64);
    let (grid_w, grid_h) = (w / 2, h / 2);
    let mut stages = vec![
        StageRecord::new("mosaiced raw", w * h, bit_depth as u64),
        StageRecord::new("in-pixel demosaiced", 3 * grid_w * grid_h, output_bits as u64),
    ];
    let mut spatial_ratio = None;
    let mut channel_ratio = None;
    if let Some(c) = conv {
        if c.stride == 0 || c.out_channels == 0 {
            return Err(Error::Parameter("conv stride and channels must be positive".into()));
        }
        let (ow, oh) = (grid_w.div_ceil(c.stride), grid_h.div_ceil(c.stride));
        stages.push(StageRecord::new("fused conv", c.out_channels * ow * oh, output_bits as u64));
        spatial_ratio = Some(Ratio::new(grid_w * grid_h, ow * oh));
        channel_ratio = Some(Ratio::new(c.out_channels, 3));
    }
    let mut pairwise = vec![];
    for (i, a) in stages.iter().enumerate() {
        for b in &stages[i + 1..] {
            pairwise.push((a.name, b.name, Ratio::new(a.bits_per_frame, b.bits_per_frame)));
        }
    }
    Ok(BandwidthReport {
        element_ratio: Ratio::new(stages[0].elements, stages[1].elements),
        bit_ratio: Ratio::new(bit_depth as u64, output_bits as u64),
        spatial_ratio,
        channel_ratio,
        pairwise,
        stages,
    })
}

fn ratio_str(r: Ratio<u64>) -> String {
    if *r.denom() == 1 {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

fn ratio_f64(r: Ratio<u64>) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

impl BandwidthReport {
    /// Fraction of raw elements removed by the in-pixel demosaic.
    pub fn element_reduction(&self) -> Ratio<u64> {
        Ratio::from_integer(1) - self.element_ratio.recip()
    }

    /// Linear energy model `e_bit * bits/frame`, one value per stage.
    pub fn energy(&self, e_bit: f64) -> Vec<f64> {
        self.stages.iter().map(|s| e_bit * s.bits_per_frame as f64).collect()
    }

    fn ratio_rows(&self) -> Vec<(&'static str, Ratio<u64>)> {
        let mut rows = vec![
            ("element ratio", self.element_ratio),
            ("element reduction", self.element_reduction()),
            ("bit ratio", self.bit_ratio),
        ];
        if let (Some(s), Some(c)) = (self.spatial_ratio, self.channel_ratio) {
            rows.push(("spatial ratio", s));
            rows.push(("channel ratio", c));
        }
        rows
    }

    pub fn to_csv(&self, e_bit: Option<f64>) -> String {
        let mut out = String::from("stage,elements,bits_per_element,bits_per_frame");
        if e_bit.is_some() {
            out.push_str(",energy");
        }
        out.push('\n');
        for s in &self.stages {
            let _ = write!(out, "{},{},{},{}", s.name, s.elements, s.bits_per_element, s.bits_per_frame);
            if let Some(e) = e_bit {
                let _ = write!(out, ",{}", e * s.bits_per_frame as f64);
            }
            out.push('\n');
        }
        out.push_str("\nratio,exact,value\n");
        for (name, r) in self.ratio_rows() {
            let _ = writeln!(out, "{},{},{}", name, ratio_str(r), ratio_f64(r));
        }
        for (a, b, r) in &self.pairwise {
            let _ = writeln!(out, "bits {} / {},{},{}", a, b, ratio_str(*r), ratio_f64(*r));
        }
        out
    }

    pub fn to_text(&self, e_bit: Option<f64>) -> String {
        let mut out = format!("{:<22}{:>14}{:>10}{:>16}", "stage", "elements", "bits/el", "bits/frame");
        if e_bit.is_some() {
            let _ = write!(out, "{:>16}", "energy");
        }
        out.push('\n');
        for s in &self.stages {
            let _ = write!(out, "{:<22}{:>14}{:>10}{:>16}", s.name, s.elements, s.bits_per_element, s.bits_per_frame);
            if let Some(e) = e_bit {
                let _ = write!(out, "{:>16.6e}", e * s.bits_per_frame as f64);
            }
            out.push('\n');
        }
        out.push('\n');
        for (name, r) in self.ratio_rows() {
            let _ = writeln!(out, "{:<44}{:>10}{:>12.6}", name, ratio_str(r), ratio_f64(r));
        }
        for (a, b, r) in &self.pairwise {
            let label = format!("bits {a} / {b}");
            let _ = writeln!(out, "{:<44}{:>10}{:>12.6}", label, ratio_str(*r), ratio_f64(*r));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::CfaPattern;
    use crate::prng::Prng;

    fn gray_codes(w: usize, h: usize, bits: u8, f: impl FnMut(usize) -> u16) -> RgbImage {
        let p: Vec<u16> = (0..w * h).map(f).collect();
        RgbImage::from_codes(w, h, bits, [p.clone(), p.clone(), p]).unwrap()
    }

    #[test]
    fn constant_image_fills_one_bin() {
        let img = gray_codes(4, 4, 8, |_| 77);
        let h = histogram(&img, 16).unwrap();
        for p in &h.planes {
            assert_eq!(p.counts.iter().filter(|&&c| c > 0).count(), 1);
            assert_eq!(p.total(), 16);
            assert_eq!((p.mean, p.std), (77.0, 0.0));
        }
    }

    #[test]
    fn extremes_split_evenly() {
        let img = gray_codes(4, 2, 12, |i| if i % 2 == 0 { 0 } else { 4095 });
        let h = histogram(&img, 2).unwrap();
        assert_eq!(h.edges, vec![0.0, 2047.5, 4095.0]);
        assert_eq!(h.planes[0].counts, vec![4, 4]);
    }

    #[test]
    fn left_closed_bins() {
        let img = gray_codes(2, 2, 8, |i| [0, 127, 128, 255][i]);
        // edges 0, 63.75, 127.5, 191.25, 255
        let h = histogram(&img, 4).unwrap();
        assert_eq!(h.planes[1].counts, vec![1, 1, 1, 1]);
        let unit = RgbImage::from_unit(2, 1, [vec![0.5, 1.0], vec![-0.1, 1.2], vec![0.0, 0.25]]).unwrap();
        let h = histogram(&unit, 4).unwrap();
        assert_eq!(h.planes[0].counts, vec![0, 0, 1, 1]);
        assert_eq!(h.planes[1].counts, vec![1, 0, 0, 1]);
        assert_eq!(h.planes[2].counts, vec![1, 1, 0, 0]);
    }

    #[test]
    fn bayer_planes_follow_cfa() {
        let b = BayerImage::new(4, 2, 8, CfaPattern::Rggb, (0..8).map(|i| i as u16).collect()).unwrap();
        let h = histogram(&b, 4).unwrap();
        let totals: Vec<u64> = h.planes.iter().map(|p| p.total()).collect();
        assert_eq!(totals, vec![2, 4, 2]);
        assert_eq!(h.planes[0].mean, 1.0); // samples 0 and 2
        assert_eq!(h.planes[2].mean, 6.0); // samples 5 and 7
    }

    #[test]
    fn uniform_frame_within_binomial_band() {
        let mut rng = Prng::new(11);
        let n = 256 * 256;
        let img = gray_codes(256, 256, 12, |_| rng_code(&mut rng));
        let h = histogram(&img, 256).unwrap();
        let p = 1.0 / 256.0;
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        for c in &h.planes[0].counts {
            assert!((*c as f64 - n as f64 * p).abs() < 5.0 * sigma, "{c}");
        }
    }

    fn rng_code(rng: &mut Prng) -> u16 {
        rng.next_below(4096) as u16
    }

    #[test]
    fn identical_and_disjoint() {
        let a = histogram(&gray_codes(4, 4, 8, |i| i as u16), 8).unwrap();
        let m = shift_metrics(&a, &a).unwrap();
        assert_eq!(m.intersection, vec![1.0; 3]);
        assert_eq!(m.mean_delta, vec![0.0; 3]);
        let b = histogram(&gray_codes(4, 4, 8, |i| 200 + i as u16), 8).unwrap();
        let m = shift_metrics(&a, &b).unwrap();
        assert_eq!(m.intersection, vec![0.0; 3]);
        assert_eq!(m.mean_delta, vec![200.0; 3]);
    }

    #[test]
    fn mismatched_bins_rejected() {
        let img = gray_codes(2, 2, 8, |_| 1);
        let a = histogram(&img, 8).unwrap();
        let b = histogram(&img, 16).unwrap();
        assert!(matches!(shift_metrics(&a, &b), Err(Error::Parameter(_))));
        let c = histogram(&img.to_unit(), 8).unwrap();
        assert!(shift_metrics(&a, &c).is_err());
        let d = histogram_unit(&img, 8).unwrap();
        assert_eq!(shift_metrics(&d, &c).unwrap().intersection, vec![1.0; 3]);
        assert!(histogram(&img, 1).is_err());
    }

    #[test]
    fn vga_frame_bandwidth() {
        let r = bandwidth_report(640, 480, 12, None, 8).unwrap();
        assert_eq!(r.stages[0].elements, 307_200);
        assert_eq!(r.stages[1].elements, 230_400);
        assert_eq!(r.element_ratio, Ratio::new(4, 3));
        assert_eq!(r.element_reduction(), Ratio::new(1, 4));
        assert_eq!(r.bit_ratio, Ratio::new(3, 2));
        assert_eq!(r.pairwise[0].2, Ratio::from_integer(2));
        let r = bandwidth_report(640, 480, 12, Some(ConvSummary { out_channels: 8, stride: 2 }), 8).unwrap();
        assert_eq!(r.spatial_ratio, Some(Ratio::from_integer(4)));
        assert_eq!(r.channel_ratio, Some(Ratio::new(8, 3)));
        assert_eq!(r.stages[2].elements, 8 * 160 * 120);
        // 12WH bits against 8 * (W/4)(H/4) * 8 = 4WH bits
        assert_eq!(r.pairwise[1].2, Ratio::from_integer(3));
        assert!(bandwidth_report(641, 480, 12, None, 8).is_err());
    }

    #[test]
    fn energy_is_linear() {
        let r = bandwidth_report(4, 4, 10, None, 8).unwrap();
        assert_eq!(r.energy(2.0), vec![320.0, 192.0]);
        assert!(r.to_csv(Some(1.0)).contains("mosaiced raw,16,10,160,160"));
        assert!(r.to_text(None).contains("element ratio"));
    }

    #[test]
    fn psnr_values() {
        assert_eq!(psnr(&[0.0, 1.0], &[0.0, 1.0], 1.0).unwrap(), f64::INFINITY);
        let v = psnr(&[0.0; 4], &[0.1; 4], 1.0).unwrap();
        assert!((v - 20.0).abs() < 1e-9);
    }
}
