//! Sensor-frame and RGB image containers.
//!
//! Sensor codes are always stored as `u16`; the bit depth is metadata that
//! is validated when an image is constructed.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

pub const MIN_BIT_DEPTH: u8 = 8;
pub const MAX_BIT_DEPTH: u8 = 16;
pub const DEFAULT_BIT_DEPTH: u8 = 12;

/// Largest code representable at `bit_depth`.
pub fn max_code(bit_depth: u8) -> u32 {
    (1u32 << bit_depth) - 1
}

pub(crate) fn check_bit_depth(bit_depth: u8) -> Result<()> {
    if (MIN_BIT_DEPTH..=MAX_BIT_DEPTH).contains(&bit_depth) {
        Ok(())
    } else {
        Err(Error::Range {
            what: "bit depth must lie in 8..=16",
            value: bit_depth as f64,
        })
    }
}

/// Maps a sensor code onto `[0, 1]` as `code / (2^bit_depth - 1)`.
pub fn normalize(code: u32, bit_depth: u8) -> Result<f64> {
    check_bit_depth(bit_depth)?;
    let max = max_code(bit_depth);
    if code > max {
        return Err(Error::Range {
            what: "code exceeds 2^bit_depth - 1",
            value: code as f64,
        });
    }
    Ok(code as f64 / max as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Channel {
    Red,
    Green,
    Blue,
}

impl Channel {
    pub fn index(self) -> usize {
        match self {
            Channel::Red => 0,
            Channel::Green => 1,
            Channel::Blue => 2,
        }
    }

    pub fn letter(self) -> char {
        match self {
            Channel::Red => 'R',
            Channel::Green => 'G',
            Channel::Blue => 'B',
        }
    }
}

/// Arrangement of the 2×2 colour filter tile, named by its samples in
/// row-major order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum CfaPattern {
    #[default]
    Rggb,
    Bggr,
    Grbg,
    Gbrg,
}

impl CfaPattern {
    pub const ALL: [CfaPattern; 4] = [
        CfaPattern::Rggb,
        CfaPattern::Bggr,
        CfaPattern::Grbg,
        CfaPattern::Gbrg,
    ];

    /// Colour sensed at absolute position (`row`, `col`).
    #[inline]
    pub fn color_at(self, row: usize, col: usize) -> Channel {
        use Channel::*;
        let tile = match self {
            CfaPattern::Rggb => [Red, Green, Green, Blue],
            CfaPattern::Bggr => [Blue, Green, Green, Red],
            CfaPattern::Grbg => [Green, Red, Blue, Green],
            CfaPattern::Gbrg => [Green, Blue, Red, Green],
        };
        tile[(row & 1) * 2 + (col & 1)]
    }

    pub fn name(self) -> &'static str {
        match self {
            CfaPattern::Rggb => "RGGB",
            CfaPattern::Bggr => "BGGR",
            CfaPattern::Grbg => "GRBG",
            CfaPattern::Gbrg => "GBRG",
        }
    }
}

impl fmt::Display for CfaPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CfaPattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "RGGB" => Ok(CfaPattern::Rggb),
            "BGGR" => Ok(CfaPattern::Bggr),
            "GRBG" => Ok(CfaPattern::Grbg),
            "GBRG" => Ok(CfaPattern::Gbrg),
            _ => Err(Error::Parameter(format!("unknown CFA pattern {s:?}"))),
        }
    }
}

/// Single-plane colour-filter-array frame of sensor codes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BayerImage {
    width: usize,
    height: usize,
    bit_depth: u8,
    pattern: CfaPattern,
    data: Vec<u16>,
}

impl BayerImage {
    pub fn new(
        width: usize,
        height: usize,
        bit_depth: u8,
        pattern: CfaPattern,
        data: Vec<u16>,
    ) -> Result<Self> {
        check_bit_depth(bit_depth)?;
        check_even_dims(width, height)?;
        if data.len() != width * height {
            return Err(Error::Dimension(format!(
                "{} samples for a {width}x{height} frame",
                data.len()
            )));
        }
        let max = max_code(bit_depth);
        if let Some(&bad) = data.iter().find(|&&c| c as u32 > max) {
            return Err(Error::Range {
                what: "code exceeds 2^bit_depth - 1",
                value: bad as f64,
            });
        }
        Ok(Self {
            width,
            height,
            bit_depth,
            pattern,
            data,
        })
    }

    pub fn filled(
        width: usize,
        height: usize,
        bit_depth: u8,
        pattern: CfaPattern,
        code: u16,
    ) -> Result<Self> {
        Self::new(width, height, bit_depth, pattern, vec![code; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bit_depth(&self) -> u8 {
        self.bit_depth
    }

    pub fn pattern(&self) -> CfaPattern {
        self.pattern
    }

    pub fn data(&self) -> &[u16] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u16> {
        self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> u16 {
        self.data[row * self.width + col]
    }

    pub fn color_at(&self, row: usize, col: usize) -> Channel {
        self.pattern.color_at(row, col)
    }
}

pub(crate) fn check_even_dims(width: usize, height: usize) -> Result<()> {
    if width == 0 || height == 0 || !width.is_multiple_of(2) || !height.is_multiple_of(2) {
        return Err(Error::Dimension(format!(
            "CFA frames need even, non-zero dimensions (got {width}x{height})"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RgbEncoding {
    IntegerCodes(u8),
    UnitReal,
}

#[derive(Debug, Clone, PartialEq)]
enum Planes {
    Codes { bit_depth: u8, planes: [Vec<u16>; 3] },
    Unit([Vec<f64>; 3]),
}

/// Three-plane image in R, G, B order, stored as integer codes or as reals
/// on the unit interval.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    planes: Planes,
}

impl RgbImage {
    pub fn from_codes(
        width: usize,
        height: usize,
        bit_depth: u8,
        planes: [Vec<u16>; 3],
    ) -> Result<Self> {
        check_bit_depth(bit_depth)?;
        check_plane_lengths(width, height, planes.iter().map(Vec::len))?;
        let max = max_code(bit_depth);
        for plane in &planes {
            if let Some(&bad) = plane.iter().find(|&&c| c as u32 > max) {
                return Err(Error::Range {
                    what: "code exceeds 2^bit_depth - 1",
                    value: bad as f64,
                });
            }
        }
        Ok(Self {
            width,
            height,
            planes: Planes::Codes { bit_depth, planes },
        })
    }

    /// Unit-real planes must be finite; values outside `[0, 1]` are allowed
    /// so that intermediate pipeline stages stay invertible.
    pub fn from_unit(width: usize, height: usize, planes: [Vec<f64>; 3]) -> Result<Self> {
        check_plane_lengths(width, height, planes.iter().map(Vec::len))?;
        if planes.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::numeric(None, "non-finite value in RGB plane"));
        }
        Ok(Self {
            width,
            height,
            planes: Planes::Unit(planes),
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn encoding(&self) -> RgbEncoding {
        match &self.planes {
            Planes::Codes { bit_depth, .. } => RgbEncoding::IntegerCodes(*bit_depth),
            Planes::Unit(_) => RgbEncoding::UnitReal,
        }
    }

    pub fn bit_depth(&self) -> Option<u8> {
        match self.encoding() {
            RgbEncoding::IntegerCodes(b) => Some(b),
            RgbEncoding::UnitReal => None,
        }
    }

    pub fn code_planes(&self) -> Result<&[Vec<u16>; 3]> {
        match &self.planes {
            Planes::Codes { planes, .. } => Ok(planes),
            Planes::Unit(_) => Err(Error::Encoding {
                expected: "integer codes",
            }),
        }
    }

    pub fn unit_planes(&self) -> Result<&[Vec<f64>; 3]> {
        match &self.planes {
            Planes::Unit(planes) => Ok(planes),
            Planes::Codes { .. } => Err(Error::Encoding {
                expected: "unit-real values",
            }),
        }
    }

    /// Unit-real view of the image. Integer codes are normalized by
    /// `2^bit_depth - 1`; unit-real images are cloned.
    pub fn to_unit(&self) -> RgbImage {
        let planes = match &self.planes {
            Planes::Unit(p) => p.clone(),
            Planes::Codes { bit_depth, planes } => {
                let scale = 1.0 / max_code(*bit_depth) as f64;
                planes
                    .each_ref()
                    .map(|p| p.iter().map(|&c| c as f64 * scale).collect())
            }
        };
        RgbImage {
            width: self.width,
            height: self.height,
            planes: Planes::Unit(planes),
        }
    }

    /// Quantizes to integer codes: clamp to `[0, 1]`, then round half-up.
    pub fn to_codes(&self, bit_depth: u8) -> Result<RgbImage> {
        check_bit_depth(bit_depth)?;
        let unit = self.to_unit();
        let max = max_code(bit_depth) as f64;
        let planes = unit
            .unit_planes()?
            .each_ref()
            .map(|p| p.iter().map(|&v| (v.clamp(0.0, 1.0) * max + 0.5).floor() as u16).collect());
        Ok(RgbImage {
            width: self.width,
            height: self.height,
            planes: Planes::Codes { bit_depth, planes },
        })
    }

    /// Clamps unit-real values onto `[0, 1]`; integer images are returned
    /// unchanged.
    pub fn clamped(&self) -> RgbImage {
        match &self.planes {
            Planes::Codes { .. } => self.clone(),
            Planes::Unit(p) => RgbImage {
                width: self.width,
                height: self.height,
                planes: Planes::Unit(
                    p.each_ref()
                        .map(|p| p.iter().map(|v| v.clamp(0.0, 1.0)).collect()),
                ),
            },
        }
    }
}

fn check_plane_lengths(
    width: usize,
    height: usize,
    lens: impl Iterator<Item = usize>,
) -> Result<()> {
    for len in lens {
        if len != width * height {
            return Err(Error::Dimension(format!(
                "plane of {len} samples for a {width}x{height} image"
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize(0, 12).unwrap(), 0.0);
        assert_eq!(normalize(4095, 12).unwrap(), 1.0);
        assert!((normalize(2048, 12).unwrap() - 0.500_122_1).abs() < 1e-6);
        assert!(matches!(normalize(4096, 12), Err(Error::Range { .. })));
    }

    #[test]
    fn normalize_is_monotone() {
        for b in MIN_BIT_DEPTH..=MAX_BIT_DEPTH {
            let max = max_code(b);
            let step = (max / 997).max(1);
            let mut prev = -1.0;
            for c in (0..=max).step_by(step as usize).chain([max]) {
                let v = normalize(c, b).unwrap();
                assert!(v >= prev);
                prev = v;
            }
            assert_eq!(normalize(max, b).unwrap(), 1.0);
        }
    }

    #[test]
    fn bayer_rejects_bad_frames() {
        let p = CfaPattern::Rggb;
        assert!(BayerImage::new(3, 2, 12, p, vec![0; 6]).is_err());
        assert!(BayerImage::new(0, 2, 12, p, vec![]).is_err());
        assert!(BayerImage::new(2, 2, 12, p, vec![0; 3]).is_err());
        assert!(BayerImage::new(2, 2, 12, p, vec![4096, 0, 0, 0]).is_err());
        assert!(BayerImage::new(2, 2, 7, p, vec![0; 4]).is_err());
        assert!(BayerImage::new(2, 2, 12, p, vec![4095; 4]).is_ok());
    }

    #[test]
    fn every_pattern_has_two_greens() {
        for p in CfaPattern::ALL {
            let colors: Vec<Channel> = (0..4).map(|i| p.color_at(i / 2, i % 2)).collect();
            assert_eq!(colors.iter().filter(|&&c| c == Channel::Green).count(), 2);
            assert_eq!(colors.iter().filter(|&&c| c == Channel::Red).count(), 1);
            assert_eq!(p.name().parse::<CfaPattern>().unwrap(), p);
        }
    }

    #[test]
    fn quantize_round_trip() {
        let img = RgbImage::from_codes(2, 1, 12, [vec![0, 4095], vec![1, 2], vec![2048, 7]]).unwrap();
        assert_eq!(img.to_unit().to_codes(12).unwrap(), img);
    }
}
