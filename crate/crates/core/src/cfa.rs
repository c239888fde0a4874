//! Bayer mosaicing and demosaicing.

use crate::error::{Error, Result};
use crate::image::{check_even_dims, BayerImage, CfaPattern, Channel, RgbEncoding, RgbImage};

/// Positions of each colour inside the 2×2 tile, as (row, col) parities.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CfaOffsets {
    pub red: (usize, usize),
    pub greens: [(usize, usize); 2],
    pub blue: (usize, usize),
}

impl CfaOffsets {
    pub fn of(pattern: CfaPattern) -> Self {
        let mut red = None;
        let mut blue = None;
        let mut greens = Vec::with_capacity(2);
        for r in 0..2 {
            for c in 0..2 {
                match pattern.color_at(r, c) {
                    Channel::Red => red = Some((r, c)),
                    Channel::Blue => blue = Some((r, c)),
                    Channel::Green => greens.push((r, c)),
                }
            }
        }
        CfaOffsets {
            red: red.expect("pattern has a red site"),
            greens: [greens[0], greens[1]],
            blue: blue.expect("pattern has a blue site"),
        }
    }
}

impl CfaPattern {
    pub fn offsets(self) -> CfaOffsets {
        CfaOffsets::of(self)
    }
}

/// Samples each pixel's CFA colour from an integer-code RGB image.
pub fn mosaic(rgb: &RgbImage, pattern: CfaPattern) -> Result<BayerImage> {
    let RgbEncoding::IntegerCodes(bit_depth) = rgb.encoding() else {
        return Err(Error::Encoding {
            expected: "integer codes",
        });
    };
    let (w, h) = (rgb.width(), rgb.height());
    check_even_dims(w, h)?;
    let planes = rgb.code_planes()?;
    let data = (0..h)
        .flat_map(|i| (0..w).map(move |j| (i, j)))
        .map(|(i, j)| planes[pattern.color_at(i, j).index()][i * w + j])
        .collect();
    BayerImage::new(w, h, bit_depth, pattern, data)
}

/// Maps an out-of-range index back onto the same-parity sub-lattice, so a
/// padded neighbour always has the colour the interpolation expects.
#[inline]
fn same_parity(k: isize, n: usize) -> usize {
    if k < 0 {
        (k + 2) as usize
    } else if k as usize >= n {
        (k - 2) as usize
    } else {
        k as usize
    }
}

/// Bilinear demosaic. Missing colours are the half-up rounded mean of the
/// nearest same-colour neighbours; borders replicate each colour's
/// sub-lattice.
pub fn demosaic_bilinear(bayer: &BayerImage) -> RgbImage {
    let (w, h) = (bayer.width(), bayer.height());
    let pattern = bayer.pattern();
    let at = |i: isize, j: isize| bayer.get(same_parity(i, h), same_parity(j, w)) as u32;
    let mean = |coords: &[(isize, isize)]| {
        let n = coords.len() as u32;
        let sum: u32 = coords.iter().map(|&(i, j)| at(i, j)).sum();
        ((sum + n / 2) / n) as u16
    };

    let mut planes = [vec![0u16; w * h], vec![0u16; w * h], vec![0u16; w * h]];
    for i in 0..h {
        for j in 0..w {
            let site = pattern.color_at(i, j);
            let (ii, jj) = (i as isize, j as isize);
            let cross = [(ii - 1, jj), (ii + 1, jj), (ii, jj - 1), (ii, jj + 1)];
            let diagonal = [
                (ii - 1, jj - 1),
                (ii - 1, jj + 1),
                (ii + 1, jj - 1),
                (ii + 1, jj + 1),
            ];
            let horizontal = [(ii, jj - 1), (ii, jj + 1)];
            let vertical = [(ii - 1, jj), (ii + 1, jj)];
            // Colour of the horizontal neighbours at a green site.
            let row_mate = pattern.color_at(i, j + 1);
            for c in [Channel::Red, Channel::Green, Channel::Blue] {
                let v = if c == site {
                    bayer.get(i, j)
                } else if c == Channel::Green {
                    mean(&cross)
                } else if site != Channel::Green {
                    mean(&diagonal)
                } else if row_mate == c {
                    mean(&horizontal)
                } else {
                    mean(&vertical)
                };
                planes[c.index()][i * w + j] = v;
            }
        }
    }
    RgbImage::from_codes(w, h, bayer.bit_depth(), planes).expect("planes sized to the frame")
}

/// Tile-level demosaic: every 2×2 tile becomes one RGB pixel holding the
/// red and blue codes and `(G1 + G2) >> 1`.
pub fn demosaic_inpixel(bayer: &BayerImage) -> RgbImage {
    let (w, h) = (bayer.width() / 2, bayer.height() / 2);
    let off = bayer.pattern().offsets();
    let mut planes = [
        Vec::with_capacity(w * h),
        Vec::with_capacity(w * h),
        Vec::with_capacity(w * h),
    ];
    for ty in 0..h {
        for tx in 0..w {
            let sample = |(r, c): (usize, usize)| bayer.get(2 * ty + r, 2 * tx + c);
            let g1 = sample(off.greens[0]) as u32;
            let g2 = sample(off.greens[1]) as u32;
            planes[0].push(sample(off.red));
            planes[1].push(((g1 + g2) >> 1) as u16);
            planes[2].push(sample(off.blue));
        }
    }
    RgbImage::from_codes(w, h, bayer.bit_depth(), planes).expect("planes sized to the tile grid")
}

/// Real-valued tile demosaic over an arbitrary-valued Bayer grid: greens
/// are averaged exactly rather than floored. Returns planes of
/// `(height/2) × (width/2)` values.
pub fn demosaic_inpixel_real(
    data: &[f64],
    width: usize,
    height: usize,
    pattern: CfaPattern,
) -> Result<[Vec<f64>; 3]> {
    check_even_dims(width, height)?;
    if data.len() != width * height {
        return Err(Error::Dimension(format!(
            "{} samples for a {width}x{height} frame",
            data.len()
        )));
    }
    let off = pattern.offsets();
    let (w, h) = (width / 2, height / 2);
    let mut planes = [vec![0.0; w * h], vec![0.0; w * h], vec![0.0; w * h]];
    for ty in 0..h {
        for tx in 0..w {
            let sample = |(r, c): (usize, usize)| data[(2 * ty + r) * width + 2 * tx + c];
            let k = ty * w + tx;
            planes[0][k] = sample(off.red);
            planes[1][k] = 0.5 * (sample(off.greens[0]) + sample(off.greens[1]));
            planes[2][k] = sample(off.blue);
        }
    }
    Ok(planes)
}
