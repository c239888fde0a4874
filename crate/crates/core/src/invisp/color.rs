//! White balance, gamma and the fixed reference ISP used to manufacture
//! training pairs.

use crate::error::{Error, Result};
use crate::image::RgbImage;

pub const ORACLE_WB_GAINS: [f64; 3] = [2.0, 1.0, 1.5];
#[rustfmt::skip]
pub const ORACLE_COLOR_MATRIX: [[f64; 3]; 3] = [
    [1.6, -0.4, -0.2],
    [-0.3, 1.5, -0.2],
    [-0.1, -0.5, 1.6],
];
pub const ORACLE_GAMMA: f64 = 2.2;

fn check_gains(gains: [f64; 3]) -> Result<()> {
    match gains.iter().find(|g| !(**g > 0.0 && g.is_finite())) {
        Some(&g) => Err(Error::Parameter(format!("white-balance gain {g} must be positive"))),
        None => Ok(()),
    }
}

fn map_planes(rgb: &RgbImage, f: impl Fn(usize, f64) -> Result<f64>) -> Result<RgbImage> {
    let planes = rgb.unit_planes()?;
    let mut out: [Vec<f64>; 3] = Default::default();
    for (c, (src, dst)) in planes.iter().zip(&mut out).enumerate() {
        *dst = src.iter().map(|&v| f(c, v)).collect::<Result<_>>()?;
    }
    RgbImage::from_unit(rgb.width(), rgb.height(), out)
}

/// Per-channel gain. Output is not clamped.
pub fn white_balance(rgb: &RgbImage, gains: [f64; 3]) -> Result<RgbImage> {
    check_gains(gains)?;
    map_planes(rgb, |c, v| Ok(v * gains[c]))
}

pub fn inverse_white_balance(rgb: &RgbImage, gains: [f64; 3]) -> Result<RgbImage> {
    check_gains(gains)?;
    map_planes(rgb, |c, v| Ok(v / gains[c]))
}

fn check_unit(v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::Range {
            what: "gamma input must lie in [0, 1]",
            value: v,
        })
    }
}

/// `v^(1/γ)`
pub fn gamma_encode(v: f64, gamma: f64) -> Result<f64> {
    check_unit(v)?;
    Ok(v.powf(1.0 / gamma))
}

/// `v^γ`
pub fn gamma_decode(v: f64, gamma: f64) -> Result<f64> {
    check_unit(v)?;
    Ok(v.powf(gamma))
}

pub fn gamma_encode_image(rgb: &RgbImage, gamma: f64) -> Result<RgbImage> {
    map_planes(rgb, |_, v| gamma_encode(v, gamma))
}

pub fn gamma_decode_image(rgb: &RgbImage, gamma: f64) -> Result<RgbImage> {
    map_planes(rgb, |_, v| gamma_decode(v, gamma))
}

/// Fixed reference ISP: white balance with [`ORACLE_WB_GAINS`], colour
/// matrix [`ORACLE_COLOR_MATRIX`] clamped to `[0, 1]`, then gamma
/// [`ORACLE_GAMMA`]. Input is a unit-real raw image.
pub fn synth_isp_oracle(raw: &RgbImage) -> Result<RgbImage> {
    let raw = raw.to_unit();
    let balanced = white_balance(&raw.clamped(), ORACLE_WB_GAINS)?;
    let p = balanced.unit_planes()?;
    let mut out: [Vec<f64>; 3] = Default::default();
    for (row, dst) in ORACLE_COLOR_MATRIX.iter().zip(&mut out) {
        *dst = (0..raw.len())
            .map(|i| {
                let v = row[0] * p[0][i] + row[1] * p[1][i] + row[2] * p[2][i];
                v.clamp(0.0, 1.0).powf(1.0 / ORACLE_GAMMA)
            })
            .collect();
    }
    RgbImage::from_unit(raw.width(), raw.height(), out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Prng;

    fn pixel(r: f64, g: f64, b: f64) -> RgbImage {
        RgbImage::from_unit(1, 1, [vec![r], vec![g], vec![b]]).unwrap()
    }

    fn values(img: &RgbImage) -> [f64; 3] {
        let p = img.unit_planes().unwrap();
        [p[0][0], p[1][0], p[2][0]]
    }

    #[test]
    fn white_balance_examples() {
        let px = pixel(0.2, 0.3, 0.4);
        assert_eq!(white_balance(&px, [1.0; 3]).unwrap(), px);
        let v = values(&white_balance(&px, [2.0, 1.0, 1.0]).unwrap());
        assert_eq!(v, [0.4, 0.3, 0.4]);
        assert!(white_balance(&px, [1.0, 0.0, 1.0]).is_err());
        assert!(inverse_white_balance(&px, [-1.0, 1.0, 1.0]).is_err());
    }

    #[test]
    fn white_balance_round_trip() {
        let mut p = Prng::new(1);
        let planes: [Vec<f64>; 3] = std::array::from_fn(|_| (0..256).map(|_| p.next_real()).collect());
        let img = RgbImage::from_unit(16, 16, planes).unwrap();
        let gains = [2.3, 0.7, 1.9];
        let back = inverse_white_balance(&white_balance(&img, gains).unwrap(), gains).unwrap();
        for (a, b) in img.unit_planes().unwrap().iter().flatten().zip(back.unit_planes().unwrap().iter().flatten()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn gamma_examples() {
        assert_eq!(gamma_encode(0.0, 2.2).unwrap(), 0.0);
        assert_eq!(gamma_encode(1.0, 2.2).unwrap(), 1.0);
        // 0.25^(1/2.2) evaluated independently (Python float arithmetic).
        assert!((gamma_encode(0.25, 2.2).unwrap() - 0.532_520_544_719_981_3).abs() < 1e-12);
        assert!(gamma_encode(1.5, 2.2).is_err());
        assert!(gamma_decode(-0.1, 2.2).is_err());
    }

    #[test]
    fn gamma_round_trip() {
        let mut p = Prng::new(2);
        let mut prev = (-1.0, -1.0);
        let mut xs: Vec<f64> = (0..10_000).map(|_| p.next_real()).collect();
        xs.sort_by(f64::total_cmp);
        for v in xs {
            let e = gamma_encode(v, 2.2).unwrap();
            assert!((gamma_decode(e, 2.2).unwrap() - v).abs() < 1e-12);
            assert!(e >= prev.1 && v >= prev.0);
            prev = (v, e);
        }
    }

    #[test]
    fn oracle_examples() {
        let zero = synth_isp_oracle(&pixel(0.0, 0.0, 0.0)).unwrap();
        assert_eq!(values(&zero), [0.0; 3]);
        // WB: (0.5, 0.25, 0.375); matrix: (0.625, 0.15, 0.425); gamma below.
        let v = values(&synth_isp_oracle(&pixel(0.25, 0.25, 0.25)).unwrap());
        let want = [0.807_640_687_307_139_7, 0.422_178_416_721_154_75, 0.677_775_517_542_871_1];
        for (g, w) in v.iter().zip(want) {
            assert!((g - w).abs() < 1e-12, "{v:?}");
        }
    }

    #[test]
    fn oracle_is_monotone_before_the_matrix() {
        // Gains and gamma are per-channel monotone; the matrix mixes
        // channels, so only the balanced input is compared.
        let lo = values(&white_balance(&pixel(0.1, 0.1, 0.1), ORACLE_WB_GAINS).unwrap());
        let hi = values(&white_balance(&pixel(0.2, 0.2, 0.2), ORACLE_WB_GAINS).unwrap());
        assert!(lo.iter().zip(&hi).all(|(a, b)| a < b));
    }
}
