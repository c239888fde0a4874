//! Binary PGM (`P5`) and PPM (`P6`) reading and writing.
//!
//! Bayer frames are written as
//! `P5\n# RAWPIPE CFA=<pattern> BITDEPTH=<b>\n<w> <h>\n<2^b - 1>\n` followed
//! by the samples, big-endian 2-byte when the maxval exceeds 255. RGB images
//! use `P6` with interleaved samples. Any maxval of the form `2^b - 1` with
//! `b` in `8..=16` is accepted on read.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::{check_bit_depth, max_code, BayerImage, CfaPattern, RgbImage};

/// Either image kind a netpbm file may hold.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyImage {
    Bayer(BayerImage),
    Rgb(RgbImage),
}

impl AnyImage {
    pub fn into_bayer(self) -> Result<BayerImage> {
        match self {
            AnyImage::Bayer(b) => Ok(b),
            AnyImage::Rgb(_) => Err(Error::Encoding {
                expected: "a single-plane PGM Bayer frame",
            }),
        }
    }

    pub fn into_rgb(self) -> Result<RgbImage> {
        match self {
            AnyImage::Rgb(r) => Ok(r),
            AnyImage::Bayer(_) => Err(Error::Encoding {
                expected: "a three-plane PPM image",
            }),
        }
    }
}

impl From<BayerImage> for AnyImage {
    fn from(b: BayerImage) -> Self {
        AnyImage::Bayer(b)
    }
}

impl From<RgbImage> for AnyImage {
    fn from(r: RgbImage) -> Self {
        AnyImage::Rgb(r)
    }
}

pub fn load_image(path: impl AsRef<Path>) -> Result<AnyImage> {
    decode(&fs::read(path)?)
}

pub fn save_image(path: impl AsRef<Path>, image: &AnyImage) -> Result<()> {
    let bytes = match image {
        AnyImage::Bayer(b) => encode_pgm(b),
        AnyImage::Rgb(r) => encode_ppm(r)?,
    };
    fs::write(path, bytes)?;
    Ok(())
}

pub fn encode_pgm(image: &BayerImage) -> Vec<u8> {
    let header = format!(
        "P5\n# RAWPIPE CFA={} BITDEPTH={}\n{} {}\n{}\n",
        image.pattern(),
        image.bit_depth(),
        image.width(),
        image.height(),
        max_code(image.bit_depth())
    );
    let mut out = header.into_bytes();
    write_samples(&mut out, image.bit_depth(), image.data().iter().copied());
    out
}

/// Writes integer-code RGB images; unit-real images must be quantized with
/// [`RgbImage::to_codes`] first.
pub fn encode_ppm(image: &RgbImage) -> Result<Vec<u8>> {
    let planes = image.code_planes()?;
    let bit_depth = image.bit_depth().expect("integer codes carry a bit depth");
    let header = format!(
        "P6\n{} {}\n{}\n",
        image.width(),
        image.height(),
        max_code(bit_depth)
    );
    let mut out = header.into_bytes();
    let interleaved = (0..image.len()).flat_map(|i| planes.iter().map(move |p| p[i]));
    write_samples(&mut out, bit_depth, interleaved);
    Ok(out)
}

fn write_samples(out: &mut Vec<u8>, bit_depth: u8, samples: impl Iterator<Item = u16>) {
    if bit_depth > 8 {
        for s in samples {
            out.extend_from_slice(&s.to_be_bytes());
        }
    } else {
        out.extend(samples.map(|s| s as u8));
    }
}

struct Header {
    magic: [u8; 2],
    width: usize,
    height: usize,
    bit_depth: u8,
    pattern: Option<CfaPattern>,
    comment_depth: Option<(usize, u8)>,
    payload_start: usize,
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    pattern: Option<CfaPattern>,
    comment_depth: Option<(usize, u8)>,
}

impl Cursor<'_> {
    /// Skips whitespace and `#` comments, harvesting `RAWPIPE` metadata.
    fn skip_space(&mut self) -> Result<()> {
        while self.pos < self.bytes.len() {
            let b = self.bytes[self.pos];
            if b.is_ascii_whitespace() {
                self.pos += 1;
            } else if b == b'#' {
                let start = self.pos;
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
                self.comment(start)?;
            } else {
                break;
            }
        }
        Ok(())
    }

    fn comment(&mut self, start: usize) -> Result<()> {
        let text = String::from_utf8_lossy(&self.bytes[start + 1..self.pos]);
        let mut words = text.split_whitespace();
        if words.next() != Some("RAWPIPE") {
            return Ok(());
        }
        for word in words {
            if let Some(v) = word.strip_prefix("CFA=") {
                self.pattern = Some(v.parse().map_err(|_| {
                    Error::parse(start, format!("unknown CFA pattern {v:?}"))
                })?);
            } else if let Some(v) = word.strip_prefix("BITDEPTH=") {
                let b = v
                    .parse::<u8>()
                    .map_err(|_| Error::parse(start, format!("bad bit depth {v:?}")))?;
                self.comment_depth = Some((start, b));
            }
        }
        Ok(())
    }

    fn number(&mut self, what: &str) -> Result<(usize, usize)> {
        self.skip_space()?;
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::parse(start, format!("expected {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .unwrap()
            .parse()
            .map(|v| (v, start))
            .map_err(|_| Error::parse(start, format!("{what} out of range")))
    }
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    if bytes.len() < 2 {
        return Err(Error::parse(0, "missing magic number"));
    }
    let magic = [bytes[0], bytes[1]];
    if &magic != b"P5" && &magic != b"P6" {
        return Err(Error::parse(0, "expected binary PGM (P5) or PPM (P6)"));
    }
    let mut c = Cursor {
        bytes,
        pos: 2,
        pattern: None,
        comment_depth: None,
    };
    let (width, _) = c.number("width")?;
    let (height, _) = c.number("height")?;
    let (maxval, maxval_at) = c.number("maxval")?;
    let bit_depth = (maxval + 1)
        .checked_ilog2()
        .filter(|&b| (1usize << b) == maxval + 1)
        .and_then(|b| u8::try_from(b).ok())
        .filter(|&b| check_bit_depth(b).is_ok())
        .ok_or_else(|| Error::parse(maxval_at, format!("unsupported maxval {maxval}")))?;
    match c.bytes.get(c.pos) {
        Some(b) if b.is_ascii_whitespace() => c.pos += 1,
        _ => return Err(Error::parse(c.pos, "expected whitespace after maxval")),
    }
    Ok(Header {
        magic,
        width,
        height,
        bit_depth,
        pattern: c.pattern,
        comment_depth: c.comment_depth,
        payload_start: c.pos,
    })
}

/// Parses a PGM or PPM byte stream.
pub fn decode(bytes: &[u8]) -> Result<AnyImage> {
    let h = parse_header(bytes)?;
    if let Some((at, b)) = h.comment_depth {
        if b != h.bit_depth {
            return Err(Error::parse(
                at,
                format!("BITDEPTH={b} disagrees with maxval {}", max_code(h.bit_depth)),
            ));
        }
    }
    let channels = if &h.magic == b"P5" { 1 } else { 3 };
    let sample_bytes = if h.bit_depth > 8 { 2 } else { 1 };
    let count = h
        .width
        .checked_mul(h.height)
        .and_then(|n| n.checked_mul(channels))
        .ok_or_else(|| Error::parse(2, "image dimensions overflow"))?;
    let payload = &bytes[h.payload_start..];
    if payload.len() < count * sample_bytes {
        return Err(Error::parse(
            bytes.len(),
            format!(
                "truncated payload: {} of {} bytes",
                payload.len(),
                count * sample_bytes
            ),
        ));
    }
    let max = max_code(h.bit_depth);
    let mut samples = Vec::with_capacity(count);
    for i in 0..count {
        let s = if sample_bytes == 2 {
            u16::from_be_bytes([payload[2 * i], payload[2 * i + 1]])
        } else {
            payload[i] as u16
        };
        if s as u32 > max {
            return Err(Error::parse(
                h.payload_start + i * sample_bytes,
                format!("sample {s} exceeds maxval {max}"),
            ));
        }
        samples.push(s);
    }
    if channels == 1 {
        let pattern = h.pattern.unwrap_or_default();
        BayerImage::new(h.width, h.height, h.bit_depth, pattern, samples).map(AnyImage::Bayer)
    } else {
        let mut planes = [
            Vec::with_capacity(count / 3),
            Vec::with_capacity(count / 3),
            Vec::with_capacity(count / 3),
        ];
        for px in samples.chunks_exact(3) {
            for (plane, &s) in planes.iter_mut().zip(px) {
                plane.push(s);
            }
        }
        RgbImage::from_codes(h.width, h.height, h.bit_depth, planes).map(AnyImage::Rgb)
    }
}
