//! Space-to-channel rearrangement.
//!
//! Input channel `c` at `(y·q + dy, x·q + dx)` lands in output channel
//! `c·q² + dy·q + dx` at `(y, x)`.

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

fn chw(t: &Tensor<impl Real>) -> Result<(usize, usize, usize)> {
    match *t.dims() {
        [c, h, w] => Ok((c, h, w)),
        ref d => Err(Error::Dimension(format!("expected a C×H×W tensor, got dims {d:?}"))),
    }
}

pub fn squeeze<T: Real>(x: &Tensor<T>, q: usize) -> Result<Tensor<T>> {
    let (c, h, w) = chw(x)?;
    if q == 0 || h % q != 0 || w % q != 0 {
        return Err(Error::Dimension(format!(
            "squeeze factor {q} does not divide {h}x{w}"
        )));
    }
    let (ho, wo) = (h / q, w / q);
    let src = x.data();
    let mut out = Vec::with_capacity(src.len());
    for ch in 0..c {
        for dy in 0..q {
            for dx in 0..q {
                for y in 0..ho {
                    let row = &src[(ch * h + y * q + dy) * w..][..w];
                    out.extend((0..wo).map(|xx| row[xx * q + dx]));
                }
            }
        }
    }
    Tensor::new(vec![c * q * q, ho, wo], out)
}

pub fn unsqueeze<T: Real>(x: &Tensor<T>, q: usize) -> Result<Tensor<T>> {
    let (cq, ho, wo) = chw(x)?;
    if q == 0 || cq % (q * q) != 0 {
        return Err(Error::Dimension(format!(
            "{cq} channels cannot be unsqueezed by factor {q}"
        )));
    }
    let (c, h, w) = (cq / (q * q), ho * q, wo * q);
    let src = x.data();
    let mut out = vec![T::zero(); src.len()];
    for ch in 0..c {
        for dy in 0..q {
            for dx in 0..q {
                let plane = &src[((ch * q + dy) * q + dx) * ho * wo..][..ho * wo];
                for y in 0..ho {
                    for xx in 0..wo {
                        out[(ch * h + y * q + dy) * w + xx * q + dx] = plane[y * wo + xx];
                    }
                }
            }
        }
    }
    Tensor::new(vec![c, h, w], out)
}
