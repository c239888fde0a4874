//! Dense row-major tensors and the `FTEN` binary container.
//!
//! Layout: `"FTEN"`, version `0x01`, dtype byte (0 = f32, 1 = f64), ndim
//! byte, `ndim` little-endian u64 extents, then the little-endian payload.

use std::fmt::Debug;
use std::io::{Read, Write};

use num_traits::{Float, NumAssign};

use crate::error::{Error, Result};

pub const FTEN_MAGIC: &[u8; 4] = b"FTEN";
pub const FTEN_VERSION: u8 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DType {
    F32,
    F64,
}

impl DType {
    pub fn code(self) -> u8 {
        match self {
            DType::F32 => 0,
            DType::F64 => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(DType::F32),
            1 => Some(DType::F64),
            _ => None,
        }
    }

    pub fn size(self) -> usize {
        match self {
            DType::F32 => 4,
            DType::F64 => 8,
        }
    }
}

/// Floating-point element type usable by tensors and the flow kernels.
pub trait Real: Float + NumAssign + Debug + Default + Send + Sync + 'static {
    const DTYPE: DType;

    fn from_real(v: f64) -> Self;
    fn as_f64(self) -> f64;
    fn write_le(self, out: &mut Vec<u8>);
    fn read_le(bytes: &[u8]) -> Self;

    /// `c = alpha * op(a) * op(b) + beta * c` with explicit row/column
    /// strides (in elements) for every operand.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: &[Self],
        rsa: isize,
        csa: isize,
        b: &[Self],
        rsb: isize,
        csb: isize,
        beta: Self,
        c: &mut [Self],
        rsc: isize,
        csc: isize,
    );
}

impl Real for f32 {
    const DTYPE: DType = DType::F32;

    fn from_real(v: f64) -> Self {
        v as f32
    }

    fn as_f64(self) -> f64 {
        self as f64
    }

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes.try_into().expect("4 bytes"))
    }

    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: f32,
        a: &[f32],
        rsa: isize,
        csa: isize,
        b: &[f32],
        rsb: isize,
        csb: isize,
        beta: f32,
        c: &mut [f32],
        rsc: isize,
        csc: isize,
    ) {
        check_gemm_bounds(m, k, n, a.len(), rsa, csa, b.len(), rsb, csb, c.len(), rsc, csc);
        // SAFETY: every operand extent was checked against its slice above.
        unsafe {
            matrixmultiply::sgemm(
                m,
                k,
                n,
                alpha,
                a.as_ptr(),
                rsa,
                csa,
                b.as_ptr(),
                rsb,
                csb,
                beta,
                c.as_mut_ptr(),
                rsc,
                csc,
            )
        }
    }
}

impl Real for f64 {
    const DTYPE: DType = DType::F64;

    fn from_real(v: f64) -> Self {
        v
    }

    fn as_f64(self) -> f64 {
        self
    }

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes.try_into().expect("8 bytes"))
    }

    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: f64,
        a: &[f64],
        rsa: isize,
        csa: isize,
        b: &[f64],
        rsb: isize,
        csb: isize,
        beta: f64,
        c: &mut [f64],
        rsc: isize,
        csc: isize,
    ) {
        check_gemm_bounds(m, k, n, a.len(), rsa, csa, b.len(), rsb, csb, c.len(), rsc, csc);
        // SAFETY: every operand extent was checked against its slice above.
        unsafe {
            matrixmultiply::dgemm(
                m,
                k,
                n,
                alpha,
                a.as_ptr(),
                rsa,
                csa,
                b.as_ptr(),
                rsb,
                csb,
                beta,
                c.as_mut_ptr(),
                rsc,
                csc,
            )
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn check_gemm_bounds(
    m: usize,
    k: usize,
    n: usize,
    alen: usize,
    rsa: isize,
    csa: isize,
    blen: usize,
    rsb: isize,
    csb: isize,
    clen: usize,
    rsc: isize,
    csc: isize,
) {
    let extent = |rows: usize, cols: usize, rs: isize, cs: isize| {
        assert!(rs >= 0 && cs >= 0, "negative strides are not supported");
        if rows == 0 || cols == 0 {
            0
        } else {
            (rows - 1) * rs as usize + (cols - 1) * cs as usize + 1
        }
    };
    assert!(extent(m, k, rsa, csa) <= alen, "gemm: A out of bounds");
    assert!(extent(k, n, rsb, csb) <= blen, "gemm: B out of bounds");
    assert!(extent(m, n, rsc, csc) <= clen, "gemm: C out of bounds");
}

/// Row-major dense tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T = f64> {
    dims: Vec<usize>,
    data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn new(dims: Vec<usize>, data: Vec<T>) -> Result<Self> {
        let len: usize = dims.iter().product();
        if len != data.len() {
            return Err(Error::Dimension(format!(
                "dims {dims:?} need {len} elements, got {}",
                data.len()
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn zeros(dims: Vec<usize>) -> Self {
        let len = dims.iter().product();
        Self {
            dims,
            data: vec![T::zero(); len],
        }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn cast<U: Real>(&self) -> Tensor<U> {
        Tensor {
            dims: self.dims.clone(),
            data: self.data.iter().map(|&v| U::from_real(v.as_f64())).collect(),
        }
    }

    pub fn max_abs_diff(&self, other: &Tensor<T>) -> f64 {
        assert_eq!(self.dims, other.dims, "shape mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a.as_f64() - b.as_f64()).abs())
            .fold(0.0, f64::max)
    }

    /// Encodes the tensor as an `FTEN` blob.
    pub fn to_ften(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(7 + 8 * self.dims.len() + T::DTYPE.size() * self.len());
        out.extend_from_slice(FTEN_MAGIC);
        out.push(FTEN_VERSION);
        out.push(T::DTYPE.code());
        out.push(u8::try_from(self.dims.len()).expect("at most 255 dimensions"));
        for &d in &self.dims {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &v in &self.data {
            v.write_le(&mut out);
        }
        out
    }

    pub fn write_ften<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(&self.to_ften())?;
        Ok(())
    }

    /// Decodes one `FTEN` blob from the front of `bytes`, returning the
    /// tensor and the number of bytes consumed. Real32 payloads are widened
    /// (or real64 narrowed) to `T`.
    pub fn from_ften(bytes: &[u8]) -> Result<(Self, usize)> {
        let need = |pos: usize, n: usize, what: &str| -> Result<()> {
            if bytes.len() < pos + n {
                Err(Error::parse(bytes.len(), format!("truncated tensor: missing {what}")))
            } else {
                Ok(())
            }
        };
        need(0, 7, "header")?;
        if &bytes[..4] != FTEN_MAGIC {
            return Err(Error::parse(0, "bad tensor magic"));
        }
        if bytes[4] != FTEN_VERSION {
            return Err(Error::parse(4, format!("unsupported tensor version {}", bytes[4])));
        }
        let dtype = DType::from_code(bytes[5])
            .ok_or_else(|| Error::parse(5, format!("unknown dtype {}", bytes[5])))?;
        let ndim = bytes[6] as usize;
        let mut pos = 7;
        need(pos, 8 * ndim, "extents")?;
        let mut dims = Vec::with_capacity(ndim);
        let mut len: usize = 1;
        for _ in 0..ndim {
            let d = u64::from_le_bytes(bytes[pos..pos + 8].try_into().unwrap());
            let d = usize::try_from(d).map_err(|_| Error::parse(pos, "extent overflow"))?;
            len = len
                .checked_mul(d)
                .ok_or_else(|| Error::parse(pos, "element count overflow"))?;
            dims.push(d);
            pos += 8;
        }
        let size = dtype.size();
        let payload = len
            .checked_mul(size)
            .ok_or_else(|| Error::parse(pos, "payload size overflow"))?;
        need(pos, payload, "payload")?;
        let data = bytes[pos..pos + payload]
            .chunks_exact(size)
            .map(|c| match dtype {
                DType::F32 => T::from_real(f32::read_le(c) as f64),
                DType::F64 => T::from_real(f64::read_le(c)),
            })
            .collect();
        Ok((Self { dims, data }, pos + payload))
    }

    pub fn read_ften<R: Read>(mut r: R) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        let (t, used) = Self::from_ften(&bytes)?;
        if used != bytes.len() {
            return Err(Error::parse(used, "trailing bytes after tensor"));
        }
        Ok(t)
    }
}
