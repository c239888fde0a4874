//! Invertible per-pixel channel mixing (a 1×1 convolution).

use crate::error::{Error, Result};
use crate::prng::Prng;
use crate::tensor::Real;

pub const MIN_ABS_DET: f64 = 1e-12;
const INVERSE_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct MixMatrix<T: Real = f64> {
    dim: usize,
    weight: Vec<T>,
    inverse: Vec<T>,
    abs_det: f64,
}

/// Gauss–Jordan elimination with partial pivoting. Returns the inverse and
/// the determinant of a row-major `n × n` matrix.
pub fn invert(a: &[f64], n: usize) -> Result<(Vec<f64>, f64)> {
    assert_eq!(a.len(), n * n);
    let mut m = a.to_vec();
    let mut inv: Vec<f64> = (0..n * n).map(|i| if i % (n + 1) == 0 { 1.0 } else { 0.0 }).collect();
    let mut det = 1.0;
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| m[i * n + col].abs().total_cmp(&m[j * n + col].abs()))
            .expect("non-empty range");
        let p = m[pivot * n + col];
        if p == 0.0 || !p.is_finite() {
            return Err(Error::Singular { det: 0.0 });
        }
        if pivot != col {
            for k in 0..n {
                m.swap(pivot * n + k, col * n + k);
                inv.swap(pivot * n + k, col * n + k);
            }
            det = -det;
        }
        det *= p;
        let scale = 1.0 / p;
        for k in 0..n {
            m[col * n + k] *= scale;
            inv[col * n + k] *= scale;
        }
        for row in 0..n {
            if row == col {
                continue;
            }
            let f = m[row * n + col];
            if f != 0.0 {
                for k in 0..n {
                    m[row * n + k] -= f * m[col * n + k];
                    inv[row * n + k] -= f * inv[col * n + k];
                }
            }
        }
    }
    Ok((inv, det))
}

impl MixMatrix<f64> {
    pub fn new(weight: Vec<f64>, dim: usize) -> Result<Self> {
        if weight.len() != dim * dim {
            return Err(Error::Dimension(format!(
                "{} entries for a {dim}x{dim} mixing matrix",
                weight.len()
            )));
        }
        let (inverse, det) = invert(&weight, dim)?;
        let abs_det = det.abs();
        if abs_det.is_nan() || abs_det <= MIN_ABS_DET {
            return Err(Error::Singular { det });
        }
        let m = Self { dim, weight, inverse, abs_det };
        let err = m.inverse_residual();
        if err.is_nan() || err > INVERSE_TOLERANCE {
            return Err(Error::numeric(
                None,
                format!("mixing matrix too ill-conditioned: |W·W⁻¹ - I| = {err:e}"),
            ));
        }
        Ok(m)
    }

    pub fn identity(dim: usize) -> Self {
        let w = (0..dim * dim).map(|i| if i % (dim + 1) == 0 { 1.0 } else { 0.0 }).collect();
        Self::new(w, dim).expect("identity is invertible")
    }

    /// Orthonormal matrix from modified Gram–Schmidt on a seeded Gaussian
    /// matrix (the Q factor of its QR decomposition, sign-fixed so R has a
    /// positive diagonal).
    pub fn random_orthonormal(dim: usize, rng: &mut Prng) -> Self {
        loop {
            let g: Vec<f64> = (0..dim * dim).map(|_| rng.next_gaussian(1.0)).collect();
            // Orthonormalize columns of g.
            let mut q = vec![0.0; dim * dim];
            let mut ok = true;
            for j in 0..dim {
                let mut v: Vec<f64> = (0..dim).map(|i| g[i * dim + j]).collect();
                for k in 0..j {
                    let dot: f64 = (0..dim).map(|i| q[i * dim + k] * v[i]).sum();
                    for i in 0..dim {
                        v[i] -= dot * q[i * dim + k];
                    }
                }
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                if norm < 1e-8 {
                    ok = false;
                    break;
                }
                for i in 0..dim {
                    q[i * dim + j] = v[i] / norm;
                }
            }
            if ok {
                if let Ok(m) = Self::new(q, dim) {
                    return m;
                }
            }
        }
    }

    /// Replaces the weights, recomputing the cached inverse.
    pub fn set_weight(&mut self, weight: Vec<f64>) -> Result<()> {
        *self = Self::new(weight, self.dim)?;
        Ok(())
    }

    /// max |W·W⁻¹ − I|
    pub fn inverse_residual(&self) -> f64 {
        let n = self.dim;
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let v: f64 = (0..n).map(|k| self.weight[i * n + k] * self.inverse[k * n + j]).sum();
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((v - target).abs());
            }
        }
        worst
    }

    pub fn cast<U: Real>(&self) -> MixMatrix<U> {
        MixMatrix {
            dim: self.dim,
            weight: self.weight.iter().map(|&v| U::from_real(v)).collect(),
            inverse: self.inverse.iter().map(|&v| U::from_real(v)).collect(),
            abs_det: self.abs_det,
        }
    }

    /// Gradient of the loss with respect to `W` given the gradient with
    /// respect to `W⁻¹`: `-W⁻ᵀ · G · W⁻ᵀ`.
    pub(crate) fn inverse_grad_to_weight(&self, g_inv: &[f64]) -> Vec<f64> {
        let n = self.dim;
        let inv = &self.inverse;
        // tmp = W⁻ᵀ · G
        let mut tmp = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                tmp[i * n + j] = (0..n).map(|k| inv[k * n + i] * g_inv[k * n + j]).sum();
            }
        }
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                out[i * n + j] = -(0..n).map(|k| tmp[i * n + k] * inv[j * n + k]).sum::<f64>();
            }
        }
        out
    }
}

impl<T: Real> MixMatrix<T> {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn weight(&self) -> &[T] {
        &self.weight
    }

    pub fn inverse(&self) -> &[T] {
        &self.inverse
    }

    pub fn abs_det(&self) -> f64 {
        self.abs_det
    }

    fn apply(&self, m: &[T], x: &[T], hw: usize) -> Vec<T> {
        let n = self.dim;
        assert_eq!(x.len(), n * hw, "channel count does not match mixing matrix");
        let mut y = vec![T::zero(); n * hw];
        T::gemm(n, n, hw, T::one(), m, n as isize, 1, x, hw as isize, 1, T::zero(), &mut y, hw as isize, 1);
        y
    }

    /// `y = W x` at every pixel of a `D × hw` buffer.
    pub fn forward(&self, x: &[T], hw: usize) -> Vec<T> {
        self.apply(&self.weight, x, hw)
    }

    /// `x = W⁻¹ y` at every pixel.
    pub fn inverse_apply(&self, y: &[T], hw: usize) -> Vec<T> {
        self.apply(&self.inverse, y, hw)
    }

    /// `Mᵀ g` at every pixel, where `M` is `W` or `W⁻¹`.
    pub(crate) fn transpose_apply(m: &[T], n: usize, g: &[T], hw: usize) -> Vec<T> {
        let mut out = vec![T::zero(); n * hw];
        T::gemm(n, n, hw, T::one(), m, 1, n as isize, g, hw as isize, 1, T::zero(), &mut out, hw as isize, 1);
        out
    }

    /// Accumulates `g · xᵀ` (both `D × hw`) into `acc` (`D × D`).
    pub(crate) fn outer_accumulate(g: &[T], x: &[T], n: usize, hw: usize, acc: &mut [T]) {
        T::gemm(n, hw, n, T::one(), g, hw as isize, 1, x, 1, hw as isize, T::one(), acc, n as isize, 1);
    }
}
