//! Affine coupling block.
//!
//! With the channels of `m` split into `m1` (first `d`) and `m2` (the rest):
//!
//! ```text
//! forward:  n1 = m1 + r(m2)
//!           n2 = m2 ⊙ exp(ŝ(n1)) + t(n1)
//! inverse:  m2 = (n2 - t(n1)) ⊙ exp(-ŝ(n1))
//!           m1 = n1 - r(m2)
//! ```
//!
//! `ŝ = α·tanh(s/α)` bounds the log-scale to `[-α, α]`. Scale and
//! translation condition on the updated half `n1`, which is what makes the
//! inverse exact.

use super::subnet::{SubNet, SubNetCache, SubNetGrads};
use crate::error::{Error, Result};
use crate::prng::Prng;
use crate::tensor::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct CouplingBlock<T: Real = f64> {
    pub(crate) channels: usize,
    pub(crate) split: usize,
    pub(crate) alpha: T,
    pub(crate) r: SubNet<T>,
    pub(crate) s: SubNet<T>,
    pub(crate) t: SubNet<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct CouplingGrads {
    pub r: SubNetGrads,
    pub s: SubNetGrads,
    pub t: SubNetGrads,
}

pub(crate) struct ForwardCache {
    m2: Vec<f64>,
    r: SubNetCache,
    s: SubNetCache,
    t: SubNetCache,
    tanh: Vec<f64>,
    scale: Vec<f64>,
}

pub(crate) struct InverseCache {
    m2: Vec<f64>,
    r: SubNetCache,
    s: SubNetCache,
    t: SubNetCache,
    tanh: Vec<f64>,
    inv_scale: Vec<f64>,
}

fn check_finite<T: Real>(v: &[T], block: usize, what: &str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::numeric(Some(block), format!("non-finite {what}")))
    }
}

impl CouplingBlock<f64> {
    pub fn new(channels: usize, split: usize, hidden: usize, alpha: f64, rng: &mut Prng) -> Result<Self> {
        Self::check_shape(channels, split, alpha)?;
        let rest = channels - split;
        Ok(Self {
            channels,
            split,
            alpha,
            r: SubNet::init(rest, hidden, split, rng),
            s: SubNet::init(split, hidden, rest, rng),
            t: SubNet::init(split, hidden, rest, rng),
        })
    }

    /// Block whose subnets all have non-zero final stages.
    pub fn random(
        channels: usize,
        split: usize,
        hidden: usize,
        alpha: f64,
        scale: f64,
        rng: &mut Prng,
    ) -> Result<Self> {
        Self::check_shape(channels, split, alpha)?;
        let rest = channels - split;
        Ok(Self {
            channels,
            split,
            alpha,
            r: SubNet::random(rest, hidden, split, scale, rng),
            s: SubNet::random(split, hidden, rest, scale, rng),
            t: SubNet::random(split, hidden, rest, scale, rng),
        })
    }

    /// Builds a block from explicit subnets (`r`: `D-d → d`, `s`/`t`: `d → D-d`).
    pub fn from_parts(alpha: f64, r: SubNet<f64>, s: SubNet<f64>, t: SubNet<f64>) -> Result<Self> {
        let split = r.out_ch;
        let channels = split + r.in_ch;
        Self::check_shape(channels, split, alpha)?;
        let rest = channels - split;
        if s.in_ch != split || t.in_ch != split || s.out_ch != rest || t.out_ch != rest {
            return Err(Error::Dimension("subnet channels do not match the partition".into()));
        }
        Ok(Self { channels, split, alpha, r, s, t })
    }

    fn check_shape(channels: usize, split: usize, alpha: f64) -> Result<()> {
        if split == 0 || split >= channels {
            return Err(Error::Parameter(format!(
                "partition index {split} must satisfy 0 < d < {channels}"
            )));
        }
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::Parameter("clamp amplitude must be positive".into()));
        }
        Ok(())
    }

    pub(crate) fn forward_cached(
        &self,
        m: &[f64],
        h: usize,
        w: usize,
        block: usize,
    ) -> Result<(Vec<f64>, ForwardCache)> {
        let hw = h * w;
        let (m1, m2) = m.split_at(self.split * hw);
        let (rv, r) = self.r.forward_cached(m2, h, w);
        let n1: Vec<f64> = m1.iter().zip(&rv).map(|(a, b)| a + b).collect();
        let (sv, s) = self.s.forward_cached(&n1, h, w);
        let (tv, t) = self.t.forward_cached(&n1, h, w);
        let tanh: Vec<f64> = sv.iter().map(|&v| (v / self.alpha).tanh()).collect();
        let scale: Vec<f64> = tanh.iter().map(|&th| (self.alpha * th).exp()).collect();
        let mut n = n1;
        n.extend(m2.iter().zip(&scale).zip(&tv).map(|((x, e), t)| x * e + t));
        check_finite(&n, block, "coupling output")?;
        let cache = ForwardCache { m2: m2.to_vec(), r, s, t, tanh, scale };
        Ok((n, cache))
    }

    /// Reverse-mode step through [`Self::forward_cached`]: given `∂L/∂n`,
    /// accumulates parameter gradients and returns `∂L/∂m`.
    pub(crate) fn backward_forward(
        &self,
        cache: &ForwardCache,
        gn: &[f64],
        h: usize,
        w: usize,
        grads: &mut CouplingGrads,
    ) -> Vec<f64> {
        let hw = h * w;
        let (gn1, gn2) = gn.split_at(self.split * hw);
        let mut gm2: Vec<f64> = gn2.iter().zip(&cache.scale).map(|(g, e)| g * e).collect();
        // ∂ŝ/∂s = 1 - tanh²
        let gs: Vec<f64> = gn2
            .iter()
            .zip(&cache.m2)
            .zip(&cache.scale)
            .zip(&cache.tanh)
            .map(|(((g, x), e), th)| g * x * e * (1.0 - th * th))
            .collect();
        let mut gn1_total = gn1.to_vec();
        for (a, b) in gn1_total.iter_mut().zip(self.s.backward(&cache.s, &gs, h, w, &mut grads.s)) {
            *a += b;
        }
        for (a, b) in gn1_total.iter_mut().zip(self.t.backward(&cache.t, gn2, h, w, &mut grads.t)) {
            *a += b;
        }
        for (a, b) in gm2.iter_mut().zip(self.r.backward(&cache.r, &gn1_total, h, w, &mut grads.r)) {
            *a += b;
        }
        let mut gm = gn1_total;
        gm.extend(gm2);
        gm
    }

    pub(crate) fn inverse_cached(
        &self,
        n: &[f64],
        h: usize,
        w: usize,
        block: usize,
    ) -> Result<(Vec<f64>, InverseCache)> {
        let hw = h * w;
        let (n1, n2) = n.split_at(self.split * hw);
        let (sv, s) = self.s.forward_cached(n1, h, w);
        let (tv, t) = self.t.forward_cached(n1, h, w);
        let tanh: Vec<f64> = sv.iter().map(|&v| (v / self.alpha).tanh()).collect();
        let inv_scale: Vec<f64> = tanh.iter().map(|&th| (-self.alpha * th).exp()).collect();
        let m2: Vec<f64> = n2
            .iter()
            .zip(&tv)
            .zip(&inv_scale)
            .map(|((y, t), e)| (y - t) * e)
            .collect();
        let (rv, r) = self.r.forward_cached(&m2, h, w);
        let mut m: Vec<f64> = n1.iter().zip(&rv).map(|(a, b)| a - b).collect();
        m.extend_from_slice(&m2);
        check_finite(&m, block, "coupling inverse output")?;
        let cache = InverseCache { m2, r, s, t, tanh, inv_scale };
        Ok((m, cache))
    }

    /// Reverse-mode step through [`Self::inverse_cached`]: given `∂L/∂m`,
    /// accumulates parameter gradients and returns `∂L/∂n`.
    pub(crate) fn backward_inverse(
        &self,
        cache: &InverseCache,
        gm: &[f64],
        h: usize,
        w: usize,
        grads: &mut CouplingGrads,
    ) -> Vec<f64> {
        let hw = h * w;
        let (gm1, gm2) = gm.split_at(self.split * hw);
        let neg_gm1: Vec<f64> = gm1.iter().map(|g| -g).collect();
        let mut gm2_total = gm2.to_vec();
        for (a, b) in gm2_total.iter_mut().zip(self.r.backward(&cache.r, &neg_gm1, h, w, &mut grads.r)) {
            *a += b;
        }
        // m2 = (n2 - t) ⊙ e⁻ŝ
        let gn2: Vec<f64> = gm2_total.iter().zip(&cache.inv_scale).map(|(g, e)| g * e).collect();
        let gs: Vec<f64> = gm2_total
            .iter()
            .zip(&cache.m2)
            .zip(&cache.tanh)
            .map(|((g, x), th)| -g * x * (1.0 - th * th))
            .collect();
        let neg_gn2: Vec<f64> = gn2.iter().map(|g| -g).collect();
        let mut gn1 = gm1.to_vec();
        for (a, b) in gn1.iter_mut().zip(self.t.backward(&cache.t, &neg_gn2, h, w, &mut grads.t)) {
            *a += b;
        }
        for (a, b) in gn1.iter_mut().zip(self.s.backward(&cache.s, &gs, h, w, &mut grads.s)) {
            *a += b;
        }
        gn1.extend(gn2);
        gn1
    }

    pub(crate) fn zero_grads(&self) -> CouplingGrads {
        CouplingGrads {
            r: self.r.zero_grads(),
            s: self.s.zero_grads(),
            t: self.t.zero_grads(),
        }
    }
}

impl<T: Real> CouplingBlock<T> {
    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn split(&self) -> usize {
        self.split
    }

    pub fn alpha(&self) -> T {
        self.alpha
    }

    pub fn subnets(&self) -> [(&'static str, &SubNet<T>); 3] {
        [("r", &self.r), ("s", &self.s), ("t", &self.t)]
    }

    pub(crate) fn subnets_mut(&mut self) -> [&mut SubNet<T>; 3] {
        [&mut self.r, &mut self.s, &mut self.t]
    }

    pub fn param_count(&self) -> usize {
        self.r.param_count() + self.s.param_count() + self.t.param_count()
    }

    /// Clamped log-scale `α·tanh(s/α)`.
    pub fn clamped_log_scale(&self, n1: &[T], h: usize, w: usize) -> Vec<T> {
        self.s
            .forward(n1, h, w)
            .into_iter()
            .map(|v| self.alpha * (v / self.alpha).tanh())
            .collect()
    }

    pub fn forward(&self, m: &[T], h: usize, w: usize, block: usize) -> Result<Vec<T>> {
        self.check_len(m.len(), h * w, block)?;
        let hw = h * w;
        let (m1, m2) = m.split_at(self.split * hw);
        let rv = self.r.forward(m2, h, w);
        let n1: Vec<T> = m1.iter().zip(&rv).map(|(&a, &b)| a + b).collect();
        let ls = self.clamped_log_scale(&n1, h, w);
        let tv = self.t.forward(&n1, h, w);
        let mut n = n1;
        n.extend(m2.iter().zip(&ls).zip(&tv).map(|((&x, &s), &t)| x * s.exp() + t));
        check_finite(&n, block, "coupling output")?;
        Ok(n)
    }

    pub fn inverse(&self, n: &[T], h: usize, w: usize, block: usize) -> Result<Vec<T>> {
        self.check_len(n.len(), h * w, block)?;
        let hw = h * w;
        let (n1, n2) = n.split_at(self.split * hw);
        let ls = self.clamped_log_scale(n1, h, w);
        let tv = self.t.forward(n1, h, w);
        let m2: Vec<T> = n2
            .iter()
            .zip(&tv)
            .zip(&ls)
            .map(|((&y, &t), &s)| (y - t) * (-s).exp())
            .collect();
        let rv = self.r.forward(&m2, h, w);
        let mut m: Vec<T> = n1.iter().zip(&rv).map(|(&a, &b)| a - b).collect();
        m.extend(m2);
        check_finite(&m, block, "coupling inverse output")?;
        Ok(m)
    }

    fn check_len(&self, len: usize, hw: usize, block: usize) -> Result<()> {
        if len != self.channels * hw {
            return Err(Error::Dimension(format!(
                "block {block} expects {} channels, input has {}",
                self.channels,
                len as f64 / hw as f64
            )));
        }
        Ok(())
    }

    pub(crate) fn cast<U: Real>(&self) -> CouplingBlock<U> {
        CouplingBlock {
            channels: self.channels,
            split: self.split,
            alpha: U::from_real(self.alpha.as_f64()),
            r: self.r.cast(),
            s: self.s.cast(),
            t: self.t.cast(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Width-1 3×3 subnet computing `gain · x + bias` at the centre tap.
    fn affine_net(gain: f64, bias: f64) -> SubNet<f64> {
        // Hidden unit: relu(x + 10) keeps the ReLU in its linear region for
        // the small inputs used below; the output stage subtracts the offset.
        let mut w1 = vec![0.0; 9];
        w1[4] = 1.0;
        let mut w2 = vec![0.0; 9];
        w2[4] = gain;
        SubNet {
            in_ch: 1,
            hidden: 1,
            out_ch: 1,
            w1,
            b1: vec![10.0],
            w2,
            b2: vec![bias - 10.0 * gain],
        }
    }

    fn scalar_block() -> CouplingBlock<f64> {
        // r(u) = 2u, s ≡ 0, t(u) = u.
        CouplingBlock::from_parts(2.0, affine_net(2.0, 0.0), affine_net(0.0, 0.0), affine_net(1.0, 0.0))
            .unwrap()
    }

    #[test]
    fn scalar_forward_and_inverse() {
        let b = scalar_block();
        let n = b.forward(&[1.0, 2.0], 1, 1, 0).unwrap();
        assert!((n[0] - 5.0).abs() < 1e-12 && (n[1] - 7.0).abs() < 1e-12, "{n:?}");
        let m = b.inverse(&[5.0, 7.0], 1, 1, 0).unwrap();
        assert!((m[0] - 1.0).abs() < 1e-12 && (m[1] - 2.0).abs() < 1e-12, "{m:?}");
    }

    #[test]
    fn zero_subnets_give_identity() {
        let b = CouplingBlock::new(12, 6, 8, 2.0, &mut Prng::new(1)).unwrap();
        let x: Vec<f64> = (0..12 * 4).map(|i| (i as f64).sin()).collect();
        assert_eq!(b.forward(&x, 2, 2, 0).unwrap(), x);
        assert_eq!(b.inverse(&x, 2, 2, 0).unwrap(), x);
    }

    #[test]
    fn partition_bounds() {
        let mut rng = Prng::new(0);
        assert!(CouplingBlock::new(12, 0, 4, 2.0, &mut rng).is_err());
        assert!(CouplingBlock::new(12, 12, 4, 2.0, &mut rng).is_err());
        assert!(CouplingBlock::new(12, 6, 4, 0.0, &mut rng).is_err());
    }

    #[test]
    fn random_block_round_trip() {
        let mut rng = Prng::new(2);
        let b = CouplingBlock::random(12, 6, 8, 2.0, 1.0, &mut rng).unwrap();
        let x: Vec<f64> = (0..12 * 64).map(|_| rng.next_gaussian(1.0)).collect();
        let y = b.forward(&x, 8, 8, 0).unwrap();
        let back = b.inverse(&y, 8, 8, 0).unwrap();
        let err = x.iter().zip(&back).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-10, "{err}");
        assert!(y.iter().zip(&x).any(|(a, b)| a != b));
    }

    #[test]
    fn clamp_bounds_log_scale() {
        let mut rng = Prng::new(3);
        let b = CouplingBlock::random(4, 2, 4, 2.0, 500.0, &mut rng).unwrap();
        let n1: Vec<f64> = (0..2 * 9).map(|_| rng.next_gaussian(50.0)).collect();
        let ls = b.clamped_log_scale(&n1, 3, 3);
        assert!(ls.iter().all(|v| v.abs() <= 2.0));
        assert!(ls.iter().any(|v| v.abs() > 1.9));
    }

    #[test]
    fn cached_paths_match_plain() {
        let mut rng = Prng::new(4);
        let b = CouplingBlock::random(6, 3, 4, 2.0, 1.0, &mut rng).unwrap();
        let x: Vec<f64> = (0..6 * 12).map(|_| rng.next_gaussian(1.0)).collect();
        assert_eq!(b.forward(&x, 3, 4, 0).unwrap(), b.forward_cached(&x, 3, 4, 0).unwrap().0);
        assert_eq!(b.inverse(&x, 3, 4, 0).unwrap(), b.inverse_cached(&x, 3, 4, 0).unwrap().0);
    }

    #[test]
    fn non_finite_reports_block() {
        let b = scalar_block();
        match b.forward(&[f64::NAN, 0.0], 1, 1, 3) {
            Err(Error::Numeric { block: Some(3), .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }
}
