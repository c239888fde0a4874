use super::conv::{col2im_add, conv_backward, conv_forward, im2col, TAPS};
use crate::prng::Prng;
use crate::tensor::Real;

/// Two 3×3 convolution stages with a ReLU between them.
#[derive(Debug, Clone, PartialEq)]
pub struct SubNet<T: Real = f64> {
    pub(crate) in_ch: usize,
    pub(crate) hidden: usize,
    pub(crate) out_ch: usize,
    pub(crate) w1: Vec<T>,
    pub(crate) b1: Vec<T>,
    pub(crate) w2: Vec<T>,
    pub(crate) b2: Vec<T>,
}

#[derive(Debug, Clone)]
pub(crate) struct SubNetCache {
    cols1: Vec<f64>,
    pre_act: Vec<f64>,
    cols2: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct SubNetGrads {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

impl SubNet<f64> {
    /// He-normal first stage, zero final stage: the net outputs exactly 0
    /// until training moves the final stage.
    pub fn init(in_ch: usize, hidden: usize, out_ch: usize, rng: &mut Prng) -> Self {
        let std = (2.0 / (in_ch * TAPS) as f64).sqrt();
        Self {
            in_ch,
            hidden,
            out_ch,
            w1: (0..hidden * in_ch * TAPS).map(|_| rng.next_gaussian(std)).collect(),
            b1: vec![0.0; hidden],
            w2: vec![0.0; out_ch * hidden * TAPS],
            b2: vec![0.0; out_ch],
        }
    }

    /// Every parameter drawn from `N(0, scale²)`-scaled fan-in normals;
    /// used to exercise non-trivial couplings.
    pub fn random(in_ch: usize, hidden: usize, out_ch: usize, scale: f64, rng: &mut Prng) -> Self {
        let s1 = (2.0 / (in_ch * TAPS) as f64).sqrt();
        let s2 = scale * (1.0 / (hidden * TAPS) as f64).sqrt();
        Self {
            in_ch,
            hidden,
            out_ch,
            w1: (0..hidden * in_ch * TAPS).map(|_| rng.next_gaussian(s1)).collect(),
            b1: (0..hidden).map(|_| rng.next_gaussian(0.1)).collect(),
            w2: (0..out_ch * hidden * TAPS).map(|_| rng.next_gaussian(s2)).collect(),
            b2: (0..out_ch).map(|_| rng.next_gaussian(0.1 * scale)).collect(),
        }
    }

    pub(crate) fn forward_cached(&self, x: &[f64], h: usize, w: usize) -> (Vec<f64>, SubNetCache) {
        let hw = h * w;
        let cols1 = im2col(x, self.in_ch, h, w);
        let pre_act = conv_forward(&cols1, &self.w1, &self.b1, self.in_ch, self.hidden, hw);
        let act: Vec<f64> = pre_act.iter().map(|&v| v.max(0.0)).collect();
        let cols2 = im2col(&act, self.hidden, h, w);
        let out = conv_forward(&cols2, &self.w2, &self.b2, self.hidden, self.out_ch, hw);
        (out, SubNetCache { cols1, pre_act, cols2 })
    }

    /// Accumulates parameter gradients into `grads` and returns the
    /// gradient with respect to the input.
    pub(crate) fn backward(
        &self,
        cache: &SubNetCache,
        gout: &[f64],
        h: usize,
        w: usize,
        grads: &mut SubNetGrads,
    ) -> Vec<f64> {
        let hw = h * w;
        let gcols2 = conv_backward(
            &cache.cols2,
            &self.w2,
            gout,
            self.hidden,
            self.out_ch,
            hw,
            &mut grads.w2,
            &mut grads.b2,
        );
        let mut gact = vec![0.0; self.hidden * hw];
        col2im_add(&gcols2, self.hidden, h, w, &mut gact);
        for (g, &z) in gact.iter_mut().zip(&cache.pre_act) {
            if z <= 0.0 {
                *g = 0.0;
            }
        }
        let gcols1 = conv_backward(
            &cache.cols1,
            &self.w1,
            &gact,
            self.in_ch,
            self.hidden,
            hw,
            &mut grads.w1,
            &mut grads.b1,
        );
        let mut gx = vec![0.0; self.in_ch * hw];
        col2im_add(&gcols1, self.in_ch, h, w, &mut gx);
        gx
    }

    pub(crate) fn zero_grads(&self) -> SubNetGrads {
        SubNetGrads {
            w1: vec![0.0; self.w1.len()],
            b1: vec![0.0; self.b1.len()],
            w2: vec![0.0; self.w2.len()],
            b2: vec![0.0; self.b2.len()],
        }
    }
}

impl<T: Real> SubNet<T> {
    pub fn forward(&self, x: &[T], h: usize, w: usize) -> Vec<T> {
        let hw = h * w;
        let cols1 = im2col(x, self.in_ch, h, w);
        let mut act = conv_forward(&cols1, &self.w1, &self.b1, self.in_ch, self.hidden, hw);
        for v in &mut act {
            *v = v.max(T::zero());
        }
        let cols2 = im2col(&act, self.hidden, h, w);
        conv_forward(&cols2, &self.w2, &self.b2, self.hidden, self.out_ch, hw)
    }

    pub fn in_channels(&self) -> usize {
        self.in_ch
    }

    pub fn out_channels(&self) -> usize {
        self.out_ch
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn param_count(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()
    }

    /// Parameter slices in canonical order: `w1, b1, w2, b2`.
    pub(crate) fn params(&self) -> [(&'static str, &[T]); 4] {
        [("w1", &self.w1), ("b1", &self.b1), ("w2", &self.w2), ("b2", &self.b2)]
    }

    pub(crate) fn params_mut(&mut self) -> [&mut Vec<T>; 4] {
        [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }

    pub(crate) fn cast<U: Real>(&self) -> SubNet<U> {
        let c = |v: &Vec<T>| v.iter().map(|&x| U::from_real(x.as_f64())).collect();
        SubNet {
            in_ch: self.in_ch,
            hidden: self.hidden,
            out_ch: self.out_ch,
            w1: c(&self.w1),
            b1: c(&self.b1),
            w2: c(&self.w2),
            b2: c(&self.b2),
        }
    }
}

impl SubNetGrads {
    pub(crate) fn parts(&self) -> [&[f64]; 4] {
        [&self.w1, &self.b1, &self.w2, &self.b2]
    }
}
