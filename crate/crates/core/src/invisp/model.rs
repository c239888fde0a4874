use super::coupling::{CouplingBlock, CouplingGrads, ForwardCache, InverseCache};
use super::mix::MixMatrix;
use super::squeeze::{squeeze, unsqueeze};
use crate::error::{Error, Result};
use crate::image::RgbImage;
use crate::prng::Prng;
use crate::tensor::{Real, Tensor};

pub const IMAGE_CHANNELS: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    /// Space-to-channel factor `q`; the flow runs on `3q²` channels.
    pub squeeze: usize,
    pub blocks: usize,
    pub hidden: usize,
    /// Coupling partition index; `None` means half the channels.
    pub split: Option<usize>,
    pub alpha: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            squeeze: 2,
            blocks: 4,
            hidden: 32,
            split: None,
            alpha: 2.0,
        }
    }
}

impl ModelConfig {
    pub fn channels(&self) -> usize {
        IMAGE_CHANNELS * self.squeeze * self.squeeze
    }

    pub fn split(&self) -> usize {
        self.split.unwrap_or(self.channels() / 2)
    }
}

/// Where a model came from; persisted in checkpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct Provenance {
    pub seed: u64,
    pub step: u64,
    pub lambda: f64,
}

/// Invertible ISP: squeeze, then `K` × (channel mix, affine coupling),
/// then unsqueeze.
#[derive(Debug, Clone, PartialEq)]
pub struct InvIspModel<T: Real = f64> {
    pub(crate) config: ModelConfig,
    pub(crate) mixes: Vec<MixMatrix<T>>,
    pub(crate) couplings: Vec<CouplingBlock<T>>,
    pub provenance: Provenance,
}

pub(crate) struct ForwardTape {
    h: usize,
    w: usize,
    mix_inputs: Vec<Vec<f64>>,
    caches: Vec<ForwardCache>,
}

pub(crate) struct InverseTape {
    h: usize,
    w: usize,
    mix_inputs: Vec<Vec<f64>>,
    caches: Vec<InverseCache>,
}

/// Gradient accumulators mirroring the model's parameters.
pub(crate) struct ModelGrads {
    weight: Vec<Vec<f64>>,
    inverse: Vec<Vec<f64>>,
    couplings: Vec<CouplingGrads>,
}

/// A named, contiguous run of entries in the flattened parameter vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamGroup {
    pub name: String,
    pub start: usize,
    pub len: usize,
}

impl InvIspModel<f64> {
    /// Fresh model: orthonormal mixing matrices and coupling subnets whose
    /// final stages are zero, so every coupling starts as the identity.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        Self::build(config, seed, None)
    }

    /// Model with non-zero final subnet stages (scaled by `scale`).
    pub fn random(config: ModelConfig, seed: u64, scale: f64) -> Result<Self> {
        Self::build(config, seed, Some(scale))
    }

    fn build(config: ModelConfig, seed: u64, scale: Option<f64>) -> Result<Self> {
        if config.squeeze == 0 || config.blocks == 0 || config.hidden == 0 {
            return Err(Error::Parameter(
                "squeeze factor, block count and hidden width must be positive".into(),
            ));
        }
        let (d, split) = (config.channels(), config.split());
        let mut rng = Prng::new(seed);
        let mut mixes = Vec::with_capacity(config.blocks);
        let mut couplings = Vec::with_capacity(config.blocks);
        for _ in 0..config.blocks {
            mixes.push(MixMatrix::random_orthonormal(d, &mut rng));
            couplings.push(match scale {
                None => CouplingBlock::new(d, split, config.hidden, config.alpha, &mut rng)?,
                Some(s) => CouplingBlock::random(d, split, config.hidden, config.alpha, s, &mut rng)?,
            });
        }
        Ok(Self {
            config,
            mixes,
            couplings,
            provenance: Provenance {
                seed,
                step: 0,
                lambda: 1.0,
            },
        })
    }

    pub fn from_parts(
        config: ModelConfig,
        mixes: Vec<MixMatrix<f64>>,
        couplings: Vec<CouplingBlock<f64>>,
        provenance: Provenance,
    ) -> Result<Self> {
        let d = config.channels();
        if mixes.len() != config.blocks || couplings.len() != config.blocks {
            return Err(Error::Dimension(format!("expected {} blocks", config.blocks)));
        }
        if mixes.iter().any(|m| m.dim() != d)
            || couplings.iter().any(|c| c.channels() != d || c.split() != config.split())
        {
            return Err(Error::Dimension(format!("every block must act on {d} channels")));
        }
        Ok(Self { config, mixes, couplings, provenance })
    }

    /// Raw → RGB on a unit-real image. Values are not clamped.
    pub fn model_forward(&self, raw: &RgbImage) -> Result<RgbImage> {
        tensor_to_rgb(&self.forward(&rgb_to_tensor(raw))?)
    }

    /// RGB → raw on a unit-real image. Values are not clamped.
    pub fn model_inverse(&self, rgb: &RgbImage) -> Result<RgbImage> {
        tensor_to_rgb(&self.inverse(&rgb_to_tensor(rgb))?)
    }

    pub fn param_count(&self) -> usize {
        self.param_groups().iter().map(|g| g.len).sum()
    }

    /// Parameter layout: per block, the mixing matrix, then the `r`, `s`
    /// and `t` subnets (`w1, b1, w2, b2` each).
    pub fn param_groups(&self) -> Vec<ParamGroup> {
        let mut groups = Vec::new();
        let mut start = 0;
        let mut push = |name: String, len: usize| {
            groups.push(ParamGroup { name, start, len });
            start += len;
        };
        for (k, (mix, coupling)) in self.mixes.iter().zip(&self.couplings).enumerate() {
            push(format!("block{k}.W"), mix.weight().len());
            for (net_name, net) in coupling.subnets() {
                for (p_name, p) in net.params() {
                    push(format!("block{k}.{net_name}.{p_name}"), p.len());
                }
            }
        }
        groups
    }

    pub fn flatten_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for (mix, coupling) in self.mixes.iter().zip(&self.couplings) {
            out.extend_from_slice(mix.weight());
            for (_, net) in coupling.subnets() {
                for (_, p) in net.params() {
                    out.extend_from_slice(p);
                }
            }
        }
        out
    }

    /// Loads a flattened parameter vector, refreshing each mixing matrix's
    /// inverse. Fails with a singularity error if any `|det W|` collapses.
    pub fn assign_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::Dimension(format!(
                "{} parameters for a model with {}",
                params.len(),
                self.param_count()
            )));
        }
        let mut pos = 0;
        let mut take = |n: usize| {
            let s = &params[pos..pos + n];
            pos += n;
            s
        };
        for (mix, coupling) in self.mixes.iter_mut().zip(&mut self.couplings) {
            let n = mix.weight().len();
            mix.set_weight(take(n).to_vec())?;
            for net in coupling.subnets_mut() {
                for p in net.params_mut() {
                    let n = p.len();
                    p.copy_from_slice(take(n));
                }
            }
        }
        Ok(())
    }

    pub(crate) fn forward_taped(&self, x: &Tensor<f64>) -> Result<(Tensor<f64>, ForwardTape)> {
        let z = self.squeezed(x)?;
        let (h, w) = (z.dims()[1], z.dims()[2]);
        let hw = h * w;
        let mut cur = z.into_data();
        let mut mix_inputs = Vec::with_capacity(self.config.blocks);
        let mut caches = Vec::with_capacity(self.config.blocks);
        for (k, (mix, coupling)) in self.mixes.iter().zip(&self.couplings).enumerate() {
            let mixed = mix.forward(&cur, hw);
            mix_inputs.push(cur);
            let (next, cache) = coupling.forward_cached(&mixed, h, w, k)?;
            caches.push(cache);
            cur = next;
        }
        let out = self.unsqueezed(cur, h, w)?;
        Ok((out, ForwardTape { h, w, mix_inputs, caches }))
    }

    pub(crate) fn backward_forward(&self, tape: &ForwardTape, gout: &Tensor<f64>, grads: &mut ModelGrads) {
        let (h, w) = (tape.h, tape.w);
        let hw = h * w;
        let mut g = squeeze(gout, self.config.squeeze).expect("shape checked by forward").into_data();
        for k in (0..self.config.blocks).rev() {
            let g_mixed = self.couplings[k].backward_forward(&tape.caches[k], &g, h, w, &mut grads.couplings[k]);
            let n = self.config.channels();
            MixMatrix::outer_accumulate(&g_mixed, &tape.mix_inputs[k], n, hw, &mut grads.weight[k]);
            g = MixMatrix::transpose_apply(self.mixes[k].weight(), n, &g_mixed, hw);
        }
    }

    pub(crate) fn inverse_taped(&self, y: &Tensor<f64>) -> Result<(Tensor<f64>, InverseTape)> {
        let z = self.squeezed(y)?;
        let (h, w) = (z.dims()[1], z.dims()[2]);
        let hw = h * w;
        let mut cur = z.into_data();
        let mut mix_inputs = vec![Vec::new(); self.config.blocks];
        let mut caches: Vec<Option<InverseCache>> = (0..self.config.blocks).map(|_| None).collect();
        for k in (0..self.config.blocks).rev() {
            let (m, cache) = self.couplings[k].inverse_cached(&cur, h, w, k)?;
            caches[k] = Some(cache);
            cur = self.mixes[k].inverse_apply(&m, hw);
            mix_inputs[k] = m;
        }
        let out = self.unsqueezed(cur, h, w)?;
        let caches = caches.into_iter().map(|c| c.expect("every block visited")).collect();
        Ok((out, InverseTape { h, w, mix_inputs, caches }))
    }

    pub(crate) fn backward_inverse(&self, tape: &InverseTape, gout: &Tensor<f64>, grads: &mut ModelGrads) {
        let (h, w) = (tape.h, tape.w);
        let hw = h * w;
        let n = self.config.channels();
        let mut g = squeeze(gout, self.config.squeeze).expect("shape checked by inverse").into_data();
        for k in 0..self.config.blocks {
            MixMatrix::outer_accumulate(&g, &tape.mix_inputs[k], n, hw, &mut grads.inverse[k]);
            let g_m = MixMatrix::transpose_apply(self.mixes[k].inverse(), n, &g, hw);
            g = self.couplings[k].backward_inverse(&tape.caches[k], &g_m, h, w, &mut grads.couplings[k]);
        }
    }

    pub(crate) fn zero_grads(&self) -> ModelGrads {
        let n = self.config.channels();
        ModelGrads {
            weight: vec![vec![0.0; n * n]; self.config.blocks],
            inverse: vec![vec![0.0; n * n]; self.config.blocks],
            couplings: self.couplings.iter().map(|c| c.zero_grads()).collect(),
        }
    }

    /// Flattens accumulated gradients in [`Self::param_groups`] order,
    /// folding gradients with respect to `W⁻¹` into `W`.
    pub(crate) fn flatten_grads(&self, grads: &ModelGrads) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for k in 0..self.config.blocks {
            let from_inv = self.mixes[k].inverse_grad_to_weight(&grads.inverse[k]);
            out.extend(grads.weight[k].iter().zip(&from_inv).map(|(a, b)| a + b));
            let c = &grads.couplings[k];
            for net in [&c.r, &c.s, &c.t] {
                for p in net.parts() {
                    out.extend_from_slice(p);
                }
            }
        }
        out
    }

    pub fn cast<U: Real>(&self) -> InvIspModel<U> {
        InvIspModel {
            config: self.config.clone(),
            mixes: self.mixes.iter().map(|m| m.cast()).collect(),
            couplings: self.couplings.iter().map(|c| c.cast()).collect(),
            provenance: self.provenance.clone(),
        }
    }
}

impl<T: Real> InvIspModel<T> {
    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn mixes(&self) -> &[MixMatrix<T>] {
        &self.mixes
    }

    pub fn couplings(&self) -> &[CouplingBlock<T>] {
        &self.couplings
    }

    fn squeezed(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        match x.dims() {
            [c, _, _] if *c == IMAGE_CHANNELS => squeeze(x, self.config.squeeze),
            d => Err(Error::Dimension(format!("expected a 3×H×W tensor, got {d:?}"))),
        }
    }

    fn unsqueezed(&self, data: Vec<T>, h: usize, w: usize) -> Result<Tensor<T>> {
        let t = Tensor::new(vec![self.config.channels(), h, w], data)?;
        unsqueeze(&t, self.config.squeeze)
    }

    /// Raw → RGB on a `3 × H × W` tensor.
    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let z = self.squeezed(x)?;
        let (h, w) = (z.dims()[1], z.dims()[2]);
        let mut cur = z.into_data();
        for (k, (mix, coupling)) in self.mixes.iter().zip(&self.couplings).enumerate() {
            cur = coupling.forward(&mix.forward(&cur, h * w), h, w, k)?;
        }
        self.unsqueezed(cur, h, w)
    }

    /// RGB → raw on a `3 × H × W` tensor; exact inverse of [`Self::forward`].
    pub fn inverse(&self, y: &Tensor<T>) -> Result<Tensor<T>> {
        let z = self.squeezed(y)?;
        let (h, w) = (z.dims()[1], z.dims()[2]);
        let mut cur = z.into_data();
        for k in (0..self.config.blocks).rev() {
            let m = self.couplings[k].inverse(&cur, h, w, k)?;
            cur = self.mixes[k].inverse_apply(&m, h * w);
        }
        self.unsqueezed(cur, h, w)
    }
}

/// Unit-real `3 × H × W` tensor from any RGB image.
pub fn rgb_to_tensor(img: &RgbImage) -> Tensor<f64> {
    let unit = img.to_unit();
    let planes = unit.unit_planes().expect("to_unit yields unit planes");
    let data = planes.iter().flatten().copied().collect();
    Tensor::new(vec![3, img.height(), img.width()], data).expect("three full planes")
}

pub fn tensor_to_rgb(t: &Tensor<f64>) -> Result<RgbImage> {
    let [3, h, w] = *t.dims() else {
        return Err(Error::Dimension(format!("expected a 3×H×W tensor, got {:?}", t.dims())));
    };
    let n = h * w;
    let d = t.data();
    RgbImage::from_unit(w, h, [d[..n].to_vec(), d[n..2 * n].to_vec(), d[2 * n..].to_vec()])
}
