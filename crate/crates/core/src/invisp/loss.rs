use super::model::InvIspModel;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// A training example: raw image and its ISP-rendered RGB, both `3 × H × W`
/// unit-real tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct Pair {
    pub raw: Tensor<f64>,
    pub rgb: Tensor<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossAndGrad {
    pub loss_fwd: f64,
    pub loss_inv: f64,
    pub loss_total: f64,
    /// Gradient of `loss_total`, laid out as
    /// [`InvIspModel::flatten_params`].
    pub grads: Vec<f64>,
}

fn check_batch(batch: &[Pair]) -> Result<usize> {
    if batch.is_empty() {
        return Err(Error::Parameter("empty batch".into()));
    }
    let mut n = 0;
    for p in batch {
        if p.raw.dims() != p.rgb.dims() {
            return Err(Error::Dimension(format!(
                "paired tensors differ: {:?} vs {:?}",
                p.raw.dims(),
                p.rgb.dims()
            )));
        }
        n += p.raw.len();
    }
    Ok(n)
}

fn sq_err(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `mean‖f(raw) − rgb‖² + λ·mean‖f⁻¹(rgb) − raw‖²` over every element of the
/// batch, without gradients.
pub fn loss(model: &InvIspModel, batch: &[Pair], lambda: f64) -> Result<(f64, f64, f64)> {
    let n = check_batch(batch)? as f64;
    let (mut fwd, mut inv) = (0.0, 0.0);
    for p in batch {
        fwd += sq_err(&model.forward(&p.raw)?, &p.rgb);
        inv += sq_err(&model.inverse(&p.rgb)?, &p.raw);
    }
    let (fwd, inv) = (fwd / n, inv / n);
    Ok((fwd, inv, fwd + lambda * inv))
}

/// Bidirectional L2 loss and its exact gradient by reverse-mode
/// accumulation through both the forward and the inverse flow.
///
/// Samples are processed and reduced in index order, so the result is
/// bit-reproducible.
pub fn loss_and_grad(model: &InvIspModel, batch: &[Pair], lambda: f64) -> Result<LossAndGrad> {
    let n = check_batch(batch)? as f64;
    let mut grads = model.zero_grads();
    let (mut fwd, mut inv) = (0.0, 0.0);
    for p in batch {
        let (y, tape) = model.forward_taped(&p.raw)?;
        fwd += sq_err(&y, &p.rgb);
        let gy: Vec<f64> = y.data().iter().zip(p.rgb.data()).map(|(a, b)| 2.0 * (a - b) / n).collect();
        model.backward_forward(&tape, &Tensor::new(y.dims().to_vec(), gy)?, &mut grads);
        drop(tape);

        if lambda != 0.0 {
            let (x, tape) = model.inverse_taped(&p.rgb)?;
            inv += sq_err(&x, &p.raw);
            let gx: Vec<f64> = x
                .data()
                .iter()
                .zip(p.raw.data())
                .map(|(a, b)| 2.0 * lambda * (a - b) / n)
                .collect();
            model.backward_inverse(&tape, &Tensor::new(x.dims().to_vec(), gx)?, &mut grads);
        } else {
            inv += sq_err(&model.inverse(&p.rgb)?, &p.raw);
        }
    }
    let (loss_fwd, loss_inv) = (fwd / n, inv / n);
    let loss_total = loss_fwd + lambda * loss_inv;
    if !loss_total.is_finite() {
        return Err(Error::numeric(None, format!("non-finite loss {loss_total}")));
    }
    Ok(LossAndGrad {
        loss_fwd,
        loss_inv,
        loss_total,
        grads: model.flatten_grads(&grads),
    })
}
