//! Fully connected two-class softmax head with negative log-likelihood loss.
//!
//! The per-sample loss is `-y*ln(f) - (1-y)*ln(1-f)` where `f` is the class-1
//! probability, averaged over the batch. Probabilities are clamped to
//! `[1e-12, 1 - 1e-12]` before the logs; clamping events are counted and
//! reported. The clamp guards the loss value only — the backward pass uses
//! the standard softmax gradient `(p - onehot) / n`, which is exact whenever
//! no clamp fired.

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor4};

pub const PROB_CLAMP: Real = 1e-12;

/// Dense layer weights (out_dim x in_dim) with bias, gradient and momentum
/// buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseParams {
    pub out_dim: usize,
    pub in_dim: usize,
    pub weights: Vec<Real>,
    pub bias: Vec<Real>,
    pub grad_w: Vec<Real>,
    pub grad_b: Vec<Real>,
    pub vel_w: Vec<Real>,
    pub vel_b: Vec<Real>,
    pub weight_decay: Real,
}

impl DenseParams {
    pub fn new(out_dim: usize, in_dim: usize) -> Self {
        DenseParams {
            out_dim,
            in_dim,
            weights: vec![0.0; out_dim * in_dim],
            bias: vec![0.0; out_dim],
            grad_w: vec![0.0; out_dim * in_dim],
            grad_b: vec![0.0; out_dim],
            vel_w: vec![0.0; out_dim * in_dim],
            vel_b: vec![0.0; out_dim],
            weight_decay: 0.0,
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad_w.iter_mut().for_each(|g| *g = 0.0);
        self.grad_b.iter_mut().for_each(|g| *g = 0.0);
    }
}

/// Result of the dense softmax head: row-major `(n, 2)` probabilities, the
/// batch-averaged loss, and how many probabilities hit the clamp.
#[derive(Debug, Clone)]
pub struct DenseSoftmaxOutput {
    pub probs: Vec<Real>,
    pub loss: Real,
    pub clamp_events: usize,
}

fn check_labels(labels: &[u8], n: usize) -> Result<()> {
    if labels.len() != n {
        return Err(Error::Dim(format!(
            "{} labels for batch of {n}",
            labels.len()
        )));
    }
    if let Some(bad) = labels.iter().find(|&&y| y > 1) {
        return Err(Error::Config(format!("label {bad} not in {{0, 1}}")));
    }
    Ok(())
}

/// Batch NLL from `(n, 2)` probability rows. Returns (loss, clamp events).
pub fn nll_from_probs(probs: &[Real], labels: &[u8]) -> Result<(Real, usize)> {
    let n = labels.len();
    if probs.len() != 2 * n {
        return Err(Error::Dim(format!(
            "{} probabilities for {n} labels",
            probs.len()
        )));
    }
    let mut total = 0.0;
    let mut clamps = 0;
    for (i, &y) in labels.iter().enumerate() {
        let f = probs[2 * i + 1];
        let clamped = f.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
        if clamped != f {
            clamps += 1;
        }
        let l = if y == 1 {
            -clamped.ln()
        } else {
            -(1.0 - clamped).ln()
        };
        total += l;
    }
    Ok((total / n as Real, clamps))
}

/// Flatten `(n, c, h, w)` features to `(n, c*h*w)`, apply the affine map and
/// a two-way softmax. Returns row-major `(n, 2)` probabilities.
pub fn dense_softmax(features: &Tensor4, params: &DenseParams) -> Result<Vec<Real>> {
    let (n, c, h, w) = features.dims();
    let d = c * h * w;
    if d != params.in_dim {
        return Err(Error::Dim(format!(
            "dense layer expects {} features, got {d}",
            params.in_dim
        )));
    }
    if params.out_dim != 2 {
        return Err(Error::Config("dense softmax head is two-class".into()));
    }

    let mut probs = vec![0.0; 2 * n];
    for b in 0..n {
        let f = features.sample(b);
        let mut z = [params.bias[0], params.bias[1]];
        for (k, zk) in z.iter_mut().enumerate() {
            let row = &params.weights[k * d..(k + 1) * d];
            let mut acc = 0.0;
            for (wv, fv) in row.iter().zip(f) {
                acc += wv * fv;
            }
            *zk += acc;
        }
        let zmax = z[0].max(z[1]);
        let e0 = (z[0] - zmax).exp();
        let e1 = (z[1] - zmax).exp();
        let sum = e0 + e1;
        probs[2 * b] = e0 / sum;
        probs[2 * b + 1] = e1 / sum;
    }
    Ok(probs)
}

/// [`dense_softmax`] followed by the batch NLL against `labels`.
pub fn dense_softmax_nll(
    features: &Tensor4,
    params: &DenseParams,
    labels: &[u8],
) -> Result<DenseSoftmaxOutput> {
    check_labels(labels, features.n())?;
    let probs = dense_softmax(features, params)?;
    let (loss, clamp_events) = nll_from_probs(&probs, labels)?;
    if !loss.is_finite() {
        return Err(Error::NonFinite("dense_softmax_nll loss".into()));
    }
    Ok(DenseSoftmaxOutput {
        probs,
        loss,
        clamp_events,
    })
}

/// Backward pass. `upstream` scales the loss gradient (the joint loss applies
/// `1 - lambda` here). Accumulates into `params.grad_*`; returns the gradient
/// with respect to the features when requested.
pub fn dense_softmax_nll_backward(
    features: &Tensor4,
    params: &mut DenseParams,
    probs: &[Real],
    labels: &[u8],
    upstream: Real,
    want_input_grad: bool,
) -> Result<Option<Tensor4>> {
    let (n, c, h, w) = features.dims();
    let d = c * h * w;
    check_labels(labels, n)?;
    if probs.len() != 2 * n {
        return Err(Error::Dim("probs length mismatch".into()));
    }

    let scale = upstream / n as Real;
    let mut grad_in = want_input_grad.then(|| Tensor4::zeros(n, c, h, w));
    for b in 0..n {
        let f = features.sample(b);
        let y = labels[b] as usize;
        for k in 0..2 {
            let dz = scale * (probs[2 * b + k] - if k == y { 1.0 } else { 0.0 });
            params.grad_b[k] += dz;
            let row = &mut params.grad_w[k * d..(k + 1) * d];
            for (g, fv) in row.iter_mut().zip(f) {
                *g += dz * fv;
            }
            if let Some(gi) = grad_in.as_mut() {
                let start = gi.index(b, 0, 0, 0);
                let dst = &mut gi.data_mut()[start..start + d];
                let wrow = &params.weights[k * d..(k + 1) * d];
                for (gv, wv) in dst.iter_mut().zip(wrow) {
                    *gv += dz * wv;
                }
            }
        }
    }
    Ok(grad_in)
}
