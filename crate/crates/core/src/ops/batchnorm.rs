//! Batch normalization with running statistics.
//!
//! Train mode standardizes each channel by its batch statistics (biased
//! variance) and applies the learned affine transform; running statistics are
//! updated by exponential moving average (unbiased variance, torch
//! convention). Eval mode depends only on the running statistics.

use crate::error::{Error, Result};
use crate::ops::{for_each_chunk, map_indexed};
use crate::tensor::{Real, Tensor4};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BnMode {
    Train,
    Eval,
}

/// Per-channel scale/shift with gradient, momentum and running-stat buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormState {
    pub gamma: Vec<Real>,
    pub beta: Vec<Real>,
    pub grad_gamma: Vec<Real>,
    pub grad_beta: Vec<Real>,
    pub vel_gamma: Vec<Real>,
    pub vel_beta: Vec<Real>,
    pub running_mean: Vec<Real>,
    pub running_var: Vec<Real>,
    pub eps: Real,
    /// EMA weight for the running statistics.
    pub momentum: Real,
}

impl BatchNormState {
    pub fn new(channels: usize) -> Self {
        BatchNormState {
            gamma: vec![1.0; channels],
            beta: vec![0.0; channels],
            grad_gamma: vec![0.0; channels],
            grad_beta: vec![0.0; channels],
            vel_gamma: vec![0.0; channels],
            vel_beta: vec![0.0; channels],
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
            eps: 1e-5,
            momentum: 0.1,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    pub fn zero_grad(&mut self) {
        self.grad_gamma.iter_mut().for_each(|g| *g = 0.0);
        self.grad_beta.iter_mut().for_each(|g| *g = 0.0);
    }
}

/// Values cached by a train-mode forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct BnCache {
    /// Standardized input, before the affine transform.
    pub xhat: Tensor4,
    /// Per-channel 1 / sqrt(var + eps).
    pub inv_std: Vec<Real>,
}

fn check_channels(input: &Tensor4, state: &BatchNormState) -> Result<()> {
    if input.c() != state.channels() {
        return Err(Error::Dim(format!(
            "batch_norm input has {} channels, state has {}",
            input.c(),
            state.channels()
        )));
    }
    Ok(())
}

/// Normalize `input` per channel. In train mode the cache for the backward
/// pass is returned; running statistics are updated only when
/// `update_running` is set (gradient checking re-evaluates the forward map
/// and must leave the state untouched).
pub fn batch_norm(
    input: &Tensor4,
    state: &mut BatchNormState,
    mode: BnMode,
    update_running: bool,
) -> Result<(Tensor4, Option<BnCache>)> {
    check_channels(input, state)?;
    let (n, c, h, w) = input.dims();
    let plane = h * w;
    let m = n * plane;

    match mode {
        BnMode::Train => {
            if m < 2 {
                return Err(Error::Config(format!(
                    "batch_norm train mode needs at least 2 values per channel, got {m}"
                )));
            }
            // Per-channel batch statistics, fixed (b, y, x) order.
            let stats: Vec<(Real, Real)> = map_indexed(c, |ch| {
                let mut sum = 0.0;
                for b in 0..n {
                    for &v in input.plane(b, ch) {
                        sum += v;
                    }
                }
                let mean = sum / m as Real;
                let mut ss = 0.0;
                for b in 0..n {
                    for &v in input.plane(b, ch) {
                        let d = v - mean;
                        ss += d * d;
                    }
                }
                (mean, ss / m as Real)
            });

            let inv_std: Vec<Real> = stats
                .iter()
                .map(|&(_, var)| 1.0 / (var + state.eps).sqrt())
                .collect();

            if update_running {
                let rho = state.momentum;
                let bessel = m as Real / (m as Real - 1.0);
                for (ch, &(mean, var)) in stats.iter().enumerate() {
                    state.running_mean[ch] = (1.0 - rho) * state.running_mean[ch] + rho * mean;
                    state.running_var[ch] =
                        (1.0 - rho) * state.running_var[ch] + rho * var * bessel;
                }
            }

            let mut xhat = input.clone();
            let sample = c * plane;
            for_each_chunk(xhat.data_mut(), sample, |_, s| {
                for ch in 0..c {
                    let mean = stats[ch].0;
                    let inv = inv_std[ch];
                    for v in &mut s[ch * plane..(ch + 1) * plane] {
                        *v = (*v - mean) * inv;
                    }
                }
            });

            let mut out = xhat.clone();
            let gamma = &state.gamma;
            let beta = &state.beta;
            for_each_chunk(out.data_mut(), sample, |_, s| {
                for ch in 0..c {
                    let (g, b) = (gamma[ch], beta[ch]);
                    for v in &mut s[ch * plane..(ch + 1) * plane] {
                        *v = g * *v + b;
                    }
                }
            });

            out.check_finite("batch_norm output")?;
            Ok((out, Some(BnCache { xhat, inv_std })))
        }
        BnMode::Eval => {
            let mut out = input.clone();
            let sample = c * plane;
            let (gamma, beta) = (&state.gamma, &state.beta);
            let (rm, rv) = (&state.running_mean, &state.running_var);
            let eps = state.eps;
            for_each_chunk(out.data_mut(), sample, |_, s| {
                for ch in 0..c {
                    let inv = 1.0 / (rv[ch] + eps).sqrt();
                    let (g, b, mean) = (gamma[ch], beta[ch], rm[ch]);
                    for v in &mut s[ch * plane..(ch + 1) * plane] {
                        *v = g * (*v - mean) * inv + b;
                    }
                }
            });
            out.check_finite("batch_norm output")?;
            Ok((out, None))
        }
    }
}

/// Train-mode backward pass. Accumulates gamma/beta gradients into `state`
/// and returns the gradient with respect to the input.
pub fn batch_norm_backward(
    cache: &BnCache,
    state: &mut BatchNormState,
    grad_out: &Tensor4,
) -> Result<Tensor4> {
    let xhat = &cache.xhat;
    xhat.ensure_same_dims(grad_out, "batch_norm_backward")?;
    let (n, c, h, w) = xhat.dims();
    let plane = h * w;
    let m = (n * plane) as Real;

    // Per-channel reductions: sum(dy), sum(dy * xhat).
    let sums: Vec<(Real, Real)> = map_indexed(c, |ch| {
        let mut s_dy = 0.0;
        let mut s_dyx = 0.0;
        for b in 0..n {
            let go = grad_out.plane(b, ch);
            let xh = xhat.plane(b, ch);
            for (g, x) in go.iter().zip(xh) {
                s_dy += g;
                s_dyx += g * x;
            }
        }
        (s_dy, s_dyx)
    });

    for (ch, &(s_dy, s_dyx)) in sums.iter().enumerate() {
        state.grad_beta[ch] += s_dy;
        state.grad_gamma[ch] += s_dyx;
    }

    // dx = gamma * inv_std * (dy - mean(dy) - xhat * mean(dy * xhat))
    let mut grad_in = Tensor4::zeros(n, c, h, w);
    let sample = c * plane;
    let gamma = &state.gamma;
    let inv_std = &cache.inv_std;
    for_each_chunk(grad_in.data_mut(), sample, |b, s| {
        for ch in 0..c {
            let coeff = gamma[ch] * inv_std[ch];
            let mean_dy = sums[ch].0 / m;
            let mean_dyx = sums[ch].1 / m;
            let go = grad_out.plane(b, ch);
            let xh = xhat.plane(b, ch);
            let dst = &mut s[ch * plane..(ch + 1) * plane];
            for i in 0..plane {
                dst[i] = coeff * (go[i] - mean_dy - xh[i] * mean_dyx);
            }
        }
    });

    grad_in.check_finite("batch_norm input gradient")?;
    Ok(grad_in)
}
