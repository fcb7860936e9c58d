//! The reconstruction (residual) network: one convolutional layer with two
//! learnable kernels, 5x5 and 3x3, each predicting the image from its
//! neighborhood. Residuals are the difference between the input and each
//! reconstruction; they carry the embedding noise to the classifier.
//!
//! Both kernels start from fixed high-pass-complement initializations whose
//! weights sum to 1 and whose center tap is 0, so a flat image reconstructs
//! exactly (with replicate padding) and its residual is zero everywhere.

use crate::error::{Error, Result};
use crate::ops::conv::{conv2d, conv2d_backward, ConvParams, PadMode};
use crate::ops::smooth_l1::{smooth_l1, smooth_l1_backward};
use crate::tensor::{Real, Tensor4};

/// Initial 5x5 reconstruction kernel (scale 1/12, center 0).
pub const INIT_K5: [[Real; 5]; 5] = [
    [-1.0 / 12.0, 2.0 / 12.0, -2.0 / 12.0, 2.0 / 12.0, -1.0 / 12.0],
    [2.0 / 12.0, -6.0 / 12.0, 8.0 / 12.0, -6.0 / 12.0, 2.0 / 12.0],
    [-2.0 / 12.0, 8.0 / 12.0, 0.0, 8.0 / 12.0, -2.0 / 12.0],
    [2.0 / 12.0, -6.0 / 12.0, 8.0 / 12.0, -6.0 / 12.0, 2.0 / 12.0],
    [-1.0 / 12.0, 2.0 / 12.0, -2.0 / 12.0, 2.0 / 12.0, -1.0 / 12.0],
];

/// Initial 3x3 reconstruction kernel (scale 1/4, center 0).
pub const INIT_K3: [[Real; 3]; 3] = [
    [-1.0 / 4.0, 2.0 / 4.0, -1.0 / 4.0],
    [2.0 / 4.0, 0.0, 2.0 / 4.0],
    [-1.0 / 4.0, 2.0 / 4.0, -1.0 / 4.0],
];

/// The two learnable kernels. Exactly one convolutional layer deep; no
/// biases.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualNetParams {
    pub k5: ConvParams,
    pub k3: ConvParams,
}

impl ResidualNetParams {
    pub fn param_count(&self) -> usize {
        self.k5.len() + self.k3.len()
    }

    pub fn zero_grad(&mut self) {
        self.k5.zero_grad();
        self.k3.zero_grad();
    }
}

/// Kernels at their fixed initialization. Both weight sums equal 1.
pub fn init_residual_params() -> ResidualNetParams {
    let k5 = ConvParams::from_matrix(&INIT_K5.iter().map(|r| r.to_vec()).collect::<Vec<_>>());
    let k3 = ConvParams::from_matrix(&INIT_K3.iter().map(|r| r.to_vec()).collect::<Vec<_>>());
    ResidualNetParams { k5, k3 }
}

/// Two reconstructions and their residuals, all with the input's dims.
#[derive(Debug, Clone)]
pub struct ResidualOutput {
    pub recon5: Tensor4,
    pub recon3: Tensor4,
    pub res5: Tensor4,
    pub res3: Tensor4,
}

/// Reconstruct `x` with both kernels ('same' size via replicate padding) and
/// subtract to get the residuals.
pub fn residual_forward(x: &Tensor4, params: &ResidualNetParams) -> Result<ResidualOutput> {
    if x.c() != 1 {
        return Err(Error::Dim(format!(
            "residual network takes single-channel input, got {} channels",
            x.c()
        )));
    }
    let recon5 = conv2d(x, &params.k5, 1, 2, PadMode::Replicate)?;
    let recon3 = conv2d(x, &params.k3, 1, 1, PadMode::Replicate)?;
    let res5 = x.sub(&recon5)?;
    let res3 = x.sub(&recon3)?;
    Ok(ResidualOutput {
        recon5,
        recon3,
        res5,
        res3,
    })
}

/// Accumulate kernel gradients given the total gradients flowing into the
/// two reconstructions. (A gradient `g` on `res_k` contributes `-g` here;
/// the caller combines both paths before calling.)
pub fn residual_backward(
    x: &Tensor4,
    params: &mut ResidualNetParams,
    grad_recon5: &Tensor4,
    grad_recon3: &Tensor4,
) -> Result<()> {
    conv2d_backward(x, &mut params.k5, grad_recon5, 1, 2, PadMode::Replicate, false)?;
    conv2d_backward(x, &mut params.k3, grad_recon3, 1, 1, PadMode::Replicate, false)?;
    Ok(())
}

/// Reconstruction loss: the average of the two per-output robust-L1 losses
/// against the corresponding cover image.
pub fn reconstruction_loss(out: &ResidualOutput, cover: &Tensor4) -> Result<Real> {
    Ok(0.5 * (smooth_l1(&out.recon5, cover)? + smooth_l1(&out.recon3, cover)?))
}

/// Gradients of `upstream * reconstruction_loss` with respect to the two
/// reconstructions.
pub fn reconstruction_loss_backward(
    out: &ResidualOutput,
    cover: &Tensor4,
    upstream: Real,
) -> Result<(Tensor4, Tensor4)> {
    let g5 = smooth_l1_backward(&out.recon5, cover, 0.5 * upstream)?;
    let g3 = smooth_l1_backward(&out.recon3, cover, 0.5 * upstream)?;
    Ok((g5, g3))
}
