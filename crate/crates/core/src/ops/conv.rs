//! 2-D convolution (cross-correlation, no kernel flip) with zero or
//! replicate border padding.
//!
//! Replicate padding clamps out-of-range taps to the nearest edge pixel, so a
//! kernel whose weights sum to `s` maps a flat image of value `c` to `c * s`
//! everywhere, borders included. The backward pass mirrors the clamping:
//! gradients of replicated taps accumulate onto the edge pixel they read.

use crate::error::{Error, Result};
use crate::ops::for_each_chunk;
use crate::tensor::{Real, Tensor4};

/// Border handling for taps outside the input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PadMode {
    /// Out-of-range taps read 0.
    Zero,
    /// Out-of-range taps read the nearest edge pixel.
    Replicate,
}

/// Learnable convolution kernel bank with gradient and momentum buffers.
/// Convolution layers carry no bias.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams {
    pub c_out: usize,
    pub c_in: usize,
    pub kh: usize,
    pub kw: usize,
    pub weights: Vec<Real>,
    pub grad: Vec<Real>,
    pub velocity: Vec<Real>,
    pub weight_decay: Real,
}

impl ConvParams {
    pub fn new(c_out: usize, c_in: usize, kh: usize, kw: usize) -> Self {
        let len = c_out * c_in * kh * kw;
        ConvParams {
            c_out,
            c_in,
            kh,
            kw,
            weights: vec![0.0; len],
            grad: vec![0.0; len],
            velocity: vec![0.0; len],
            weight_decay: 0.0,
        }
    }

    /// Single-kernel, single-channel params from a 2-D matrix.
    pub fn from_matrix(rows: &[Vec<Real>]) -> Self {
        let kh = rows.len();
        let kw = rows[0].len();
        let mut p = ConvParams::new(1, 1, kh, kw);
        for (y, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), kw, "ragged kernel matrix");
            for (x, &v) in row.iter().enumerate() {
                p.weights[y * kw + x] = v;
            }
        }
        p
    }

    #[inline]
    pub fn widx(&self, co: usize, ci: usize, ky: usize, kx: usize) -> usize {
        ((co * self.c_in + ci) * self.kh + ky) * self.kw + kx
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = 0.0);
    }
}

/// Output extent for a convolution. The stride must divide the span exactly.
pub fn conv_out_extent(input: usize, kernel: usize, stride: usize, pad: usize) -> Result<usize> {
    if stride == 0 {
        return Err(Error::Config("conv stride must be positive".into()));
    }
    let span = input + 2 * pad;
    if span < kernel {
        return Err(Error::Config(format!(
            "kernel {kernel} exceeds padded input {span}"
        )));
    }
    let numer = span - kernel;
    if !numer.is_multiple_of(stride) {
        return Err(Error::Config(format!(
            "non-integer conv output extent: ({input} + 2*{pad} - {kernel}) not divisible by stride {stride}"
        )));
    }
    Ok(numer / stride + 1)
}

/// Resolve the input coordinate for one tap, or `None` when a zero-padded tap
/// falls outside the input.
#[inline]
fn resolve(pos: isize, extent: usize, mode: PadMode) -> Option<usize> {
    if pos >= 0 && (pos as usize) < extent {
        Some(pos as usize)
    } else {
        match mode {
            PadMode::Zero => None,
            PadMode::Replicate => Some(pos.clamp(0, extent as isize - 1) as usize),
        }
    }
}

fn check_shapes(input: &Tensor4, params: &ConvParams) -> Result<()> {
    if input.c() != params.c_in {
        return Err(Error::Dim(format!(
            "conv input has {} channels, kernel expects {}",
            input.c(),
            params.c_in
        )));
    }
    Ok(())
}

/// Cross-correlate `input` with each output-channel kernel.
pub fn conv2d(
    input: &Tensor4,
    params: &ConvParams,
    stride: usize,
    pad: usize,
    mode: PadMode,
) -> Result<Tensor4> {
    check_shapes(input, params)?;
    let (n, c_in, h, w) = input.dims();
    let (kh, kw, c_out) = (params.kh, params.kw, params.c_out);
    let out_h = conv_out_extent(h, kh, stride, pad)?;
    let out_w = conv_out_extent(w, kw, stride, pad)?;

    let mut out = Tensor4::zeros(n, c_out, out_h, out_w);
    let weights = &params.weights;
    let plane = out_h * out_w;

    // One worker per (sample, output channel) plane.
    for_each_chunk(out.data_mut(), plane, |chunk_idx, plane_out| {
        let b = chunk_idx / c_out;
        let co = chunk_idx % c_out;
        for oh in 0..out_h {
            for ow in 0..out_w {
                let mut acc = 0.0;
                for ci in 0..c_in {
                    let in_plane = input.plane(b, ci);
                    let wbase = ((co * c_in + ci) * kh) * kw;
                    for ky in 0..kh {
                        let pos_y = (oh * stride + ky) as isize - pad as isize;
                        let Some(iy) = resolve(pos_y, h, mode) else {
                            continue;
                        };
                        let row = &in_plane[iy * w..iy * w + w];
                        let wrow = &weights[wbase + ky * kw..wbase + ky * kw + kw];
                        for (kx, &wv) in wrow.iter().enumerate() {
                            let pos_x = (ow * stride + kx) as isize - pad as isize;
                            if let Some(ix) = resolve(pos_x, w, mode) {
                                acc += wv * row[ix];
                            }
                        }
                    }
                }
                plane_out[oh * out_w + ow] = acc;
            }
        }
    });

    out.check_finite("conv2d output")?;
    Ok(out)
}

/// Backward pass. Accumulates the weight gradient into `params.grad` and,
/// when requested, returns the gradient with respect to the input.
pub fn conv2d_backward(
    input: &Tensor4,
    params: &mut ConvParams,
    grad_out: &Tensor4,
    stride: usize,
    pad: usize,
    mode: PadMode,
    want_input_grad: bool,
) -> Result<Option<Tensor4>> {
    check_shapes(input, params)?;
    let (n, c_in, h, w) = input.dims();
    let (kh, kw, c_out) = (params.kh, params.kw, params.c_out);
    let out_h = conv_out_extent(h, kh, stride, pad)?;
    let out_w = conv_out_extent(w, kw, stride, pad)?;
    if grad_out.dims() != (n, c_out, out_h, out_w) {
        return Err(Error::Dim(format!(
            "conv grad_out dims {:?}, expected {:?}",
            grad_out.dims(),
            (n, c_out, out_h, out_w)
        )));
    }

    // Weight gradient: one worker per output channel; batch summed in fixed
    // order inside the worker.
    let per_co = c_in * kh * kw;
    for_each_chunk(&mut params.grad, per_co, |co, gw| {
        for b in 0..n {
            let go_plane = grad_out.plane(b, co);
            for ci in 0..c_in {
                let in_plane = input.plane(b, ci);
                for ky in 0..kh {
                    for kx in 0..kw {
                        let mut acc = 0.0;
                        for oh in 0..out_h {
                            let pos_y = (oh * stride + ky) as isize - pad as isize;
                            let Some(iy) = resolve(pos_y, h, mode) else {
                                continue;
                            };
                            let go_row = &go_plane[oh * out_w..oh * out_w + out_w];
                            let in_row = &in_plane[iy * w..iy * w + w];
                            for (ow, &go) in go_row.iter().enumerate() {
                                let pos_x = (ow * stride + kx) as isize - pad as isize;
                                if let Some(ix) = resolve(pos_x, w, mode) {
                                    acc += go * in_row[ix];
                                }
                            }
                        }
                        gw[(ci * kh + ky) * kw + kx] += acc;
                    }
                }
            }
        }
    });

    if !want_input_grad {
        return Ok(None);
    }

    // Input gradient: one worker per sample; scatter with the same tap
    // resolution as the forward pass (replicated taps land on edge pixels).
    let mut grad_in = Tensor4::zeros(n, c_in, h, w);
    let sample = c_in * h * w;
    let weights = &params.weights;
    for_each_chunk(grad_in.data_mut(), sample, |b, gi| {
        for co in 0..c_out {
            let go_plane = grad_out.plane(b, co);
            for ci in 0..c_in {
                let gi_plane = &mut gi[ci * h * w..(ci + 1) * h * w];
                let wbase = ((co * c_in + ci) * kh) * kw;
                for oh in 0..out_h {
                    for ky in 0..kh {
                        let pos_y = (oh * stride + ky) as isize - pad as isize;
                        let Some(iy) = resolve(pos_y, h, mode) else {
                            continue;
                        };
                        let wrow = &weights[wbase + ky * kw..wbase + ky * kw + kw];
                        let go_row = &go_plane[oh * out_w..oh * out_w + out_w];
                        for (ow, &go) in go_row.iter().enumerate() {
                            for (kx, &wv) in wrow.iter().enumerate() {
                                let pos_x = (ow * stride + kx) as isize - pad as isize;
                                if let Some(ix) = resolve(pos_x, w, mode) {
                                    gi_plane[iy * w + ix] += go * wv;
                                }
                            }
                        }
                    }
                }
            }
        }
    });

    grad_in.check_finite("conv2d input gradient")?;
    Ok(Some(grad_in))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_kernel_passes_input_through() {
        let input = Tensor4::from_vec(1, 1, 3, 3, (1..=9).map(|v| v as Real).collect()).unwrap();
        let mut params = ConvParams::new(1, 1, 1, 1);
        params.weights[0] = 1.0;
        let out = conv2d(&input, &params, 1, 0, PadMode::Zero).unwrap();
        assert_eq!(out.data(), input.data());
    }

    #[test]
    fn constant_image_times_weight_sum_with_replicate_padding() {
        let c = 3.25;
        let input = Tensor4::filled(1, 1, 6, 6, c);
        let mut params = ConvParams::new(1, 1, 3, 3);
        for (i, v) in params.weights.iter_mut().enumerate() {
            *v = (i as Real + 1.0) * 0.1;
        }
        let s: Real = params.weights.iter().sum();
        let out = conv2d(&input, &params, 1, 1, PadMode::Replicate).unwrap();
        // Replicate padding: the identity holds everywhere, borders included.
        for &v in out.data() {
            assert!((v - c * s).abs() < 1e-12, "{v} vs {}", c * s);
        }
    }

    #[test]
    fn non_integer_extent_is_a_config_error() {
        let input = Tensor4::zeros(1, 1, 5, 5);
        let params = ConvParams::new(1, 1, 2, 2);
        let err = conv2d(&input, &params, 2, 0, PadMode::Zero).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn channel_mismatch_is_a_dimension_error() {
        let input = Tensor4::zeros(1, 2, 4, 4);
        let params = ConvParams::new(1, 1, 3, 3);
        assert!(matches!(
            conv2d(&input, &params, 1, 0, PadMode::Zero),
            Err(Error::Dim(_))
        ));
    }
}
