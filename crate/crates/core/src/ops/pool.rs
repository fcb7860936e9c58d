//! Average pooling and global average pooling.
//!
//! Strided average pooling uses replicate padding; each window mean divides
//! by the full window area (replicated taps participate). The output extent
//! floors: `(h + 2*pad - size) / stride + 1`, so trailing rows/columns that
//! do not start a full stride are dropped. Backward distributes each output
//! gradient uniformly over its window taps.

use crate::error::{Error, Result};
use crate::ops::for_each_chunk;
use crate::tensor::{Real, Tensor4};

/// Geometry of a pooling call, kept for the backward pass.
#[derive(Debug, Clone, Copy)]
pub struct PoolGeom {
    pub in_dims: (usize, usize, usize, usize),
    pub size: usize,
    pub stride: usize,
    pub pad: usize,
    pub out_h: usize,
    pub out_w: usize,
}

fn pool_out_extent(input: usize, size: usize, stride: usize, pad: usize) -> Result<usize> {
    if size == 0 || stride == 0 {
        return Err(Error::Config("pool size and stride must be positive".into()));
    }
    let span = input + 2 * pad;
    if span < size {
        return Err(Error::Config(format!(
            "pool window {size} exceeds padded input {span}"
        )));
    }
    Ok((span - size) / stride + 1)
}

#[inline]
fn clamp(pos: isize, extent: usize) -> usize {
    pos.clamp(0, extent as isize - 1) as usize
}

/// Mean over each `size x size` window, stride `stride`, replicate padding
/// `pad`.
pub fn avg_pool(input: &Tensor4, size: usize, stride: usize, pad: usize) -> Result<(Tensor4, PoolGeom)> {
    let (n, c, h, w) = input.dims();
    let out_h = pool_out_extent(h, size, stride, pad)?;
    let out_w = pool_out_extent(w, size, stride, pad)?;
    let geom = PoolGeom {
        in_dims: (n, c, h, w),
        size,
        stride,
        pad,
        out_h,
        out_w,
    };

    let mut out = Tensor4::zeros(n, c, out_h, out_w);
    let area = (size * size) as Real;
    let plane = out_h * out_w;
    for_each_chunk(out.data_mut(), plane, |chunk_idx, plane_out| {
        let b = chunk_idx / c;
        let ch = chunk_idx % c;
        let in_plane = input.plane(b, ch);
        for oh in 0..out_h {
            for ow in 0..out_w {
                let mut acc = 0.0;
                for ky in 0..size {
                    let iy = clamp((oh * stride + ky) as isize - pad as isize, h);
                    let row = &in_plane[iy * w..iy * w + w];
                    for kx in 0..size {
                        let ix = clamp((ow * stride + kx) as isize - pad as isize, w);
                        acc += row[ix];
                    }
                }
                plane_out[oh * out_w + ow] = acc / area;
            }
        }
    });
    Ok((out, geom))
}

/// Backward pass for [`avg_pool`].
pub fn avg_pool_backward(geom: &PoolGeom, grad_out: &Tensor4) -> Result<Tensor4> {
    let (n, c, h, w) = geom.in_dims;
    if grad_out.dims() != (n, c, geom.out_h, geom.out_w) {
        return Err(Error::Dim(format!(
            "avg_pool grad_out dims {:?}, expected {:?}",
            grad_out.dims(),
            (n, c, geom.out_h, geom.out_w)
        )));
    }
    let (size, stride, pad) = (geom.size, geom.stride, geom.pad);
    let area = (size * size) as Real;
    let mut grad_in = Tensor4::zeros(n, c, h, w);
    let plane = h * w;
    for_each_chunk(grad_in.data_mut(), plane, |chunk_idx, gi| {
        let b = chunk_idx / c;
        let ch = chunk_idx % c;
        let go_plane = grad_out.plane(b, ch);
        for oh in 0..geom.out_h {
            for ow in 0..geom.out_w {
                let g = go_plane[oh * geom.out_w + ow] / area;
                for ky in 0..size {
                    let iy = clamp((oh * stride + ky) as isize - pad as isize, h);
                    for kx in 0..size {
                        let ix = clamp((ow * stride + kx) as isize - pad as isize, w);
                        gi[iy * w + ix] += g;
                    }
                }
            }
        }
    });
    Ok(grad_in)
}

/// Reduce the spatial extent to 1x1 by averaging.
pub fn global_avg_pool(input: &Tensor4) -> Tensor4 {
    let (n, c, h, w) = input.dims();
    let mut out = Tensor4::zeros(n, c, 1, 1);
    let area = (h * w) as Real;
    for b in 0..n {
        for ch in 0..c {
            let sum: Real = input.plane(b, ch).iter().sum();
            *out.at_mut(b, ch, 0, 0) = sum / area;
        }
    }
    out
}

/// Backward pass for [`global_avg_pool`]: uniform distribution.
pub fn global_avg_pool_backward(
    in_dims: (usize, usize, usize, usize),
    grad_out: &Tensor4,
) -> Result<Tensor4> {
    let (n, c, h, w) = in_dims;
    if grad_out.dims() != (n, c, 1, 1) {
        return Err(Error::Dim(format!(
            "global_avg_pool grad_out dims {:?}, expected {:?}",
            grad_out.dims(),
            (n, c, 1, 1)
        )));
    }
    let mut grad_in = Tensor4::zeros(n, c, h, w);
    let area = (h * w) as Real;
    let plane = h * w;
    for b in 0..n {
        for ch in 0..c {
            let g = grad_out.at(b, ch, 0, 0) / area;
            let start = grad_in.index(b, ch, 0, 0);
            for v in &mut grad_in.data_mut()[start..start + plane] {
                *v = g;
            }
        }
    }
    Ok(grad_in)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_of_two_by_two_window() {
        let input = Tensor4::from_vec(1, 1, 2, 2, vec![1.0, 3.0, 5.0, 7.0]).unwrap();
        let (out, _) = avg_pool(&input, 2, 2, 0).unwrap();
        assert_eq!(out.dims(), (1, 1, 1, 1));
        assert_eq!(out.data()[0], 4.0);
    }

    #[test]
    fn global_avg_of_constant_image() {
        let input = Tensor4::filled(2, 3, 4, 4, 2.5);
        let out = global_avg_pool(&input);
        assert_eq!(out.dims(), (2, 3, 1, 1));
        for &v in out.data() {
            assert_eq!(v, 2.5);
        }
    }

    #[test]
    fn window_exceeding_padded_input_is_an_error() {
        let input = Tensor4::zeros(1, 1, 2, 2);
        assert!(avg_pool(&input, 5, 1, 1).is_err());
    }

    #[test]
    fn extent_floors_when_stride_does_not_divide() {
        // (64 + 4 - 5) / 2 + 1 = 32 with floor division.
        let input = Tensor4::zeros(1, 1, 64, 64);
        let (out, _) = avg_pool(&input, 5, 2, 2).unwrap();
        assert_eq!(out.dims(), (1, 1, 32, 32));
    }

    #[test]
    fn backward_distributes_uniformly() {
        let input = Tensor4::from_vec(1, 1, 2, 2, vec![1.0, 3.0, 5.0, 7.0]).unwrap();
        let (_, geom) = avg_pool(&input, 2, 2, 0).unwrap();
        let go = Tensor4::filled(1, 1, 1, 1, 1.0);
        let gi = avg_pool_backward(&geom, &go).unwrap();
        for &v in gi.data() {
            assert_eq!(v, 0.25);
        }
    }
}
