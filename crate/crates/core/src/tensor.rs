//! Dense rank-4 tensors, the universal value type.
//!
//! Layout is `(n, c, h, w)` with `data` row-major within `(c, h, w)` per
//! sample. An optional gradient buffer of identical shape can be attached.

use crate::error::{Error, Result};

/// Scalar type used throughout the crate. f64 by default; the `f32` feature
/// switches every computation to single precision.
#[cfg(not(feature = "f32"))]
pub type Real = f64;
#[cfg(feature = "f32")]
pub type Real = f32;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4 {
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    data: Vec<Real>,
    grad: Option<Vec<Real>>,
}

impl Tensor4 {
    pub fn zeros(n: usize, c: usize, h: usize, w: usize) -> Self {
        Tensor4 {
            n,
            c,
            h,
            w,
            data: vec![0.0; n * c * h * w],
            grad: None,
        }
    }

    pub fn from_vec(n: usize, c: usize, h: usize, w: usize, data: Vec<Real>) -> Result<Self> {
        if data.len() != n * c * h * w {
            return Err(Error::Dim(format!(
                "data length {} does not match dims ({n}, {c}, {h}, {w})",
                data.len()
            )));
        }
        Ok(Tensor4 {
            n,
            c,
            h,
            w,
            data,
            grad: None,
        })
    }

    pub fn filled(n: usize, c: usize, h: usize, w: usize, value: Real) -> Self {
        Tensor4 {
            n,
            c,
            h,
            w,
            data: vec![value; n * c * h * w],
            grad: None,
        }
    }

    pub fn dims(&self) -> (usize, usize, usize, usize) {
        (self.n, self.c, self.h, self.w)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn c(&self) -> usize {
        self.c
    }

    pub fn h(&self) -> usize {
        self.h
    }

    pub fn w(&self) -> usize {
        self.w
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[Real] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Real] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<Real> {
        self.data
    }

    /// Flat index of element `(b, ch, y, x)`.
    #[inline]
    pub fn index(&self, b: usize, ch: usize, y: usize, x: usize) -> usize {
        ((b * self.c + ch) * self.h + y) * self.w + x
    }

    #[inline]
    pub fn at(&self, b: usize, ch: usize, y: usize, x: usize) -> Real {
        self.data[self.index(b, ch, y, x)]
    }

    #[inline]
    pub fn at_mut(&mut self, b: usize, ch: usize, y: usize, x: usize) -> &mut Real {
        let i = self.index(b, ch, y, x);
        &mut self.data[i]
    }

    /// The `(c, h, w)` block of one sample.
    pub fn sample(&self, b: usize) -> &[Real] {
        let stride = self.c * self.h * self.w;
        &self.data[b * stride..(b + 1) * stride]
    }

    /// One `(h, w)` plane of one sample.
    pub fn plane(&self, b: usize, ch: usize) -> &[Real] {
        let start = self.index(b, ch, 0, 0);
        &self.data[start..start + self.h * self.w]
    }

    pub fn same_dims(&self, other: &Tensor4) -> bool {
        self.dims() == other.dims()
    }

    pub fn ensure_same_dims(&self, other: &Tensor4, what: &str) -> Result<()> {
        if !self.same_dims(other) {
            return Err(Error::Dim(format!(
                "{what}: {:?} vs {:?}",
                self.dims(),
                other.dims()
            )));
        }
        Ok(())
    }

    /// Attach (or reset) a zeroed gradient buffer.
    pub fn enable_grad(&mut self) {
        self.grad = Some(vec![0.0; self.data.len()]);
    }

    pub fn grad(&self) -> Option<&[Real]> {
        self.grad.as_deref()
    }

    pub fn grad_mut(&mut self) -> Option<&mut [Real]> {
        self.grad.as_deref_mut()
    }

    /// Store `g` as this tensor's gradient. Shape must match.
    pub fn set_grad(&mut self, g: &Tensor4) -> Result<()> {
        self.ensure_same_dims(g, "set_grad")?;
        self.grad = Some(g.data.clone());
        Ok(())
    }

    /// Elementwise `self + scale * other` into a new tensor.
    pub fn add_scaled(&self, other: &Tensor4, scale: Real) -> Result<Tensor4> {
        self.ensure_same_dims(other, "add_scaled")?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + scale * b)
            .collect();
        Tensor4::from_vec(self.n, self.c, self.h, self.w, data)
    }

    /// Elementwise difference `self - other`.
    pub fn sub(&self, other: &Tensor4) -> Result<Tensor4> {
        self.add_scaled(other, -1.0)
    }

    pub fn scale(&self, s: Real) -> Tensor4 {
        let mut out = self.clone();
        for v in &mut out.data {
            *v *= s;
        }
        out.grad = None;
        out
    }

    /// Stack single-channel-compatible tensors along the channel axis.
    /// All inputs must share `(n, h, w)`.
    pub fn stack_channels(parts: &[&Tensor4]) -> Result<Tensor4> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Dim("stack_channels on empty list".into()))?;
        let (n, _, h, w) = first.dims();
        let c_total: usize = parts.iter().map(|t| t.c).sum();
        for t in parts {
            if t.n != n || t.h != h || t.w != w {
                return Err(Error::Dim(format!(
                    "stack_channels: incompatible dims {:?} vs {:?}",
                    t.dims(),
                    first.dims()
                )));
            }
        }
        let mut out = Tensor4::zeros(n, c_total, h, w);
        let plane = h * w;
        for b in 0..n {
            let mut ch_off = 0;
            for t in parts {
                for ch in 0..t.c {
                    let src = t.plane(b, ch);
                    let start = out.index(b, ch_off + ch, 0, 0);
                    out.data[start..start + plane].copy_from_slice(src);
                }
                ch_off += t.c;
            }
        }
        Ok(out)
    }

    /// Extract one channel as an `(n, 1, h, w)` tensor.
    pub fn take_channel(&self, ch: usize) -> Tensor4 {
        let mut out = Tensor4::zeros(self.n, 1, self.h, self.w);
        let plane = self.h * self.w;
        for b in 0..self.n {
            let src = self.plane(b, ch);
            out.data[b * plane..(b + 1) * plane].copy_from_slice(src);
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Hard error unless every value is finite. `what` names the producer.
    pub fn check_finite(&self, what: &str) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::NonFinite(what.to_string()))
        }
    }
}

/// Hard error unless every value in `values` is finite.
pub fn check_finite_slice(values: &[Real], what: &str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}
