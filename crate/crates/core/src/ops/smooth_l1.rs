//! Robust L1 (smooth L1 / Huber) reconstruction loss.
//!
//! Per element, with `d = pred - target`:
//! `0.5 * d^2` when `|d| < 1`, else `|d| - 0.5`. Both the value and the
//! derivative are continuous at `|d| = 1`. The loss is averaged over all
//! elements of each image and then over the batch.

use crate::error::Result;
use crate::tensor::{Real, Tensor4};

#[inline]
pub fn huber(d: Real) -> Real {
    let a = d.abs();
    if a < 1.0 {
        0.5 * d * d
    } else {
        a - 0.5
    }
}

/// Derivative of [`huber`]: `d` in the quadratic region, `sign(d)` outside.
#[inline]
pub fn huber_prime(d: Real) -> Real {
    if d.abs() < 1.0 {
        d
    } else {
        d.signum()
    }
}

/// Mean robust-L1 loss between `pred` and `target`.
pub fn smooth_l1(pred: &Tensor4, target: &Tensor4) -> Result<Real> {
    pred.ensure_same_dims(target, "smooth_l1")?;
    let mut total = 0.0;
    for (p, t) in pred.data().iter().zip(target.data()) {
        total += huber(p - t);
    }
    Ok(total / pred.len() as Real)
}

/// Gradient with respect to `pred`, scaled by `upstream`.
pub fn smooth_l1_backward(pred: &Tensor4, target: &Tensor4, upstream: Real) -> Result<Tensor4> {
    pred.ensure_same_dims(target, "smooth_l1_backward")?;
    let scale = upstream / pred.len() as Real;
    let mut grad = pred.clone();
    for (g, t) in grad.data_mut().iter_mut().zip(target.data()) {
        *g = scale * huber_prime(*g - t);
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_difference_means_zero_loss() {
        let a = Tensor4::filled(2, 1, 3, 3, 0.7);
        assert_eq!(smooth_l1(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn quadratic_branch_value() {
        let p = Tensor4::filled(1, 1, 1, 1, 0.5);
        let t = Tensor4::zeros(1, 1, 1, 1);
        assert!((smooth_l1(&p, &t).unwrap() - 0.125).abs() < 1e-15);
    }

    #[test]
    fn linear_branch_value() {
        let p = Tensor4::filled(1, 1, 1, 1, 3.0);
        let t = Tensor4::zeros(1, 1, 1, 1);
        assert!((smooth_l1(&p, &t).unwrap() - 2.5).abs() < 1e-15);
    }

    #[test]
    fn value_and_derivative_continuous_at_branch_boundary() {
        let eps = 1e-9;
        // Value: both branches give 0.5 at |d| = 1.
        assert!((huber(1.0) - 0.5).abs() < 1e-15);
        assert!((huber(1.0 - eps) - 0.5).abs() < 2.0 * eps);
        assert!((huber(1.0 + eps) - 0.5).abs() < 2.0 * eps);
        // Derivative: both branches give +-1.
        assert!((huber_prime(1.0 - eps) - 1.0).abs() < 2.0 * eps);
        assert!((huber_prime(1.0) - 1.0).abs() < 1e-15);
        assert!((huber_prime(-1.0) + 1.0).abs() < 1e-15);
        assert!((huber_prime(-1.0 + eps) + 1.0).abs() < 2.0 * eps);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let a = Tensor4::zeros(1, 1, 2, 2);
        let b = Tensor4::zeros(1, 1, 2, 3);
        assert!(smooth_l1(&a, &b).is_err());
    }
}
