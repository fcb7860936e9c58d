//! Elementwise nonlinearities: abs, tanh, relu.
//!
//! Subgradient convention at the abs/relu kinks: the gradient at exactly 0
//! is 0.

use crate::tensor::Tensor4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Abs,
    Tanh,
    Relu,
}

impl Activation {
    /// The tensor the backward pass needs: the input for abs/relu, the
    /// output for tanh.
    pub fn cache_is_output(self) -> bool {
        matches!(self, Activation::Tanh)
    }
}

pub fn activation(input: &Tensor4, kind: Activation) -> Tensor4 {
    let mut out = input.clone();
    match kind {
        Activation::Abs => out.data_mut().iter_mut().for_each(|v| *v = v.abs()),
        Activation::Tanh => out.data_mut().iter_mut().for_each(|v| *v = v.tanh()),
        Activation::Relu => out.data_mut().iter_mut().for_each(|v| *v = v.max(0.0)),
    }
    out
}

/// Backward pass. `cache` follows [`Activation::cache_is_output`]: pass the
/// forward input for abs/relu and the forward output for tanh.
pub fn activation_backward(kind: Activation, cache: &Tensor4, grad_out: &Tensor4) -> Tensor4 {
    assert_eq!(cache.dims(), grad_out.dims(), "activation_backward dims");
    let mut grad_in = grad_out.clone();
    match kind {
        Activation::Abs => {
            for (g, &x) in grad_in.data_mut().iter_mut().zip(cache.data()) {
                *g *= if x > 0.0 {
                    1.0
                } else if x < 0.0 {
                    -1.0
                } else {
                    0.0
                };
            }
        }
        Activation::Relu => {
            for (g, &x) in grad_in.data_mut().iter_mut().zip(cache.data()) {
                if x <= 0.0 {
                    *g = 0.0;
                }
            }
        }
        Activation::Tanh => {
            for (g, &y) in grad_in.data_mut().iter_mut().zip(cache.data()) {
                *g *= 1.0 - y * y;
            }
        }
    }
    grad_in
}
