//! Differentiable primitives: convolution, batch normalization, activations,
//! pooling, the dense softmax head and the robust reconstruction loss.
//!
//! Every primitive is a pure function of its inputs plus explicit parameter
//! objects. Backward passes are hand-derived and verified against central
//! finite differences (see [`crate::gradcheck`]). Reductions use a fixed
//! summation order so outputs are bit-identical whether or not the `parallel`
//! feature is enabled.

pub mod activation;
pub mod batchnorm;
pub mod conv;
pub mod dense;
pub mod pool;
pub mod smooth_l1;

pub use activation::{activation, activation_backward, Activation};
pub use batchnorm::{batch_norm, batch_norm_backward, BatchNormState, BnCache, BnMode};
pub use conv::{conv2d, conv2d_backward, ConvParams, PadMode};
pub use dense::{
    dense_softmax, dense_softmax_nll, dense_softmax_nll_backward, nll_from_probs, DenseParams,
    DenseSoftmaxOutput,
};
pub use pool::{avg_pool, avg_pool_backward, global_avg_pool, global_avg_pool_backward, PoolGeom};
pub use smooth_l1::{huber, huber_prime, smooth_l1, smooth_l1_backward};

use crate::tensor::Real;

/// Run `f(chunk_index, chunk)` over consecutive disjoint chunks of `data`.
/// Parallel when the `parallel` feature is on; each chunk is owned by exactly
/// one worker, so results do not depend on the worker count.
#[cfg(feature = "parallel")]
pub(crate) fn for_each_chunk<F>(data: &mut [Real], chunk: usize, f: F)
where
    F: Fn(usize, &mut [Real]) + Sync,
{
    use rayon::prelude::*;
    data.par_chunks_mut(chunk)
        .enumerate()
        .for_each(|(i, c)| f(i, c));
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn for_each_chunk<F>(data: &mut [Real], chunk: usize, f: F)
where
    F: Fn(usize, &mut [Real]) + Sync,
{
    for (i, c) in data.chunks_mut(chunk).enumerate() {
        f(i, c);
    }
}

/// Indexed map `0..n -> Vec<T>`, parallel when enabled. Collection is by
/// index, so the output order is fixed.
#[cfg(feature = "parallel")]
pub(crate) fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).map(f).collect()
}
