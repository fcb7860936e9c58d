//! The classification sub-network: a compact five-group CNN over the
//! 2-channel residual stack, ending in a two-class softmax.
//!
//! Group layout (fixed):
//!   g1: conv  8@5x5 same -> abs -> BN -> tanh -> avgpool 5x5 s2
//!   g2: conv 16@5x5 same ->        BN -> tanh -> avgpool 5x5 s2
//!   g3: conv 32@1x1      ->        BN -> relu -> avgpool 5x5 s2
//!   g4: conv 64@1x1      ->        BN -> relu -> avgpool 5x5 s2
//!   g5: conv 128@1x1     ->        BN -> relu -> global avgpool
//!   dense 128 -> 2 -> softmax
//!
//! Convolutions are stride 1 with replicate padding and no bias; pooling
//! windows use replicate padding of 2. There is no fixed preprocessing
//! filter in front of this network — its input is the learned residual
//! stack.

use crate::error::{Error, Result};
use crate::ops::activation::{activation, activation_backward, Activation};
use crate::ops::batchnorm::{batch_norm, batch_norm_backward, BatchNormState, BnCache, BnMode};
use crate::ops::conv::{conv2d, conv2d_backward, ConvParams, PadMode};
use crate::ops::dense::{
    dense_softmax, dense_softmax_nll_backward, nll_from_probs, DenseParams,
};
use crate::ops::pool::{
    avg_pool, avg_pool_backward, global_avg_pool, global_avg_pool_backward, PoolGeom,
};
use crate::tensor::{Real, Tensor4};

/// The residual stack the classifier consumes has two channels.
pub const RESIDUAL_CHANNELS: usize = 2;

#[derive(Debug, Clone, Copy)]
pub enum PoolSpec {
    Avg { size: usize, stride: usize, pad: usize },
    Global,
}

/// Static description of one conv group.
#[derive(Debug, Clone, Copy)]
pub struct GroupSpec {
    pub c_out: usize,
    pub kernel: usize,
    pub pad: usize,
    pub abs_first: bool,
    pub act: Activation,
    pub pool: PoolSpec,
}

/// The fixed five-group architecture.
pub fn group_specs() -> [GroupSpec; 5] {
    let strided = PoolSpec::Avg {
        size: 5,
        stride: 2,
        pad: 2,
    };
    [
        GroupSpec {
            c_out: 8,
            kernel: 5,
            pad: 2,
            abs_first: true,
            act: Activation::Tanh,
            pool: strided,
        },
        GroupSpec {
            c_out: 16,
            kernel: 5,
            pad: 2,
            abs_first: false,
            act: Activation::Tanh,
            pool: strided,
        },
        GroupSpec {
            c_out: 32,
            kernel: 1,
            pad: 0,
            abs_first: false,
            act: Activation::Relu,
            pool: strided,
        },
        GroupSpec {
            c_out: 64,
            kernel: 1,
            pad: 0,
            abs_first: false,
            act: Activation::Relu,
            pool: strided,
        },
        GroupSpec {
            c_out: 128,
            kernel: 1,
            pad: 0,
            abs_first: false,
            act: Activation::Relu,
            pool: PoolSpec::Global,
        },
    ]
}

/// Feature width entering the dense head.
pub const FEATURE_DIM: usize = 128;

#[derive(Debug, Clone, PartialEq)]
pub struct GroupParams {
    pub conv: ConvParams,
    pub bn: BatchNormState,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StegNetParams {
    pub groups: Vec<GroupParams>,
    pub dense: DenseParams,
}

impl StegNetParams {
    /// Zero-weight parameters with the architecture's shapes. Weights are
    /// filled in by the trainer's initializer.
    pub fn new() -> Self {
        let mut groups = Vec::new();
        let mut c_in = RESIDUAL_CHANNELS;
        for spec in group_specs() {
            groups.push(GroupParams {
                conv: ConvParams::new(spec.c_out, c_in, spec.kernel, spec.kernel),
                bn: BatchNormState::new(spec.c_out),
            });
            c_in = spec.c_out;
        }
        StegNetParams {
            groups,
            dense: DenseParams::new(2, FEATURE_DIM),
        }
    }

    /// Trainable parameter count (conv kernels, BN affine, dense).
    pub fn param_count(&self) -> usize {
        let convs: usize = self.groups.iter().map(|g| g.conv.len()).sum();
        let bn: usize = self.groups.iter().map(|g| 2 * g.bn.channels()).sum();
        convs + bn + self.dense.weights.len() + self.dense.bias.len()
    }

    pub fn zero_grad(&mut self) {
        for g in &mut self.groups {
            g.conv.zero_grad();
            g.bn.zero_grad();
        }
        self.dense.zero_grad();
    }
}

impl Default for StegNetParams {
    fn default() -> Self {
        Self::new()
    }
}

enum PoolCache {
    Avg(PoolGeom),
    Global((usize, usize, usize, usize)),
}

struct GroupCache {
    conv_input: Tensor4,
    /// Conv output, kept only when the group applies abs (its backward needs
    /// the pre-abs values).
    conv_out: Option<Tensor4>,
    bn: BnCache,
    /// Activation backward cache: BN output for relu, activation output for
    /// tanh.
    act: Tensor4,
    pool: PoolCache,
}

/// Caches from a train-mode forward pass, consumed by [`stegnet_backward`].
pub struct NetCache {
    groups: Vec<GroupCache>,
    features: Tensor4,
}

/// Forward result: row-major `(n, 2)` probabilities plus optional caches and
/// the post-abs feature tap.
pub struct StegNetForward {
    pub probs: Vec<Real>,
    pub cache: Option<NetCache>,
    /// Group-1 feature maps right after the abs layer, when tapped.
    pub abs_features: Option<Tensor4>,
}

/// Options for [`stegnet_forward`].
#[derive(Debug, Clone, Copy)]
pub struct ForwardOpts {
    pub mode: BnMode,
    /// Update BN running statistics (train mode only). Gradient checking
    /// re-evaluates the forward map and must leave the state untouched.
    pub update_running: bool,
    /// Keep the caches needed for a backward pass.
    pub keep_cache: bool,
    /// Capture the group-1 post-abs feature maps.
    pub tap_abs: bool,
}

impl ForwardOpts {
    pub fn train() -> Self {
        ForwardOpts {
            mode: BnMode::Train,
            update_running: true,
            keep_cache: true,
            tap_abs: false,
        }
    }

    pub fn eval() -> Self {
        ForwardOpts {
            mode: BnMode::Eval,
            update_running: false,
            keep_cache: false,
            tap_abs: false,
        }
    }
}

/// Run the classifier over a residual stack.
pub fn stegnet_forward(
    residuals: &Tensor4,
    params: &mut StegNetParams,
    opts: ForwardOpts,
) -> Result<StegNetForward> {
    if residuals.c() != RESIDUAL_CHANNELS {
        return Err(Error::Dim(format!(
            "classifier expects a {RESIDUAL_CHANNELS}-channel residual stack, got {} channels",
            residuals.c()
        )));
    }
    if opts.keep_cache && opts.mode == BnMode::Eval {
        return Err(Error::Config(
            "backward caches are only available in train mode".into(),
        ));
    }

    let specs = group_specs();
    let mut caches = Vec::new();
    let mut abs_features = None;
    let mut x = residuals.clone();

    for (i, spec) in specs.iter().enumerate() {
        let group = &mut params.groups[i];
        let gname = || format!("group g{}", i + 1);

        let conv_out = conv2d(&x, &group.conv, 1, spec.pad, PadMode::Replicate)
            .map_err(|e| Error::Config(format!("{}: {e}", gname())))?;

        let (pre_bn, kept_conv_out) = if spec.abs_first {
            let a = activation(&conv_out, Activation::Abs);
            if opts.tap_abs && abs_features.is_none() {
                abs_features = Some(a.clone());
            }
            (a, Some(conv_out))
        } else {
            (conv_out, None)
        };

        let (bn_out, bn_cache) = batch_norm(&pre_bn, &mut group.bn, opts.mode, opts.update_running)
            .map_err(|e| Error::Config(format!("{}: {e}", gname())))?;

        let act_out = activation(&bn_out, spec.act);

        let (pooled, pool_cache) = match spec.pool {
            PoolSpec::Avg { size, stride, pad } => {
                let (p, geom) = avg_pool(&act_out, size, stride, pad)
                    .map_err(|e| Error::Config(format!("{}: {e}", gname())))?;
                (p, PoolCache::Avg(geom))
            }
            PoolSpec::Global => {
                let dims = act_out.dims();
                (global_avg_pool(&act_out), PoolCache::Global(dims))
            }
        };

        if opts.keep_cache {
            let act_cache = if spec.act.cache_is_output() {
                act_out
            } else {
                bn_out
            };
            caches.push(GroupCache {
                conv_input: x,
                conv_out: kept_conv_out,
                bn: bn_cache.expect("train mode produces a BN cache"),
                act: act_cache,
                pool: pool_cache,
            });
        }
        x = pooled;
    }

    let probs = dense_softmax(&x, &params.dense)?;
    let cache = opts.keep_cache.then_some(NetCache {
        groups: caches,
        features: x,
    });

    Ok(StegNetForward {
        probs,
        cache,
        abs_features,
    })
}

/// Classification loss from probability rows: batch-averaged negative
/// log-likelihood of the correct class. Returns (loss, clamp events).
pub fn classification_loss(probs: &[Real], labels: &[u8]) -> Result<(Real, usize)> {
    nll_from_probs(probs, labels)
}

/// Backward pass through the whole classifier. Accumulates parameter
/// gradients and returns the gradient with respect to the residual stack,
/// scaled by `upstream`.
pub fn stegnet_backward(
    cache: &NetCache,
    params: &mut StegNetParams,
    probs: &[Real],
    labels: &[u8],
    upstream: Real,
) -> Result<Tensor4> {
    let specs = group_specs();
    let mut grad = dense_softmax_nll_backward(
        &cache.features,
        &mut params.dense,
        probs,
        labels,
        upstream,
        true,
    )?
    .expect("input gradient requested");

    for i in (0..specs.len()).rev() {
        let spec = &specs[i];
        let gcache = &cache.groups[i];
        let group = &mut params.groups[i];

        grad = match &gcache.pool {
            PoolCache::Avg(geom) => avg_pool_backward(geom, &grad)?,
            PoolCache::Global(dims) => global_avg_pool_backward(*dims, &grad)?,
        };
        grad = activation_backward(spec.act, &gcache.act, &grad);
        grad = batch_norm_backward(&gcache.bn, &mut group.bn, &grad)?;
        if spec.abs_first {
            let conv_out = gcache.conv_out.as_ref().expect("abs cache");
            grad = activation_backward(Activation::Abs, conv_out, &grad);
        }
        grad = conv2d_backward(
            &gcache.conv_input,
            &mut group.conv,
            &grad,
            1,
            spec.pad,
            PadMode::Replicate,
            true,
        )?
        .expect("input gradient requested");
    }

    Ok(grad)
}

/// Group-1 conv + abs only: the feature maps exported for inspection.
/// Independent of BN state and batch composition.
pub fn abs_feature_maps(residuals: &Tensor4, params: &StegNetParams) -> Result<Tensor4> {
    let spec = group_specs()[0];
    let conv_out = conv2d(
        residuals,
        &params.groups[0].conv,
        1,
        spec.pad,
        PadMode::Replicate,
    )?;
    Ok(activation(&conv_out, Activation::Abs))
}
