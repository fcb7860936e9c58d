//! Per-primitive gradient checks over small deterministic fixtures.
//!
//! Each check projects the primitive's output onto a fixed random direction
//! to get a scalar loss, runs the hand-written backward with that direction
//! as the output gradient, and sweeps every coordinate with central finite
//! differences. Smooth primitives are held to 1e-4; abs/relu to 1e-3 with
//! coordinates within `2 * eps` of the kink excluded.

use crate::error::Result;
use crate::gradcheck::{check_block, GradCheckReport};
use crate::ops::activation::{activation, activation_backward, Activation};
use crate::ops::batchnorm::{batch_norm, batch_norm_backward, BatchNormState, BnMode};
use crate::ops::conv::{conv2d, conv2d_backward, ConvParams, PadMode};
use crate::ops::dense::{dense_softmax_nll, dense_softmax_nll_backward, DenseParams};
use crate::ops::pool::{
    avg_pool, avg_pool_backward, global_avg_pool, global_avg_pool_backward,
};
use crate::ops::smooth_l1::{smooth_l1, smooth_l1_backward};
use crate::rng::rng_from_seed;
use crate::tensor::{Real, Tensor4};
use rand::Rng;

pub const SMOOTH_TOL: Real = 1e-4;
pub const KINKED_TOL: Real = 1e-3;

fn random_tensor(n: usize, c: usize, h: usize, w: usize, seed: u64, scale: Real) -> Tensor4 {
    let mut rng = rng_from_seed(seed);
    let mut t = Tensor4::zeros(n, c, h, w);
    for v in t.data_mut() {
        *v = rng.gen_range(-1.0..1.0) * scale;
    }
    t
}

/// Fixed projection direction with the same shape as `t`.
fn direction_like(t: &Tensor4, seed: u64) -> Tensor4 {
    let (n, c, h, w) = t.dims();
    random_tensor(n, c, h, w, seed, 1.0)
}

fn dot(t: &Tensor4, d: &Tensor4) -> Real {
    t.data().iter().zip(d.data()).map(|(a, b)| a * b).sum()
}

fn conv_checks(eps: Real, report: &mut GradCheckReport) -> Result<()> {
    for (mode, label) in [(PadMode::Zero, "zero"), (PadMode::Replicate, "replicate")] {
        let input = random_tensor(1, 2, 6, 6, 21, 1.0);
        let mut params = ConvParams::new(3, 2, 3, 3);
        let mut rng = rng_from_seed(22);
        for v in &mut params.weights {
            *v = rng.gen_range(-0.5..0.5);
        }
        let out = conv2d(&input, &params, 1, 1, mode)?;
        let dir = direction_like(&out, 23);

        params.zero_grad();
        let grad_in = conv2d_backward(&input, &mut params, &dir, 1, 1, mode, true)?.unwrap();

        // Weights.
        let mut values = params.weights.clone();
        let analytic = params.grad.clone();
        let weights_eval = {
            let input = &input;
            let dir = &dir;
            let mut probe = params.clone();
            move |vals: &[Real]| -> Result<Real> {
                probe.weights.copy_from_slice(vals);
                Ok(dot(&conv2d(input, &probe, 1, 1, mode)?, dir))
            }
        };
        report.push(check_block(
            format!("primitive.conv.{label}.weights"),
            SMOOTH_TOL,
            &mut values,
            &analytic,
            weights_eval,
            eps,
            |_| false,
        )?);

        // Input.
        let mut values = input.data().to_vec();
        let input_eval = {
            let dir = &dir;
            let params = &params;
            let mut probe = input.clone();
            move |vals: &[Real]| -> Result<Real> {
                probe.data_mut().copy_from_slice(vals);
                Ok(dot(&conv2d(&probe, params, 1, 1, mode)?, dir))
            }
        };
        report.push(check_block(
            format!("primitive.conv.{label}.input"),
            SMOOTH_TOL,
            &mut values,
            grad_in.data(),
            input_eval,
            eps,
            |_| false,
        )?);
    }
    Ok(())
}

fn batchnorm_checks(eps: Real, report: &mut GradCheckReport) -> Result<()> {
    let input = random_tensor(2, 3, 4, 4, 31, 2.0);
    let mut state = BatchNormState::new(3);
    let mut rng = rng_from_seed(32);
    for g in &mut state.gamma {
        *g = rng.gen_range(0.5..1.5);
    }
    for b in &mut state.beta {
        *b = rng.gen_range(-0.5..0.5);
    }
    let (out, cache) = batch_norm(&input, &mut state, BnMode::Train, false)?;
    let cache = cache.unwrap();
    let dir = direction_like(&out, 33);

    state.zero_grad();
    let grad_in = batch_norm_backward(&cache, &mut state, &dir)?;

    let base = state.clone();
    for (field, analytic) in [("gamma", &state.grad_gamma), ("beta", &state.grad_beta)] {
        let mut values = if field == "gamma" {
            base.gamma.clone()
        } else {
            base.beta.clone()
        };
        let analytic = analytic.clone();
        let eval = {
            let input = &input;
            let dir = &dir;
            let mut probe = base.clone();
            move |vals: &[Real]| -> Result<Real> {
                if field == "gamma" {
                    probe.gamma.copy_from_slice(vals);
                } else {
                    probe.beta.copy_from_slice(vals);
                }
                let (out, _) = batch_norm(input, &mut probe, BnMode::Train, false)?;
                Ok(dot(&out, dir))
            }
        };
        report.push(check_block(
            format!("primitive.batchnorm.{field}"),
            SMOOTH_TOL,
            &mut values,
            &analytic,
            eval,
            eps,
            |_| false,
        )?);
    }

    let mut values = input.data().to_vec();
    let eval = {
        let dir = &dir;
        let mut probe_state = base.clone();
        let mut probe = input.clone();
        move |vals: &[Real]| -> Result<Real> {
            probe.data_mut().copy_from_slice(vals);
            let (out, _) = batch_norm(&probe, &mut probe_state, BnMode::Train, false)?;
            Ok(dot(&out, dir))
        }
    };
    report.push(check_block(
        "primitive.batchnorm.input",
        SMOOTH_TOL,
        &mut values,
        grad_in.data(),
        eval,
        eps,
        |_| false,
    )?);
    Ok(())
}

fn activation_checks(eps: Real, report: &mut GradCheckReport) -> Result<()> {
    for (kind, label, tol) in [
        (Activation::Abs, "abs", KINKED_TOL),
        (Activation::Relu, "relu", KINKED_TOL),
        (Activation::Tanh, "tanh", SMOOTH_TOL),
    ] {
        let input = random_tensor(1, 2, 4, 4, 41, 1.0);
        let out = activation(&input, kind);
        let dir = direction_like(&out, 42);
        let cache = if kind.cache_is_output() { &out } else { &input };
        let grad_in = activation_backward(kind, cache, &dir);

        let mut values = input.data().to_vec();
        let kink_skip: Vec<bool> = input
            .data()
            .iter()
            .map(|&x| kind != Activation::Tanh && x.abs() < 2.0 * eps)
            .collect();
        let eval = {
            let dir = &dir;
            let mut probe = input.clone();
            move |vals: &[Real]| -> Result<Real> {
                probe.data_mut().copy_from_slice(vals);
                Ok(dot(&activation(&probe, kind), dir))
            }
        };
        report.push(check_block(
            format!("primitive.activation.{label}"),
            tol,
            &mut values,
            grad_in.data(),
            eval,
            eps,
            |i| kink_skip[i],
        )?);
    }
    Ok(())
}

fn pool_checks(eps: Real, report: &mut GradCheckReport) -> Result<()> {
    let input = random_tensor(1, 2, 8, 8, 51, 1.0);
    let (out, geom) = avg_pool(&input, 5, 2, 2)?;
    let dir = direction_like(&out, 52);
    let grad_in = avg_pool_backward(&geom, &dir)?;

    let mut values = input.data().to_vec();
    let eval = {
        let dir = &dir;
        let mut probe = input.clone();
        move |vals: &[Real]| -> Result<Real> {
            probe.data_mut().copy_from_slice(vals);
            Ok(dot(&avg_pool(&probe, 5, 2, 2)?.0, dir))
        }
    };
    report.push(check_block(
        "primitive.avg_pool.input",
        SMOOTH_TOL,
        &mut values,
        grad_in.data(),
        eval,
        eps,
        |_| false,
    )?);

    let out = global_avg_pool(&input);
    let dir = direction_like(&out, 53);
    let grad_in = global_avg_pool_backward(input.dims(), &dir)?;
    let mut values = input.data().to_vec();
    let eval = {
        let dir = &dir;
        let mut probe = input.clone();
        move |vals: &[Real]| -> Result<Real> {
            probe.data_mut().copy_from_slice(vals);
            Ok(dot(&global_avg_pool(&probe), dir))
        }
    };
    report.push(check_block(
        "primitive.global_avg_pool.input",
        SMOOTH_TOL,
        &mut values,
        grad_in.data(),
        eval,
        eps,
        |_| false,
    )?);
    Ok(())
}

fn dense_checks(eps: Real, report: &mut GradCheckReport) -> Result<()> {
    let features = random_tensor(3, 4, 1, 1, 61, 1.0);
    let labels = [0u8, 1, 1];
    let mut params = DenseParams::new(2, 4);
    let mut rng = rng_from_seed(62);
    for v in &mut params.weights {
        *v = rng.gen_range(-0.5..0.5);
    }
    for b in &mut params.bias {
        *b = rng.gen_range(-0.2..0.2);
    }

    let out = dense_softmax_nll(&features, &params, &labels)?;
    params.zero_grad();
    let grad_in =
        dense_softmax_nll_backward(&features, &mut params, &out.probs, &labels, 1.0, true)?
            .unwrap();

    let base = params.clone();
    for field in ["weights", "bias"] {
        let mut values = if field == "weights" {
            base.weights.clone()
        } else {
            base.bias.clone()
        };
        let analytic = if field == "weights" {
            params.grad_w.clone()
        } else {
            params.grad_b.clone()
        };
        let eval = {
            let features = &features;
            let mut probe = base.clone();
            move |vals: &[Real]| -> Result<Real> {
                if field == "weights" {
                    probe.weights.copy_from_slice(vals);
                } else {
                    probe.bias.copy_from_slice(vals);
                }
                Ok(dense_softmax_nll(features, &probe, &labels)?.loss)
            }
        };
        report.push(check_block(
            format!("primitive.dense.{field}"),
            SMOOTH_TOL,
            &mut values,
            &analytic,
            eval,
            eps,
            |_| false,
        )?);
    }

    let mut values = features.data().to_vec();
    let eval = {
        let params = &base;
        let mut probe = features.clone();
        move |vals: &[Real]| -> Result<Real> {
            probe.data_mut().copy_from_slice(vals);
            Ok(dense_softmax_nll(&probe, params, &labels)?.loss)
        }
    };
    report.push(check_block(
        "primitive.dense.features",
        SMOOTH_TOL,
        &mut values,
        grad_in.data(),
        eval,
        eps,
        |_| false,
    )?);
    Ok(())
}

fn smooth_l1_checks(eps: Real, report: &mut GradCheckReport) -> Result<()> {
    // Differences span both branches; none sit within eps of |d| = 1.
    let target = Tensor4::zeros(1, 1, 2, 3);
    let pred = Tensor4::from_vec(1, 1, 2, 3, vec![0.5, -0.3, 1.7, -2.4, 0.05, 0.9])?;
    let loss_grad = smooth_l1_backward(&pred, &target, 1.0)?;
    let mut values = pred.data().to_vec();
    let eval = {
        let target = &target;
        let mut probe = pred.clone();
        move |vals: &[Real]| -> Result<Real> {
            probe.data_mut().copy_from_slice(vals);
            smooth_l1(&probe, target)
        }
    };
    report.push(check_block(
        "primitive.smooth_l1.pred",
        SMOOTH_TOL,
        &mut values,
        loss_grad.data(),
        eval,
        eps,
        |_| false,
    )?);
    Ok(())
}

/// Gradient-check every layer primitive over small fixtures.
pub fn check_primitives(eps: Real) -> Result<GradCheckReport> {
    let mut report = GradCheckReport::new(eps);
    conv_checks(eps, &mut report)?;
    batchnorm_checks(eps, &mut report)?;
    activation_checks(eps, &mut report)?;
    pool_checks(eps, &mut report)?;
    dense_checks(eps, &mut report)?;
    smooth_l1_checks(eps, &mut report)?;
    Ok(report)
}
