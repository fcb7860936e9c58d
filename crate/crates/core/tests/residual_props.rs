//! Residual network properties: linearity in the input, the fixed
//! initialization identities, and the relationship between the initial
//! kernels and the classic 5x5 square high-pass predictor.

use proptest::prelude::*;
use stegcore::ops::conv::{conv2d, ConvParams, PadMode};
use stegcore::residual::{init_residual_params, residual_forward, INIT_K3, INIT_K5};
use stegcore::rng::rng_from_seed;
use stegcore::tensor::{Real, Tensor4};

use rand::Rng;

/// The classic square 5x5 high-pass predictor kernel (center -12/12); the
/// initial 5x5 reconstruction kernel is this matrix with its center zeroed.
pub const KV_KERNEL: [[Real; 5]; 5] = [
    [-1.0 / 12.0, 2.0 / 12.0, -2.0 / 12.0, 2.0 / 12.0, -1.0 / 12.0],
    [2.0 / 12.0, -6.0 / 12.0, 8.0 / 12.0, -6.0 / 12.0, 2.0 / 12.0],
    [-2.0 / 12.0, 8.0 / 12.0, -12.0 / 12.0, 8.0 / 12.0, -2.0 / 12.0],
    [2.0 / 12.0, -6.0 / 12.0, 8.0 / 12.0, -6.0 / 12.0, 2.0 / 12.0],
    [-1.0 / 12.0, 2.0 / 12.0, -2.0 / 12.0, 2.0 / 12.0, -1.0 / 12.0],
];

fn random_image(h: usize, w: usize, seed: u64) -> Tensor4 {
    let mut rng = rng_from_seed(seed);
    let mut t = Tensor4::zeros(1, 1, h, w);
    for v in t.data_mut() {
        *v = rng.gen_range(0.0..1.0);
    }
    t
}

#[test]
fn effective_residual_filter_at_init_is_negated_square_kernel() {
    // res5 = x - k5 * x = (delta - k5) * x, and delta - K_init5 = -K because
    // the two matrices differ only in the center tap (0 vs -1).
    let params = init_residual_params();
    for (i, row) in KV_KERNEL.iter().enumerate() {
        for (j, &kv) in row.iter().enumerate() {
            let delta = if i == 2 && j == 2 { 1.0 } else { 0.0 };
            let effective = delta - params.k5.weights[i * 5 + j];
            assert!(
                (effective - -kv).abs() < 1e-12,
                "effective[{i}][{j}] = {effective}, -K = {}",
                -kv
            );
        }
    }
}

#[test]
fn interior_residual_at_init_equals_negated_square_kernel_response() {
    let x = random_image(12, 12, 61);
    let params = init_residual_params();
    let out = residual_forward(&x, &params).unwrap();

    let kv =
        ConvParams::from_matrix(&KV_KERNEL.iter().map(|r| r.to_vec()).collect::<Vec<_>>());
    let kv_response = conv2d(&x, &kv, 1, 2, PadMode::Replicate).unwrap();

    // Interior only: replicate padding makes borders equivalent too here,
    // but the identity is asserted where no padding is involved at all.
    for y in 2..10 {
        for xx in 2..10 {
            let diff = (out.res5.at(0, 0, y, xx) - -kv_response.at(0, 0, y, xx)).abs();
            assert!(diff < 1e-12, "({y},{xx}): {diff}");
        }
    }
}

#[test]
fn init_matrices_match_constants() {
    let params = init_residual_params();
    let flat5: Vec<_> = INIT_K5.iter().flatten().copied().collect();
    assert_eq!(params.k5.weights, flat5);
    let flat3: Vec<_> = INIT_K3.iter().flatten().copied().collect();
    assert_eq!(params.k3.weights, flat3);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    /// residual_forward is linear in x for fixed params (no bias, replicate
    /// padding is linear): res(a*x + b*y) = a*res(x) + b*res(y).
    #[test]
    fn residual_is_linear_in_input(
        seed_x in 0u64..10_000,
        seed_y in 10_000u64..20_000,
        a in -2.0f64..2.0,
        b in -2.0f64..2.0,
    ) {
        let params = init_residual_params();
        let x = random_image(9, 9, seed_x);
        let y = random_image(9, 9, seed_y);
        let combined = x.scale(a as Real).add_scaled(&y, b as Real).unwrap();

        let rx = residual_forward(&x, &params).unwrap();
        let ry = residual_forward(&y, &params).unwrap();
        let rc = residual_forward(&combined, &params).unwrap();

        for ((&c, &px), &py) in rc.res5.data().iter().zip(rx.res5.data()).zip(ry.res5.data()) {
            prop_assert!((c - (a as Real * px + b as Real * py)).abs() < 1e-10);
        }
        for ((&c, &px), &py) in rc.res3.data().iter().zip(rx.res3.data()).zip(ry.res3.data()) {
            prop_assert!((c - (a as Real * px + b as Real * py)).abs() < 1e-10);
        }
    }
}
