//! Model-level contracts: composed-graph gradients, the dual gradient path
//! into the residual kernels, loss decomposition, and step determinism.

use stegcore::stegosim::{embed_lsbm, gen_cover};
use stegcore::tensor::{Real, Tensor4};
use stegcore::trainer::{
    check_joint_graph, forward_backward, init_model, joint_loss, train_step, Batch, StepOptions,
    TrainConfig,
};

/// A 2-sample cover/stego batch cropped to `side x side`, normalized.
fn toy_batch(side: usize, seed: u64) -> Batch {
    let cover = gen_cover(32, 32, seed);
    let stego = embed_lsbm(&cover, 0.4, seed ^ 0xABCD).unwrap();
    batch_from_images(&cover, &stego, side)
}

fn batch_from_images(
    cover: &stegcore::pgm::GrayImage,
    stego: &stegcore::pgm::GrayImage,
    side: usize,
) -> Batch {
    let crop = |img: &stegcore::pgm::GrayImage| -> Vec<Real> {
        let mut out = Vec::with_capacity(side * side);
        for y in 0..side {
            for x in 0..side {
                out.push(img.get(x, y) as Real / 255.0);
            }
        }
        out
    };
    let c = crop(cover);
    let s = crop(stego);
    let mut x = Tensor4::zeros(2, 1, side, side);
    x.data_mut()[..side * side].copy_from_slice(&c);
    x.data_mut()[side * side..].copy_from_slice(&s);
    let mut covers = Tensor4::zeros(2, 1, side, side);
    covers.data_mut()[..side * side].copy_from_slice(&c);
    covers.data_mut()[side * side..].copy_from_slice(&c);
    Batch {
        x,
        covers,
        labels: vec![0, 1],
    }
}

#[test]
fn residual_kernel_gradients_match_finite_differences_of_full_joint_loss() {
    let cfg = TrainConfig::default();
    let (model, batch) = stegcore::trainer::gradcheck_fixture(16, 7).unwrap();
    let report = check_joint_graph(&model, &batch, cfg.lambda, 1e-5, 1e-3, |name| {
        name.starts_with("residual.")
    })
    .unwrap();
    assert_eq!(report.blocks.len(), 2);
    for line in report.lines() {
        eprintln!("{line}");
    }
    assert!(report.passed(), "max err {}", report.max_rel_err());
}

#[test]
fn selected_classifier_blocks_match_finite_differences() {
    let cfg = TrainConfig::default();
    let (model, batch) = stegcore::trainer::gradcheck_fixture(16, 11).unwrap();
    // A cross-section of the classifier: first conv group, a BN affine pair,
    // the dense head. The acceptance suite sweeps every block.
    let report = check_joint_graph(&model, &batch, cfg.lambda, 1e-5, 1e-3, |name| {
        matches!(
            name,
            "g1.conv" | "g1.bn.gamma" | "g1.bn.beta" | "dense.weights" | "dense.bias"
        )
    })
    .unwrap();
    assert_eq!(report.blocks.len(), 5);
    for line in report.lines() {
        eprintln!("{line}");
    }
    assert!(report.passed(), "max err {}", report.max_rel_err());
}

#[test]
fn loss_decomposition_identity_is_exact() {
    let cfg = TrainConfig::default();
    let mut model = init_model(&cfg);
    let batch = toy_batch(16, 13);
    let parts = joint_loss(&batch, &mut model, cfg.lambda).unwrap();
    let recomposed = (1.0 - cfg.lambda) * parts.jc + cfg.lambda * parts.jr;
    let rel = (parts.j - recomposed).abs() / parts.j.abs().max(1e-300);
    assert!(rel <= 1e-15, "relative decomposition error {rel}");
}

#[test]
fn reconstruction_loss_positive_for_stego_at_init() {
    let cfg = TrainConfig::default();
    let mut model = init_model(&cfg);
    let batch = toy_batch(16, 17);
    // The stego sample differs from its cover, so Jr must be strictly
    // positive at initialization.
    let parts = joint_loss(&batch, &mut model, cfg.lambda).unwrap();
    assert!(parts.jr > 0.0, "jr = {}", parts.jr);
}

#[test]
fn zero_learning_rate_leaves_parameters_bit_identical() {
    let cfg = TrainConfig::default();
    let mut model = init_model(&cfg);
    let reference = model.clone();
    let batch = toy_batch(16, 19);
    train_step(&batch, &mut model, 0.0, &cfg, StepOptions::default()).unwrap();
    let mut after = model.blocks_mut();
    let mut before = reference;
    let before = before.blocks_mut();
    for (a, b) in after.iter_mut().zip(before) {
        assert_eq!(a.name, b.name);
        assert_eq!(a.weights, b.weights, "block {} moved at lr 0", a.name);
    }
}

#[test]
fn severing_classifier_path_changes_residual_updates() {
    let cfg = TrainConfig::default();
    let batch = toy_batch(16, 23);

    let mut with_path = init_model(&cfg);
    let mut severed = with_path.clone();
    train_step(&batch, &mut with_path, cfg.lr0, &cfg, StepOptions::default()).unwrap();
    train_step(
        &batch,
        &mut severed,
        cfg.lr0,
        &cfg,
        StepOptions {
            sever_classifier_path: true,
        },
    )
    .unwrap();

    let max_diff = |a: &[Real], b: &[Real]| -> Real {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, Real::max)
    };
    let d5 = max_diff(
        &with_path.residual.k5.weights,
        &severed.residual.k5.weights,
    );
    let d3 = max_diff(
        &with_path.residual.k3.weights,
        &severed.residual.k3.weights,
    );
    assert!(
        d5 > 1e-12 || d3 > 1e-12,
        "severing the classifier path must change the residual update (d5 {d5}, d3 {d3})"
    );
}

#[test]
fn train_step_is_deterministic() {
    let cfg = TrainConfig::default();
    let batch = toy_batch(16, 29);
    let mut a = init_model(&cfg);
    let mut b = a.clone();
    train_step(&batch, &mut a, cfg.lr0, &cfg, StepOptions::default()).unwrap();
    train_step(&batch, &mut b, cfg.lr0, &cfg, StepOptions::default()).unwrap();
    for (x, y) in a.blocks_mut().iter().zip(b.blocks_mut().iter()) {
        assert_eq!(x.weights, y.weights);
        assert_eq!(x.velocity, y.velocity);
    }
}

#[test]
fn fresh_init_predictions_hover_around_half() {
    use stegcore::ops::batchnorm::BnMode;
    use stegcore::stegnet::{stegnet_forward, ForwardOpts};
    use stegcore::residual::residual_forward;

    let cfg = TrainConfig::default();
    let mut model = init_model(&cfg);
    // 64 seeded random inputs in one batch.
    let mut x = Tensor4::zeros(64, 1, 32, 32);
    {
        use rand::Rng;
        let mut rng = stegcore::rng::rng_from_seed(31);
        for v in x.data_mut() {
            *v = rng.gen_range(0.0..1.0);
        }
    }
    let res = residual_forward(&x, &model.residual).unwrap();
    let stack = Tensor4::stack_channels(&[&res.res5, &res.res3]).unwrap();
    let out = stegnet_forward(
        &stack,
        &mut model.classifier,
        ForwardOpts {
            mode: BnMode::Train,
            update_running: false,
            keep_cache: false,
            tap_abs: false,
        },
    )
    .unwrap();
    let mean_p1: Real = out.probs.chunks(2).map(|p| p[1]).sum::<Real>() / 64.0;
    assert!(
        (mean_p1 - 0.5).abs() <= 0.2,
        "near-symmetric init expected, mean p1 = {mean_p1}"
    );
}

#[test]
fn forward_backward_rejects_bad_lambda() {
    let cfg = TrainConfig::default();
    let mut model = init_model(&cfg);
    let batch = toy_batch(16, 37);
    assert!(forward_backward(&batch, &mut model, 1.5, StepOptions::default(), false).is_err());
}
