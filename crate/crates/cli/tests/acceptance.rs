//! Acceptance suite: one test per criterion, each printing a pass/fail line.
//!
//! Full-scale reproduction of published detection-error rates is out of
//! reach at desk scale (it needs the 512x512 camera-image corpus, the
//! content-adaptive embedders and GPU-length training), so this suite
//! verifies the architecture on seeded synthetic LSB-matching pairs:
//! gradient correctness, initialization fidelity, loss identities,
//! optimization behavior, an end-to-end learning signal, schedule
//! conformance, determinism, and simulator statistics.
//!
//! Run with `cargo test -p stegcli --test acceptance` (add `--nocapture`
//! to see per-criterion lines). The heavy criteria serialize on a mutex so
//! their runtime bounds are measured without mutual contention.

use once_cell::sync::Lazy;
use std::sync::Mutex;
use std::time::Instant;

use stegcli::commands::export;
use stegcli::config::RunConfig;
use stegcore::gradcheck::primitives::check_primitives;
use stegcore::residual::{init_residual_params, residual_forward, INIT_K3, INIT_K5};
use stegcore::stegosim::{embed_lsbm, gen_cover, make_dataset, DatasetSpec, SplitKind};
use stegcore::tensor::{Real, Tensor4};
use stegcore::trainer::{
    check_joint_graph, evaluate, fit, gradcheck_fixture, init_model, joint_loss,
    lr_schedule_update, parse_history_csv, prepare_dataset, train_step, write_history_csv,
    ScheduleDecision, StepOptions, TrainConfig, TrainState,
};

/// Serializes the expensive criteria so wall-clock bounds are honest.
static HEAVY: Mutex<()> = Mutex::new(());

fn pass(criterion: u32, detail: impl AsRef<str>) {
    println!("criterion {criterion}: PASS — {}", detail.as_ref());
}

// ---------------------------------------------------------------------------
// Criterion 6 machinery, shared with criteria 7 and 9.

const E2E_SEED: u64 = 42;
const E2E_PAIRS: usize = 2000;
const E2E_TEST_PAIRS: usize = 500;
const E2E_SIDE: usize = 64;
const E2E_RATE: Real = 0.4;
const E2E_ERROR_BOUND: Real = 0.40;

fn e2e_config() -> TrainConfig {
    TrainConfig {
        seed: E2E_SEED,
        max_epochs: 100,
        // Stop once validation is comfortably below the acceptance bound;
        // the bound itself is asserted on the held-out test split.
        target_val_error: Some(0.35),
        ..TrainConfig::default()
    }
}

struct E2eRun {
    history_csv: Vec<u8>,
    epochs: usize,
    test_error: Real,
    elapsed_s: f64,
}

fn run_e2e(severed: bool) -> E2eRun {
    let t0 = Instant::now();
    let spec = DatasetSpec {
        n_pairs: E2E_PAIRS,
        test_pairs: E2E_TEST_PAIRS,
        width: E2E_SIDE,
        height: E2E_SIDE,
        rate_bpp: E2E_RATE,
        master_seed: E2E_SEED,
    };
    let data = make_dataset(&spec).expect("dataset generation");
    let prepared = prepare_dataset(&data).expect("dataset preparation");
    let cfg = e2e_config();
    let mut model = init_model(&cfg);
    let result = fit(
        &mut model,
        &prepared,
        &cfg,
        StepOptions {
            sever_classifier_path: severed,
        },
        |_, _| Ok(()),
    )
    .expect("training");

    let dir = tempfile::tempdir().expect("tempdir");
    let csv_path = dir.path().join("history.csv");
    write_history_csv(&csv_path, &result.history).expect("history csv");
    let history_csv = std::fs::read(&csv_path).expect("read history csv");

    let mut best = result.best_model;
    let report = evaluate(&mut best, &prepared, SplitKind::Test, cfg.batch_size / 2)
        .expect("test evaluation");
    E2eRun {
        history_csv,
        epochs: result.history.len(),
        test_error: report.error,
        elapsed_s: t0.elapsed().as_secs_f64(),
    }
}

/// First full run of the criterion-6 protocol, shared by criteria 6, 7, 9.
static E2E_RUN_A: Lazy<E2eRun> = Lazy::new(|| run_e2e(false));

// ---------------------------------------------------------------------------

#[test]
fn criterion_01_desk_scale_substitution() {
    // Stated explicitly: published full-scale error rates are not
    // reproducible here (they need the 512x512 camera corpus, the
    // content-adaptive embedders, GPU-length training). The suite below
    // substitutes property-based and scaled-down checks over seeded
    // LSB-matching pairs; the end-to-end criterion runs on the parameters
    // asserted here.
    assert_eq!(E2E_PAIRS, 2000);
    assert_eq!(E2E_SIDE, 64);
    assert_eq!(E2E_RATE, 0.4);
    pass(
        1,
        "full-scale error-rate reproduction out of scope; verified via \
         scaled-down synthetic LSB-matching protocol (2000 pairs, 64x64, 0.4 bpp)",
    );
}

#[test]
fn criterion_02_gradient_correctness() {
    let _guard = HEAVY.lock().unwrap_or_else(|e| e.into_inner());
    let t0 = Instant::now();
    let eps: Real = 1e-5;

    let primitives = check_primitives(eps).expect("primitive checks");
    for b in &primitives.blocks {
        assert!(
            b.within_tolerance(),
            "primitive block failed: {}",
            b.line()
        );
    }

    let (model, batch) = gradcheck_fixture(16, 2024).expect("fixture");
    let lambda = TrainConfig::default().lambda;
    let graph = check_joint_graph(&model, &batch, lambda, eps, 1e-3, |_| true)
        .expect("composed-graph check");
    assert_eq!(graph.blocks.len(), 19, "all trainable blocks swept");
    for b in &graph.blocks {
        assert!(b.within_tolerance(), "graph block failed: {}", b.line());
    }

    let elapsed = t0.elapsed().as_secs_f64();
    assert!(elapsed < 120.0, "gradcheck took {elapsed:.1}s (>= 2 min)");
    pass(
        2,
        format!(
            "{} primitive blocks and {} graph blocks within tolerance, max rel err {:.2e}, {:.1}s",
            primitives.blocks.len(),
            graph.blocks.len(),
            primitives.max_rel_err().max(graph.max_rel_err()),
            elapsed
        ),
    );
}

#[test]
fn criterion_03_initialization_fidelity() {
    // Exported kernels at init equal the fixed matrices exactly.
    let model = stegcore::ModelState::new();
    let dir = tempfile::tempdir().unwrap();
    export::export_filters(&model, dir.path()).unwrap();

    let k5 = export::read_matrix_csv(&dir.path().join("filter_k5.csv")).unwrap();
    for (row, expect) in k5.iter().zip(INIT_K5.iter()) {
        for (a, b) in row.iter().zip(expect.iter()) {
            assert_eq!(a, b, "exported k5 differs from the fixed init");
        }
    }
    let k3 = export::read_matrix_csv(&dir.path().join("filter_k3.csv")).unwrap();
    for (row, expect) in k3.iter().zip(INIT_K3.iter()) {
        for (a, b) in row.iter().zip(expect.iter()) {
            assert_eq!(a, b, "exported k3 differs from the fixed init");
        }
    }

    // Effective residual filter at init is the negated classic square
    // high-pass predictor: identical to k5 off center, center -(-1) = 1.
    let eff = export::read_matrix_csv(&dir.path().join("filter_k5_effective.csv")).unwrap();
    for i in 0..5 {
        for j in 0..5 {
            let expected = if (i, j) == (2, 2) { 1.0 } else { -INIT_K5[i][j] };
            assert!(
                (eff[i][j] - expected).abs() < 1e-12,
                "effective[{i}][{j}] = {}, expected {expected}",
                eff[i][j]
            );
        }
    }

    // Flat image: residual is zero everywhere, borders included (replicate
    // padding); exact analytically, at the few-ulp floor in f64.
    let params = init_residual_params();
    for &c in &[0.0, 0.42, 1.0] {
        let x = Tensor4::filled(1, 1, 16, 16, c);
        let out = residual_forward(&x, &params).unwrap();
        for &v in out.res5.data().iter().chain(out.res3.data()) {
            assert!(v.abs() <= 1e-15, "flat residual {v:e} at level {c}");
        }
    }
    pass(
        3,
        "exported kernels bit-equal to fixed init; effective filter = negated \
         square HPF within 1e-12; flat-image residual zero (<= 1e-15)",
    );
}

#[test]
fn criterion_04_loss_identities() {
    // Branch values of the robust loss and the uniform-prediction NLL.
    use stegcore::ops::smooth_l1::huber;
    assert!((huber(0.5) - 0.125).abs() < 1e-15);
    assert!((huber(3.0) - 2.5).abs() < 1e-15);
    let (nll, _) = stegcore::stegnet::classification_loss(&[0.5, 0.5], &[1]).unwrap();
    assert!((nll - (2.0 as Real).ln()).abs() < 1e-12);

    // Joint decomposition at lambda = 0.999 on every logged row of a real
    // training run.
    let cfg = TrainConfig {
        seed: 5,
        max_epochs: 3,
        ..TrainConfig::default()
    };
    assert_eq!(cfg.lambda, 0.999, "default lambda");
    let spec = DatasetSpec {
        n_pairs: 20,
        test_pairs: 0,
        width: 32,
        height: 32,
        rate_bpp: 0.4,
        master_seed: 5,
    };
    let data = make_dataset(&spec).unwrap();
    let prepared = prepare_dataset(&data).unwrap();
    let mut model = init_model(&cfg);
    let result = fit(&mut model, &prepared, &cfg, StepOptions::default(), |_, _| Ok(())).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("history.csv");
    write_history_csv(&path, &result.history).unwrap();
    let rows = parse_history_csv(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(rows.len(), 3);
    for r in &rows {
        let recomposed = (1.0 - cfg.lambda) * r.jc + cfg.lambda * r.jr;
        let rel = (r.j - recomposed).abs() / r.j.abs().max(Real::MIN_POSITIVE);
        assert!(rel <= 1e-15, "epoch {}: decomposition rel err {rel:e}", r.epoch);
    }

    // The resolved config echoes lambda = 0.999.
    let run_cfg = RunConfig::default();
    assert!(run_cfg.to_text().contains("lambda = 0.999"));

    // Spot check on a live batch as well.
    let batch = prepared.batch(&[0, 1]);
    let parts = joint_loss(&batch, &mut model, cfg.lambda).unwrap();
    let rel = (parts.j - ((1.0 - cfg.lambda) * parts.jc + cfg.lambda * parts.jr)).abs()
        / parts.j.abs().max(Real::MIN_POSITIVE);
    assert!(rel <= 1e-15);
    pass(
        4,
        "J = (1-lambda)Jc + lambda*Jr exact on every logged row; huber(0.5) = 0.125, \
         huber(3) = 2.5; NLL(0.5) = ln 2",
    );
}

#[test]
fn criterion_05_optimization_smoke() {
    let _guard = HEAVY.lock().unwrap_or_else(|e| e.into_inner());

    let overfit = || {
        // Fixed 8-pair batch at 32x32, default recipe, 200 steps.
        let spec = DatasetSpec {
            n_pairs: 10,
            test_pairs: 0,
            width: 32,
            height: 32,
            rate_bpp: 0.4,
            master_seed: 42,
        };
        let data = make_dataset(&spec).unwrap();
        let prepared = prepare_dataset(&data).unwrap();
        let batch = prepared.batch(&[0, 1, 2, 3, 4, 5, 6, 7]);
        let cfg = TrainConfig::default();
        let mut model = init_model(&cfg);
        let j0 = joint_loss(&batch, &mut model, cfg.lambda).unwrap().j;
        for _ in 0..200 {
            train_step(&batch, &mut model, cfg.lr0, &cfg, StepOptions::default()).unwrap();
        }
        let j200 = joint_loss(&batch, &mut model, cfg.lambda).unwrap().j;
        (j0, j200)
    };

    let t0 = Instant::now();
    #[cfg(feature = "parallel")]
    let (j0, j200) = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap()
        .install(overfit);
    #[cfg(not(feature = "parallel"))]
    let (j0, j200) = overfit();
    let elapsed = t0.elapsed().as_secs_f64();

    assert!(
        j200 < 0.1 * j0,
        "joint loss only fell from {j0:.3e} to {j200:.3e} in 200 steps"
    );
    assert!(elapsed < 300.0, "overfit smoke took {elapsed:.1}s (>= 5 min)");
    pass(
        5,
        format!(
            "single-threaded 200-step overfit: J {j0:.3e} -> {j200:.3e} \
             (ratio {:.3}), {elapsed:.1}s",
            j200 / j0
        ),
    );
}

#[test]
fn criterion_06_end_to_end_learning_signal() {
    let _guard = HEAVY.lock().unwrap_or_else(|e| e.into_inner());
    let run = &*E2E_RUN_A;
    assert!(run.epochs <= 100, "ran {} epochs", run.epochs);
    assert!(
        run.test_error < E2E_ERROR_BOUND,
        "held-out detection error {:.4} (bound {E2E_ERROR_BOUND})",
        run.test_error
    );
    pass(
        6,
        format!(
            "2000 pairs, 64x64, LSB matching 0.4 bpp: held-out error {:.4} \
             after {} epoch(s), {:.0}s",
            run.test_error, run.epochs, run.elapsed_s
        ),
    );
}

#[test]
fn criterion_07_dual_path_gradient_contract() {
    let _guard = HEAVY.lock().unwrap_or_else(|e| e.into_inner());

    // (a) The theta_r update changes when the classifier path is severed.
    let spec = DatasetSpec {
        n_pairs: 10,
        test_pairs: 0,
        width: 32,
        height: 32,
        rate_bpp: 0.4,
        master_seed: 7,
    };
    let data = make_dataset(&spec).unwrap();
    let prepared = prepare_dataset(&data).unwrap();
    let batch = prepared.batch(&[0, 1, 2, 3]);
    let cfg = TrainConfig::default();
    let base = init_model(&cfg);
    let mut with_path = base.clone();
    let mut severed = base.clone();
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
    let diff = |a: &[Real], b: &[Real]| {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, Real::max)
    };
    let d5 = diff(&with_path.residual.k5.weights, &severed.residual.k5.weights);
    let d3 = diff(&with_path.residual.k3.weights, &severed.residual.k3.weights);
    assert!(
        d5 > 1e-12 && d3 > 1e-12,
        "severing the classifier path left theta_r updates unchanged (d5 {d5:e}, d3 {d3:e})"
    );

    // (b) Report-only: rerun the end-to-end protocol with the path severed
    // and report both held-out errors. No threshold on the margin.
    let severed_run = run_e2e(true);
    let baseline = &*E2E_RUN_A;
    println!(
        "criterion 7 report: held-out error {:.4} with both paths vs {:.4} severed \
         (margin {:+.4}; report-only)",
        baseline.test_error,
        severed_run.test_error,
        severed_run.test_error - baseline.test_error
    );
    pass(
        7,
        format!(
            "theta_r updates differ when the classifier path is severed \
             (max deltas {d5:.2e} / {d3:.2e}); severed-path error reported above"
        ),
    );
}

#[test]
fn criterion_08_schedule_conformance() {
    let cfg = TrainConfig::default();
    let mut state = TrainState::new(&cfg);

    // Synthetic validation-error trace: one improving epoch to set the
    // best, then constant error forever (five full plateaus and a sixth).
    let mut lr_sequence = vec![state.lr];
    let mut stopped = false;
    lr_schedule_update(&mut state, &cfg, 0.5);
    for _ in 0..400 {
        match lr_schedule_update(&mut state, &cfg, 0.5) {
            ScheduleDecision::Continue => {
                if *lr_sequence.last().unwrap() != state.lr {
                    lr_sequence.push(state.lr);
                }
            }
            ScheduleDecision::Stop => {
                stopped = true;
                break;
            }
        }
    }

    let expected: [Real; 6] = [1e-3, 3e-4, 9e-5, 2.7e-5, 8.1e-6, 2.43e-6];
    assert_eq!(lr_sequence.len(), expected.len(), "{lr_sequence:?}");
    for (k, (got, want)) in lr_sequence.iter().zip(expected.iter()).enumerate() {
        let rel = (got - want).abs() / want;
        assert!(rel < 1e-12, "drop {k}: lr {got:e}, expected {want:e}");
        // The invariant lr = lr0 * multiplier^drops holds bit-exactly.
        assert_eq!(*got, cfg.lr_after(k as u32));
    }
    assert_eq!(state.drops_used, 5, "exactly five drops ever occur");
    assert!(stopped, "a further plateau after the fifth drop signals stop");
    // Non-increasing by construction of the sequence comparison above.
    for w in lr_sequence.windows(2) {
        assert!(w[1] < w[0]);
    }
    pass(
        8,
        "five 50-epoch plateaus produce lr 1e-3, 3e-4, 9e-5, 2.7e-5, 8.1e-6, 2.43e-6, then stop",
    );
}

#[test]
fn criterion_09_determinism() {
    let _guard = HEAVY.lock().unwrap_or_else(|e| e.into_inner());
    let run_a_csv = E2E_RUN_A.history_csv.clone();
    let run_b = run_e2e(false);
    assert_eq!(
        run_a_csv, run_b.history_csv,
        "two runs with the same seed must produce bitwise-identical history CSVs"
    );
    pass(
        9,
        format!(
            "two full end-to-end runs with seed {E2E_SEED} produced bitwise-identical \
             history CSVs ({} bytes)",
            run_a_csv.len()
        ),
    );
}

#[test]
fn criterion_10_simulator_statistics() {
    // Change-rate within 3 sigma of rate/2 over 100 images.
    let rate: Real = 0.4;
    let p = rate as f64 / 2.0;
    let mut changed = 0usize;
    let mut total = 0usize;
    for i in 0..100 {
        let cover = gen_cover(64, 64, 31_000 + i);
        let stego = embed_lsbm(&cover, rate, 63_000 + i).unwrap();
        changed += cover
            .pixels()
            .iter()
            .zip(stego.pixels())
            .filter(|(c, s)| c != s)
            .count();
        total += cover.pixels().len();
    }
    let observed = changed as f64 / total as f64;
    let sigma = (p * (1.0 - p) / total as f64).sqrt();
    assert!(
        (observed - p).abs() <= 3.0 * sigma,
        "change rate {observed:.5} outside {p} +- {:.5}",
        3.0 * sigma
    );

    // Rate 0 embeds nothing, bit-exactly.
    let cover = gen_cover(64, 64, 77);
    let stego = embed_lsbm(&cover, 0.0, 99).unwrap();
    assert_eq!(cover, stego);
    pass(
        10,
        format!(
            "change rate {observed:.5} within 3 sigma of {p}; rate 0 is bit-identical"
        ),
    );
}
