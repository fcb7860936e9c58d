//! `steg gradcheck`: finite-difference verification of every layer primitive
//! and of the composed joint-loss graph. Exit code 0 iff every block passes.

use anyhow::Result;
use stegcore::gradcheck::primitives::check_primitives;
use stegcore::trainer::{check_joint_graph, gradcheck_fixture, TrainConfig};

pub const DEFAULT_EPS: f64 = 1e-5;
pub const GRAPH_TOL: f64 = 1e-3;

/// Returns true when every block passed.
pub fn run(scale: usize) -> Result<bool> {
    let eps = DEFAULT_EPS as stegcore::Real;

    println!("== layer primitives (eps {eps:.0e}) ==");
    let primitive_report = check_primitives(eps)?;
    for line in primitive_report.lines() {
        println!("{line}");
    }

    println!("== composed joint-loss graph ({scale}x{scale}, 2 samples, lambda 0.999) ==");
    let (model, batch) = gradcheck_fixture(scale, 2024)?;
    let lambda = TrainConfig::default().lambda;
    let graph_report = check_joint_graph(
        &model,
        &batch,
        lambda,
        eps,
        GRAPH_TOL as stegcore::Real,
        |_| true,
    )?;
    for line in graph_report.lines() {
        println!("{line}");
    }

    let blocks = primitive_report.blocks.len() + graph_report.blocks.len();
    let failures = primitive_report.failures().len() + graph_report.failures().len();
    let passed = failures == 0;
    println!(
        "gradcheck: {} ({blocks} blocks, {failures} failures, max rel err {:.3e})",
        if passed { "PASS" } else { "FAIL" },
        primitive_report.max_rel_err().max(graph_report.max_rel_err()),
    );
    Ok(passed)
}
