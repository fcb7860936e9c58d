//! Central finite-difference verification of backward passes.
//!
//! Each parameter block is swept coordinate by coordinate: the scalar loss is
//! re-evaluated at `x +- eps` and the central difference is compared against
//! the analytic gradient. Relative error is `|a - n| / max(|a|, |n|, 1e-8)`.
//! Failures become report entries, never panics. Blocks carry their own
//! tolerance: 1e-4 for smooth maps, 1e-3 where a graph crosses abs/relu
//! kinks (with kink-adjacent coordinates excluded).

pub mod primitives;

use crate::error::Result;
use crate::tensor::Real;

pub const REL_ERR_FLOOR: Real = 1e-8;

pub fn relative_error(analytic: Real, numeric: Real) -> Real {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERR_FLOOR)
}

/// Central finite differences of `eval` with respect to `values`, one
/// coordinate at a time. `eval` is called with `values` temporarily
/// perturbed in place and must read them on every call.
pub fn finite_diff_grad<F>(values: &mut [Real], mut eval: F, eps: Real) -> Result<Vec<Real>>
where
    F: FnMut(&[Real]) -> Result<Real>,
{
    let mut grads = Vec::with_capacity(values.len());
    for i in 0..values.len() {
        let orig = values[i];
        values[i] = orig + eps;
        let plus = eval(values)?;
        values[i] = orig - eps;
        let minus = eval(values)?;
        values[i] = orig;
        grads.push((plus - minus) / (2.0 * eps));
    }
    Ok(grads)
}

/// Comparison result for one parameter block.
#[derive(Debug, Clone)]
pub struct BlockReport {
    pub name: String,
    pub tolerance: Real,
    pub checked: usize,
    pub skipped: usize,
    pub max_rel_err: Real,
    pub worst_index: usize,
    pub analytic_at_worst: Real,
    pub numeric_at_worst: Real,
}

impl BlockReport {
    pub fn within_tolerance(&self) -> bool {
        self.max_rel_err <= self.tolerance
    }

    pub fn line(&self) -> String {
        format!(
            "{:<28} max_rel_err {:>12.4e}  tol {:>8.0e}  (checked {}, skipped {})  {}",
            self.name,
            self.max_rel_err,
            self.tolerance,
            self.checked,
            self.skipped,
            if self.within_tolerance() { "ok" } else { "FAIL" }
        )
    }
}

/// Sweep one block: finite differences of `eval` against `analytic`.
/// `skip` marks coordinates excluded from the comparison.
pub fn check_block<F, S>(
    name: impl Into<String>,
    tolerance: Real,
    values: &mut [Real],
    analytic: &[Real],
    eval: F,
    eps: Real,
    skip: S,
) -> Result<BlockReport>
where
    F: FnMut(&[Real]) -> Result<Real>,
    S: Fn(usize) -> bool,
{
    assert_eq!(values.len(), analytic.len(), "gradient length mismatch");
    let numeric = finite_diff_grad(values, eval, eps)?;
    let mut report = BlockReport {
        name: name.into(),
        tolerance,
        checked: 0,
        skipped: 0,
        max_rel_err: 0.0,
        worst_index: 0,
        analytic_at_worst: 0.0,
        numeric_at_worst: 0.0,
    };
    for (i, (&a, &n)) in analytic.iter().zip(&numeric).enumerate() {
        if skip(i) {
            report.skipped += 1;
            continue;
        }
        report.checked += 1;
        let err = relative_error(a, n);
        if err > report.max_rel_err {
            report.max_rel_err = err;
            report.worst_index = i;
            report.analytic_at_worst = a;
            report.numeric_at_worst = n;
        }
    }
    Ok(report)
}

/// A full gradient-check run over several blocks.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub epsilon: Real,
    pub blocks: Vec<BlockReport>,
}

impl GradCheckReport {
    pub fn new(epsilon: Real) -> Self {
        GradCheckReport {
            epsilon,
            blocks: Vec::new(),
        }
    }

    pub fn push(&mut self, block: BlockReport) {
        self.blocks.push(block);
    }

    pub fn extend(&mut self, other: GradCheckReport) {
        self.blocks.extend(other.blocks);
    }

    pub fn max_rel_err(&self) -> Real {
        self.blocks
            .iter()
            .map(|b| b.max_rel_err)
            .fold(0.0, Real::max)
    }

    pub fn failures(&self) -> Vec<&BlockReport> {
        self.blocks
            .iter()
            .filter(|b| !b.within_tolerance())
            .collect()
    }

    pub fn passed(&self) -> bool {
        self.failures().is_empty()
    }

    pub fn lines(&self) -> Vec<String> {
        self.blocks.iter().map(|b| b.line()).collect()
    }
}
