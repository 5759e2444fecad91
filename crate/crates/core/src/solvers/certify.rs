use super::{residual, SelectionMask, SolverOutcome};
use crate::error::{check_len, Result};
use crate::graph::{ComparisonDataset, GradientOperator};
use crate::linalg::norm2;

/// Normal-equation residual tolerance for score optimality.
const STATIONARITY_TOL: f64 = 1e-8;
/// Relative slack when comparing trimmed objectives.
const OBJECTIVE_TOL: f64 = 1e-10;

/// `F(s, Λ) = ½ ‖Λ ∘ r‖²` for a residual `r = Y - X s`.
pub fn trimmed_objective(r: &[f64], keep: &[bool]) -> f64 {
    0.5 * r
        .iter()
        .zip(keep)
        .filter(|(_, k)| **k)
        .map(|(v, _)| v * v)
        .sum::<f64>()
}

/// Checks that `(scores, mask)` is a coordinatewise minimum of the trimmed
/// objective under budget `k`:
///
/// 1. `mask` keeps at least `N - k` records and its objective equals the
///    sum of the `N - k` smallest squared residuals at `scores`;
/// 2. `scores` solves the masked normal equations.
pub fn certify_coordinatewise_minimum(
    dataset: &ComparisonDataset,
    op: &GradientOperator,
    scores: &[f64],
    mask: &SelectionMask,
    k: usize,
) -> Result<bool> {
    let n_rows = dataset.len();
    check_len(n_rows, mask.keep.len())?;
    if mask.kept_count() + k < n_rows {
        return Ok(false);
    }
    let y = dataset.values();
    let r = residual(&y, &op.apply_x(scores)?);

    let mut squares: Vec<f64> = r.iter().map(|v| v * v).collect();
    let current = trimmed_objective(&r, &mask.keep);
    squares.sort_by(|a, b| a.total_cmp(b));
    let best = 0.5 * squares[..n_rows - k.min(n_rows)].iter().sum::<f64>();
    let mask_optimal = current <= best + OBJECTIVE_TOL * (1.0 + best);

    let kept_r: Vec<f64> = r.iter().zip(&mask.keep).map(|(v, k)| if *k { *v } else { 0.0 }).collect();
    let kept_y: Vec<f64> = y.iter().zip(&mask.keep).map(|(v, k)| if *k { *v } else { 0.0 }).collect();
    let gradient = norm2(&op.apply_xt(&kept_r)?);
    let scale = norm2(&op.apply_xt(&kept_y)?).max(1.0);
    let scores_optimal = gradient <= STATIONARITY_TOL * scale;

    Ok(mask_optimal && scores_optimal)
}

/// [`certify_coordinatewise_minimum`] applied to a solver outcome.
pub fn certify_outcome(
    dataset: &ComparisonDataset,
    op: &GradientOperator,
    outcome: &SolverOutcome,
    k: usize,
) -> Result<bool> {
    certify_coordinatewise_minimum(dataset, op, &outcome.scores.scores, &outcome.detection.mask(), k)
}
