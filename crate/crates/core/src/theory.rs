//! Brute-force recovery-condition constants for small comparison graphs.
//!
//! Every supremum here is computed exactly by subset enumeration. When the
//! number of subsets exceeds the budget the computation is refused rather
//! than approximated, since an undershooting estimate would certify
//! conditions that do not hold.

use std::f64::consts::SQRT_2;

use itertools::Itertools;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, RankError, Result};
use crate::graph::{least_squares_scores, ComparisonDataset, GradientOperator};
use crate::linalg::{binomial, max_eigenvalue, norm2, principal_submatrix, spectral_norm};

pub const DEFAULT_BUDGET: u128 = 10_000_000;
/// Above this many rows only the `|J| = N - K` slice is enumerated for the
/// trimmed-design constants.
pub const FULL_SLICE_MAX_ROWS: usize = 12;

fn check_budget(needed: u128, budget: u128) -> Result<()> {
    if needed > budget {
        Err(RankError::BudgetExceeded { needed, budget })
    } else {
        Ok(())
    }
}

/// Dense `L^+` of the (masked) Laplacian.
fn pseudoinverse(op: &GradientOperator, mask: Option<&[bool]>) -> Result<DMatrix<f64>> {
    let n = op.n_items();
    let solver = op.solver(mask)?;
    let mut out = DMatrix::zeros(n, n);
    let mut unit = vec![0.0; n];
    for c in 0..n {
        unit[c] = 1.0;
        let (col, _) = solver.solve(&unit)?;
        out.set_column(c, &DVector::from_vec(col));
        unit[c] = 0.0;
    }
    Ok(out)
}

/// Dense hat matrix `H = X L^+ X^T`.
pub fn hat_matrix(op: &GradientOperator) -> Result<DMatrix<f64>> {
    let x = op.dense();
    Ok(&x * pseudoinverse(op, None)? * x.transpose())
}

/// Largest principal-submatrix eigenvalue of PSD `m` over all row sets of
/// size `size`.
fn sup_principal(m: &DMatrix<f64>, size: usize) -> f64 {
    if size == 0 {
        return 0.0;
    }
    (0..m.nrows())
        .combinations(size)
        .par_bridge()
        .map(|idx| max_eigenvalue(&principal_submatrix(m, &idx)))
        .reduce(|| 0.0, f64::max)
}

/// `θ = sup_{|J| ≤ 3K} ‖H_{JJ}‖₂`.
///
/// Principal-submatrix norms of a PSD matrix grow with the index set, so
/// only sets of size `min(3K, N)` are enumerated.
pub fn compute_theta(op: &GradientOperator, k: usize, budget: u128) -> Result<f64> {
    let n_rows = op.n_rows();
    let size = (3 * k).min(n_rows);
    check_budget(binomial(n_rows, size), budget)?;
    if size == 0 {
        return Ok(0.0);
    }
    Ok(sup_principal(&hat_matrix(op)?, size))
}

/// `θ` by enumerating every row set of size at most `3K`.
pub fn compute_theta_exhaustive(op: &GradientOperator, k: usize, budget: u128) -> Result<f64> {
    let n_rows = op.n_rows();
    let max_size = (3 * k).min(n_rows);
    let needed: u128 = (0..=max_size).map(|s| binomial(n_rows, s)).sum();
    check_budget(needed, budget)?;
    let h = hat_matrix(op)?;
    Ok((1..=max_size).map(|s| sup_principal(&h, s)).fold(0.0, f64::max))
}

/// Ground truth for the model `Y = X s* + E* + N*`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub s_star: Vec<f64>,
    pub e_star: Vec<f64>,
    #[serde(default)]
    pub n_star: Vec<f64>,
}

impl GroundTruth {
    fn e_min(&self) -> Option<f64> {
        self.e_star.iter().filter(|v| **v != 0.0).map(|v| v.abs()).reduce(f64::min)
    }
}

/// Recovery constants for one graph and budget `K`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionReport {
    pub k: usize,
    pub theta: f64,
    pub mu: f64,
    pub eta: f64,
    /// `None` when it depends on ground truth that was not supplied.
    pub epsilon: Option<f64>,
    pub phi: f64,
    /// `θ < 1/2`.
    pub feasible_theorem2: bool,
    /// `φ < √2 - 1 - ε`.
    pub feasible_theorem4: bool,
    pub enumeration_counts: u128,
    /// Smallest nonzero outlier magnitude, when ground truth was supplied.
    pub e_min: Option<f64>,
    /// Ground truth had no outliers; `ε` is reported as zero.
    pub no_outliers: bool,
    /// No ground truth: noise was taken as zero.
    pub noiseless_assumed: bool,
    /// Row-set sizes `|J|` that were enumerated.
    pub kept_sizes: Vec<usize>,
    /// The `|J| = N - K` slice alone attained every supremum.
    pub min_slice_attains_sup: bool,
}

#[derive(Debug, Clone, Copy, Default)]
struct SliceSup {
    mu: f64,
    eta: f64,
    phi: f64,
}

impl SliceSup {
    fn max(self, o: SliceSup) -> SliceSup {
        SliceSup {
            mu: self.mu.max(o.mu),
            eta: self.eta.max(o.eta),
            phi: self.phi.max(o.phi),
        }
    }
}

/// Constants for the design restricted to the rows not in `removed`.
fn trimmed_constants(op: &GradientOperator, x: &DMatrix<f64>, removed: &[usize], phi_size: usize) -> Result<SliceSup> {
    let n_rows = op.n_rows();
    let mut keep = vec![true; n_rows];
    for &k in removed {
        keep[k] = false;
    }
    let pinv = pseudoinverse(op, Some(&keep))?;
    let kept: Vec<usize> = (0..n_rows).filter(|&k| keep[k]).collect();
    let x_kept = x.select_rows(kept.iter());
    let x_removed = x.select_rows(removed.iter());

    let mu = spectral_norm(&(&x_removed * &pinv * x_kept.transpose()));

    // I - L_J^+ L_J projects onto per-component constants of the kept graph,
    // so a removed row contributes only when it joins two kept components.
    let (component_of, n_components) = op.components(Some(&keep));
    let mut sizes = vec![0.0; n_components];
    for &c in &component_of {
        sizes[c] += 1.0;
    }
    let mut crossing = DMatrix::zeros(removed.len(), op.n_items());
    for (r, &k) in removed.iter().enumerate() {
        let (i, j) = op.edges()[k];
        let (ci, cj) = (component_of[i], component_of[j]);
        if ci == cj {
            continue;
        }
        for item in 0..op.n_items() {
            if component_of[item] == ci {
                crossing[(r, item)] += 1.0 / sizes[ci];
            } else if component_of[item] == cj {
                crossing[(r, item)] -= 1.0 / sizes[cj];
            }
        }
    }
    let eta = spectral_norm(&crossing);

    let m = x * &pinv * x.transpose();
    let phi = sup_principal(&m, phi_size);
    Ok(SliceSup { mu, eta, phi })
}

/// Computes `θ`, `μ`, `η`, `ε` and `φ` for budget `K`.
///
/// Row sets `J` range over `|J| ≥ N - K`; all such sizes are enumerated when
/// `N ≤ 12`, otherwise only `|J| = N - K`. Without ground truth the noise is
/// taken as zero and `ε` is known only when `η = 0`.
pub fn condition_report(
    op: &GradientOperator,
    k: usize,
    truth: Option<&GroundTruth>,
    budget: u128,
) -> Result<ConditionReport> {
    let n_rows = op.n_rows();
    let k = k.min(n_rows);
    let phi_size = (2 * k).min(n_rows);
    let removed_sizes: Vec<usize> = if n_rows <= FULL_SLICE_MAX_ROWS {
        (0..=k).collect()
    } else {
        vec![k]
    };
    let per_j = 1 + binomial(n_rows, phi_size);
    let theta_count = binomial(n_rows, (3 * k).min(n_rows));
    let needed = removed_sizes
        .iter()
        .map(|&d| binomial(n_rows, d).saturating_mul(per_j))
        .fold(theta_count, u128::saturating_add);
    check_budget(needed, budget)?;
    if let Some(t) = truth {
        check_len(op.n_items(), t.s_star.len())?;
        check_len(n_rows, t.e_star.len())?;
        if !t.n_star.is_empty() {
            check_len(n_rows, t.n_star.len())?;
        }
    }

    let theta = compute_theta(op, k, budget)?;
    let x = op.dense();
    let mut overall = SliceSup::default();
    let mut at_min_slice = SliceSup::default();
    for &d in &removed_sizes {
        let slice = (0..n_rows)
            .combinations(d)
            .collect::<Vec<_>>()
            .par_iter()
            .map(|removed| trimmed_constants(op, &x, removed, phi_size))
            .try_reduce(SliceSup::default, |a, b| Ok(a.max(b)))?;
        if d == k {
            at_min_slice = slice;
        }
        overall = overall.max(slice);
    }
    let min_slice_attains_sup =
        at_min_slice.mu >= overall.mu && at_min_slice.eta >= overall.eta && at_min_slice.phi >= overall.phi;

    let (epsilon, e_min, no_outliers, noiseless_assumed) = match truth {
        Some(t) => match t.e_min() {
            None => (Some(0.0), None, true, false),
            Some(e_min) => {
                let noise = norm2(&t.n_star);
                let eps = SQRT_2 * ((2.0 + overall.mu) * noise + overall.eta * norm2(&t.s_star)) / e_min;
                (Some(eps), Some(e_min), false, false)
            }
        },
        None => (if overall.eta == 0.0 { Some(0.0) } else { None }, None, false, true),
    };
    let feasible_theorem4 = epsilon.is_some_and(|eps| overall.phi < SQRT_2 - 1.0 - eps);

    Ok(ConditionReport {
        k,
        theta,
        mu: overall.mu,
        eta: overall.eta,
        epsilon,
        phi: overall.phi,
        feasible_theorem2: theta < 0.5,
        feasible_theorem4,
        enumeration_counts: needed,
        e_min,
        no_outliers,
        noiseless_assumed,
        kept_sizes: removed_sizes.iter().map(|d| n_rows - d).collect(),
        min_slice_attains_sup,
    })
}

/// Outcome of the brute-force equivalence check between the outlier-budget
/// formulation, the trimmed formulation and the `ℓ₀`-penalized formulation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquivalenceReport {
    pub k: usize,
    /// Optimal `½‖Y - Xs - E‖²` subject to `‖E‖₀ ≤ K`.
    pub constrained_optimum: f64,
    /// Optimal trimmed objective over masks keeping at least `N - K` records.
    pub trimmed_optimum: f64,
    pub constrained_scores: Vec<Vec<f64>>,
    pub trimmed_scores: Vec<Vec<f64>>,
    /// Penalty at which `K` outliers is strictly optimal, if any exists.
    pub penalty: Option<f64>,
    pub penalized_scores: Option<Vec<Vec<f64>>>,
    pub subsets_examined: u128,
    pub equivalent: bool,
}

const SET_TOL: f64 = 1e-8;

fn same_vectors(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(x, y)| (x - y).abs() <= SET_TOL)
}

fn dedup(sets: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::new();
    for s in sets {
        if !out.iter().any(|o| same_vectors(o, &s)) {
            out.push(s);
        }
    }
    out
}

fn same_sets(a: &[Vec<f64>], b: &[Vec<f64>]) -> bool {
    a.iter().all(|x| b.iter().any(|y| same_vectors(x, y))) && b.iter().all(|y| a.iter().any(|x| same_vectors(x, y)))
}

/// Centers `s` per connected component of the graph keeping `keep`.
fn canonical_scores(op: &GradientOperator, keep: &[bool], s: &[f64]) -> Vec<f64> {
    let (component_of, n_components) = op.components(Some(keep));
    let mut sums = vec![0.0; n_components];
    let mut sizes = vec![0.0; n_components];
    for (v, &c) in s.iter().zip(&component_of) {
        sums[c] += v;
        sizes[c] += 1.0;
    }
    s.iter().zip(&component_of).map(|(v, &c)| v - sums[c] / sizes[c]).collect()
}

/// Joint least squares over scores and the outlier entries on `support`:
/// minimum-norm solution of the normal equations of the design `[X | I_S]`. Returns (objective, canonical scores).
fn joint_fit(op: &GradientOperator, x: &DMatrix<f64>, y: &DVector<f64>, support: &[usize]) -> (f64, Vec<f64>) {
    let (n_rows, n_items) = (x.nrows(), x.ncols());
    let mut design = DMatrix::zeros(n_rows, n_items + support.len());
    design.view_mut((0, 0), (n_rows, n_items)).copy_from(x);
    for (c, &k) in support.iter().enumerate() {
        design[(k, n_items + c)] = 1.0;
    }
    let gram = design.transpose() * &design;
    let eig = SymmetricEigen::new(gram);
    let cutoff = 1e-10 * eig.eigenvalues.max().max(1.0);
    let rhs = eig.eigenvectors.transpose() * (design.transpose() * y);
    let coords = DVector::from_fn(rhs.len(), |i, _| {
        let lambda = eig.eigenvalues[i];
        if lambda > cutoff {
            rhs[i] / lambda
        } else {
            0.0
        }
    });
    let z = &eig.eigenvectors * coords;
    let r = y - &design * &z;
    let s: Vec<f64> = z.rows(0, n_items).iter().copied().collect();
    let mut keep = vec![true; n_rows];
    for &k in support {
        keep[k] = false;
    }
    (0.5 * r.norm_squared(), canonical_scores(op, &keep, &s))
}

/// Brute-force check that the outlier-budget problem and least trimmed
/// squares share the same optimal score set for budget `K`, and that the
/// `ℓ₀`-penalized problem agrees whenever some penalty makes `K` outliers
/// strictly optimal.
///
/// The budget problem is solved as a joint least-squares fit over scores
/// and outlier entries through an eigendecomposition; the trimmed problem by masked Laplacian solves.
pub fn prop1_equivalence_oracle(
    dataset: &ComparisonDataset,
    op: &GradientOperator,
    k: usize,
    budget: u128,
) -> Result<EquivalenceReport> {
    let n_rows = dataset.len();
    check_len(op.n_rows(), n_rows)?;
    if op.n_items() > 8 {
        return Err(RankError::InvalidParameter("equivalence oracle supports at most 8 items".into()));
    }
    if k > n_rows {
        return Err(RankError::InvalidParameter(format!("K = {k} exceeds N = {n_rows}")));
    }
    let bounded: u128 = (0..=k).map(|d| binomial(n_rows, d)).sum();
    let all_supports = if n_rows < 127 { 1u128 << n_rows } else { u128::MAX };
    let needed = bounded.saturating_mul(2).saturating_add(all_supports);
    check_budget(needed, budget)?;

    let x = op.dense();
    let y_vec = dataset.values();
    let y = DVector::from_column_slice(&y_vec);

    // every support, grouped by size, via the joint fit
    let mut by_size: Vec<Vec<(f64, Vec<f64>)>> = vec![Vec::new(); n_rows + 1];
    for size in 0..=n_rows {
        by_size[size] = (0..n_rows)
            .combinations(size)
            .map(|support| joint_fit(op, &x, &y, &support))
            .collect();
    }
    let rel = |v: f64| 1e-9 * (1.0 + v.abs());

    let constrained: Vec<&(f64, Vec<f64>)> = by_size[..=k].iter().flatten().collect();
    let constrained_optimum = constrained.iter().map(|c| c.0).fold(f64::INFINITY, f64::min);
    let constrained_scores = dedup(
        constrained
            .iter()
            .filter(|c| c.0 <= constrained_optimum + rel(constrained_optimum))
            .map(|c| c.1.clone())
            .collect(),
    );

    let mut trimmed = Vec::new();
    for d in 0..=k {
        for removed in (0..n_rows).combinations(d) {
            let mut keep = vec![true; n_rows];
            for &r in &removed {
                keep[r] = false;
            }
            let s = least_squares_scores(dataset, op, Some(&keep))?;
            let fitted = op.apply_x(&s.scores)?;
            let obj = 0.5
                * y_vec
                    .iter()
                    .zip(&fitted)
                    .zip(&keep)
                    .filter(|(_, k)| **k)
                    .map(|((a, b), _)| (a - b) * (a - b))
                    .sum::<f64>();
            trimmed.push((obj, s.scores));
        }
    }
    let trimmed_optimum = trimmed.iter().map(|t| t.0).fold(f64::INFINITY, f64::min);
    let trimmed_scores = dedup(
        trimmed
            .into_iter()
            .filter(|t| t.0 <= trimmed_optimum + rel(trimmed_optimum))
            .map(|t| t.1)
            .collect(),
    );

    // penalty interval making exactly K outliers optimal
    let best: Vec<f64> = by_size
        .iter()
        .map(|v| v.iter().map(|c| c.0).fold(f64::INFINITY, f64::min))
        .collect();
    let mut lo: f64 = 0.0;
    let mut hi = f64::INFINITY;
    for j in 0..=n_rows {
        if j < k {
            hi = hi.min((best[j] - best[k]) / (k - j) as f64);
        } else if j > k {
            lo = lo.max((best[k] - best[j]) / (j - k) as f64);
        }
    }
    let penalty = if hi - lo > 1e-9 * (1.0 + hi.abs().min(1e300)) {
        Some(if hi.is_finite() { 0.5 * (lo + hi) } else { lo + 1.0 })
    } else {
        None
    };
    let penalized_scores = penalty.map(|lambda| {
        let all: Vec<(f64, usize, &Vec<f64>)> = by_size
            .iter()
            .enumerate()
            .flat_map(|(size, v)| v.iter().map(move |c| (c.0 + lambda * size as f64, size, &c.1)))
            .collect();
        let opt = all.iter().map(|a| a.0).fold(f64::INFINITY, f64::min);
        dedup(
            all.iter()
                .filter(|a| a.0 <= opt + rel(opt) && a.1 == k)
                .map(|a| a.2.clone())
                .collect(),
        )
    });

    let objectives_agree = (constrained_optimum - trimmed_optimum).abs() <= rel(trimmed_optimum) * 10.0;
    let equivalent = objectives_agree
        && same_sets(&constrained_scores, &trimmed_scores)
        && penalized_scores.as_ref().is_none_or(|p| same_sets(p, &constrained_scores));

    Ok(EquivalenceReport {
        k,
        constrained_optimum,
        trimmed_optimum,
        constrained_scores,
        trimmed_scores,
        penalty,
        penalized_scores,
        subsets_examined: needed,
        equivalent,
    })
}
