//! Comparison multigraph, gradient operator and Laplacian solves.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, RankError, Result};

/// Above this many items the Laplacian is solved iteratively.
pub const DENSE_SOLVE_MAX_ITEMS: usize = 200;
/// Absolute residual tolerance for the conjugate-gradient backend.
pub const CG_TOLERANCE: f64 = 1e-10;

/// One paired comparison: `rater` prefers `item_i` over `item_j` by `value`.
///
/// A negative value means `item_j` was preferred. The mirrored record
/// `(item_j, item_i, -value)` is implied and never stored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRecord {
    pub rater: String,
    pub item_i: usize,
    pub item_j: usize,
    pub value: f64,
}

impl ComparisonRecord {
    pub fn new(rater: impl Into<String>, item_i: usize, item_j: usize, value: f64) -> Self {
        Self {
            rater: rater.into(),
            item_i,
            item_j,
            value,
        }
    }
}

/// An ordered list of comparisons over `n_items` items.
///
/// Record order is significant: record `k` is entry `k` of `Y` and row `k`
/// of the gradient operator, and every mask or outlier vector indexes into
/// this order.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonDataset {
    n_items: usize,
    records: Vec<ComparisonRecord>,
    labels: Vec<String>,
    dichotomous: bool,
}

impl ComparisonDataset {
    /// Builds a dataset with labels `"0"`, `"1"`, ...
    pub fn new(n_items: usize, records: Vec<ComparisonRecord>) -> Result<Self> {
        let labels = (0..n_items).map(|i| i.to_string()).collect();
        Self::with_labels(labels, records)
    }

    pub fn with_labels(labels: Vec<String>, records: Vec<ComparisonRecord>) -> Result<Self> {
        let n_items = labels.len();
        if records.is_empty() {
            return Err(RankError::EmptyDataset);
        }
        for (k, r) in records.iter().enumerate() {
            for index in [r.item_i, r.item_j] {
                if index >= n_items {
                    return Err(RankError::ItemOutOfRange {
                        record: k,
                        index,
                        n_items,
                    });
                }
            }
            if r.item_i == r.item_j {
                return Err(RankError::SelfComparison {
                    record: k,
                    item: r.item_i,
                });
            }
            if !r.value.is_finite() {
                return Err(RankError::NonFiniteValue { record: k });
            }
        }
        let dichotomous = records.iter().all(|r| r.value == 1.0 || r.value == -1.0);
        Ok(Self {
            n_items,
            records,
            labels,
            dichotomous,
        })
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    /// Number of comparisons `N`.
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[ComparisonRecord] {
        &self.records
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// True iff every value is exactly `+1` or `-1`.
    pub fn is_dichotomous(&self) -> bool {
        self.dichotomous
    }

    /// Number of records with value exactly zero (ties). These are kept as
    /// ordinary continuous observations.
    pub fn tie_count(&self) -> usize {
        self.records.iter().filter(|r| r.value == 0.0).count()
    }

    /// The observation vector `Y`.
    pub fn values(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.value).collect()
    }

    pub fn require_dichotomous(&self) -> Result<()> {
        match self.records.iter().enumerate().find(|(_, r)| r.value != 1.0 && r.value != -1.0) {
            None => Ok(()),
            Some((record, r)) => Err(RankError::NotDichotomous {
                record,
                value: r.value,
            }),
        }
    }

    /// Relabels items by `perm` (item `i` becomes `perm[i]`), keeping record order.
    pub fn permute_items(&self, perm: &[usize]) -> Result<Self> {
        check_len(self.n_items, perm.len())?;
        let mut labels = vec![String::new(); self.n_items];
        for (i, &p) in perm.iter().enumerate() {
            labels[p] = self.labels[i].clone();
        }
        let records = self
            .records
            .iter()
            .map(|r| ComparisonRecord::new(r.rater.clone(), perm[r.item_i], perm[r.item_j], r.value))
            .collect();
        Self::with_labels(labels, records)
    }

    /// Gradient operator with one row per record, in record order.
    pub fn operator(&self) -> GradientOperator {
        GradientOperator {
            n_items: self.n_items,
            edges: self.records.iter().map(|r| (r.item_i, r.item_j)).collect(),
        }
    }
}

/// The `N x n` gradient operator `X`; row `k` is `e_i - e_j` for edge `(i, j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientOperator {
    n_items: usize,
    edges: Vec<(usize, usize)>,
}

impl GradientOperator {
    pub fn from_edges(n_items: usize, edges: Vec<(usize, usize)>) -> Result<Self> {
        for (k, &(i, j)) in edges.iter().enumerate() {
            for index in [i, j] {
                if index >= n_items {
                    return Err(RankError::ItemOutOfRange {
                        record: k,
                        index,
                        n_items,
                    });
                }
            }
            if i == j {
                return Err(RankError::SelfComparison { record: k, item: i });
            }
        }
        Ok(Self { n_items, edges })
    }

    /// Operator of the complete graph with `copies` comparisons per pair.
    pub fn complete_graph(n_items: usize, copies: usize) -> Self {
        let mut edges = Vec::new();
        for i in 0..n_items {
            for j in (i + 1)..n_items {
                edges.extend(std::iter::repeat_n((i, j), copies));
            }
        }
        Self { n_items, edges }
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    /// Number of rows `N`.
    pub fn n_rows(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// `X s`: entry `k` is `s[i_k] - s[j_k]`.
    pub fn apply_x(&self, s: &[f64]) -> Result<Vec<f64>> {
        check_len(self.n_items, s.len())?;
        Ok(self.edges.iter().map(|&(i, j)| s[i] - s[j]).collect())
    }

    /// `X^T v`.
    pub fn apply_xt(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_len(self.edges.len(), v.len())?;
        let mut out = vec![0.0; self.n_items];
        for (&(i, j), &x) in self.edges.iter().zip(v) {
            out[i] += x;
            out[j] -= x;
        }
        Ok(out)
    }

    /// `X^T diag(mask) v`.
    pub(crate) fn apply_xt_masked(&self, v: &[f64], mask: Option<&[bool]>) -> Vec<f64> {
        let mut out = vec![0.0; self.n_items];
        for (k, (&(i, j), &x)) in self.edges.iter().zip(v).enumerate() {
            if mask.is_none_or(|m| m[k]) {
                out[i] += x;
                out[j] -= x;
            }
        }
        out
    }

    /// Dense `X`.
    pub fn dense(&self) -> DMatrix<f64> {
        let mut x = DMatrix::zeros(self.edges.len(), self.n_items);
        for (k, &(i, j)) in self.edges.iter().enumerate() {
            x[(k, i)] = 1.0;
            x[(k, j)] = -1.0;
        }
        x
    }

    /// Dense unnormalized Laplacian `X^T diag(mask) X`.
    pub fn laplacian(&self, mask: Option<&[bool]>) -> DMatrix<f64> {
        let mut l = DMatrix::zeros(self.n_items, self.n_items);
        for (k, &(i, j)) in self.edges.iter().enumerate() {
            if mask.is_none_or(|m| m[k]) {
                l[(i, i)] += 1.0;
                l[(j, j)] += 1.0;
                l[(i, j)] -= 1.0;
                l[(j, i)] -= 1.0;
            }
        }
        l
    }

    /// Connected components of the (masked) graph as a label per item.
    pub fn components(&self, mask: Option<&[bool]>) -> (Vec<usize>, usize) {
        let mut parent: Vec<usize> = (0..self.n_items).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for (k, &(i, j)) in self.edges.iter().enumerate() {
            if mask.is_none_or(|m| m[k]) {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
        let mut label = vec![usize::MAX; self.n_items];
        let mut next = 0;
        let mut component_of = vec![0; self.n_items];
        for item in 0..self.n_items {
            let root = find(&mut parent, item);
            if label[root] == usize::MAX {
                label[root] = next;
                next += 1;
            }
            component_of[item] = label[root];
        }
        (component_of, next)
    }

    /// Factorizes the (masked) Laplacian for repeated pseudoinverse solves.
    pub fn solver(&self, mask: Option<&[bool]>) -> Result<LaplacianSolver> {
        if let Some(m) = mask {
            check_len(self.edges.len(), m.len())?;
        }
        Ok(LaplacianSolver::new(self, mask))
    }

    /// `L^+ b` for the unmasked Laplacian.
    pub fn solve_laplacian(&self, b: &[f64]) -> Result<(Vec<f64>, SolveDiagnostics)> {
        self.solver(None)?.solve(b)
    }
}

/// Side information from a Laplacian solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct SolveDiagnostics {
    /// The right-hand side had a nonzero mean on some component, which was
    /// projected away before solving.
    pub projected_mean: bool,
    /// Conjugate-gradient iterations (zero for the dense backend).
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone)]
enum Backend {
    Dense(DMatrix<f64>),
    Iterative(Vec<(usize, usize)>),
}

/// Minimum-norm solver for `L x = b` on a fixed (masked) comparison graph.
#[derive(Debug, Clone)]
pub struct LaplacianSolver {
    n_items: usize,
    component_of: Vec<usize>,
    component_sizes: Vec<usize>,
    backend: Backend,
}

impl LaplacianSolver {
    fn new(op: &GradientOperator, mask: Option<&[bool]>) -> Self {
        let n = op.n_items;
        let (component_of, n_components) = op.components(mask);
        let mut component_sizes = vec![0; n_components];
        for &c in &component_of {
            component_sizes[c] += 1;
        }
        let backend = if n <= DENSE_SOLVE_MAX_ITEMS {
            Backend::Dense(dense_pseudoinverse(op.laplacian(mask), n_components))
        } else {
            let kept = op
                .edges
                .iter()
                .enumerate()
                .filter(|(k, _)| mask.is_none_or(|m| m[*k]))
                .map(|(_, &e)| e)
                .collect();
            Backend::Iterative(kept)
        };
        Self {
            n_items: n,
            component_of,
            component_sizes,
            backend,
        }
    }

    pub fn n_components(&self) -> usize {
        self.component_sizes.len()
    }

    pub fn component_of(&self) -> &[usize] {
        &self.component_of
    }

    /// Returns `L^+ b`, zero-mean on every connected component.
    pub fn solve(&self, b: &[f64]) -> Result<(Vec<f64>, SolveDiagnostics)> {
        check_len(self.n_items, b.len())?;
        let mut rhs = b.to_vec();
        let scale = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        let removed = self.center(&mut rhs);
        let mut diag = SolveDiagnostics {
            projected_mean: removed > 1e-12 * scale.max(1e-300),
            iterations: 0,
            converged: true,
        };
        let mut x = match &self.backend {
            Backend::Dense(pinv) => (pinv * DVector::from_vec(rhs)).data.into(),
            Backend::Iterative(edges) => {
                let (x, iterations, converged) = self.conjugate_gradient(edges, &rhs);
                diag.iterations = iterations;
                diag.converged = converged;
                x
            }
        };
        self.center(&mut x);
        Ok((x, diag))
    }

    /// Removes the per-component mean in place; returns the norm removed.
    fn center(&self, v: &mut [f64]) -> f64 {
        let mut sums = vec![0.0; self.component_sizes.len()];
        for (x, &c) in v.iter().zip(&self.component_of) {
            sums[c] += x;
        }
        let mut removed = 0.0;
        for (c, sum) in sums.iter_mut().enumerate() {
            *sum /= self.component_sizes[c] as f64;
            removed += *sum * *sum * self.component_sizes[c] as f64;
        }
        for (x, &c) in v.iter_mut().zip(&self.component_of) {
            *x -= sums[c];
        }
        removed.sqrt()
    }

    fn conjugate_gradient(&self, edges: &[(usize, usize)], b: &[f64]) -> (Vec<f64>, usize, bool) {
        let n = self.n_items;
        let apply = |x: &[f64], out: &mut [f64]| {
            out.iter_mut().for_each(|o| *o = 0.0);
            for &(i, j) in edges {
                let d = x[i] - x[j];
                out[i] += d;
                out[j] -= d;
            }
        };
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();

        let mut x = vec![0.0; n];
        let mut r = b.to_vec();
        let mut p = r.clone();
        let mut lp = vec![0.0; n];
        let mut rr = dot(&r, &r);
        let max_iters = 10 * n;
        for it in 0..max_iters {
            if rr.sqrt() <= CG_TOLERANCE {
                return (x, it, true);
            }
            apply(&p, &mut lp);
            let denom = dot(&p, &lp);
            if denom <= 0.0 {
                return (x, it, rr.sqrt() <= CG_TOLERANCE);
            }
            let alpha = rr / denom;
            for k in 0..n {
                x[k] += alpha * p[k];
                r[k] -= alpha * lp[k];
            }
            // deflation keeps the iterates in range(L)
            self.center(&mut x);
            self.center(&mut r);
            let rr_next = dot(&r, &r);
            let beta = rr_next / rr;
            for k in 0..n {
                p[k] = r[k] + beta * p[k];
            }
            rr = rr_next;
        }
        let converged = rr.sqrt() <= CG_TOLERANCE;
        (x, max_iters, converged)
    }
}

/// Pseudoinverse of a Laplacian whose kernel dimension is known to be
/// `kernel_dim` (the number of connected components).
fn dense_pseudoinverse(l: DMatrix<f64>, kernel_dim: usize) -> DMatrix<f64> {
    let n = l.nrows();
    let eig = SymmetricEigen::new(l);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let mut inv = DVector::zeros(n);
    for &k in order.iter().skip(kernel_dim) {
        inv[k] = 1.0 / eig.eigenvalues[k];
    }
    let v = &eig.eigenvectors;
    let scaled = DMatrix::from_fn(n, n, |r, c| v[(r, c)] * inv[c]);
    scaled * v.transpose()
}

/// Item scores with the connected-component partition they were computed on.
///
/// Scores sum to zero within each component; scores in different
/// components are not comparable.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreVector {
    pub scores: Vec<f64>,
    pub component_of: Vec<usize>,
    pub n_components: usize,
}

impl ScoreVector {
    pub fn components(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.n_components];
        for (item, &c) in self.component_of.iter().enumerate() {
            out[c].push(item);
        }
        out
    }

    pub fn is_connected(&self) -> bool {
        self.n_components == 1
    }

    /// Items sorted by descending score (ties by index).
    pub fn order(&self) -> Vec<usize> {
        let mut items: Vec<usize> = (0..self.scores.len()).collect();
        items.sort_by(|&a, &b| self.scores[b].total_cmp(&self.scores[a]).then(a.cmp(&b)));
        items
    }
}

/// Minimum-norm least-squares scores `(X^T Λ X)^+ X^T Λ Y` using only the
/// records kept by `mask` (all records when `mask` is `None`).
pub fn least_squares_scores(
    dataset: &ComparisonDataset,
    op: &GradientOperator,
    mask: Option<&[bool]>,
) -> Result<ScoreVector> {
    check_len(op.n_rows(), dataset.len())?;
    let solver = op.solver(mask)?;
    scores_with(&solver, op, &dataset.values(), mask)
}

pub(crate) fn scores_with(
    solver: &LaplacianSolver,
    op: &GradientOperator,
    y: &[f64],
    mask: Option<&[bool]>,
) -> Result<ScoreVector> {
    let rhs = op.apply_xt_masked(y, mask);
    let (scores, _) = solver.solve(&rhs)?;
    Ok(ScoreVector {
        scores,
        component_of: solver.component_of.clone(),
        n_components: solver.n_components(),
    })
}
