//! Robust rank aggregation from pairwise comparisons.
//!
//! Comparisons are modelled as `Y = X s + E + noise`, where `X` is the
//! gradient (incidence) operator of the comparison multigraph, `s` the
//! global item scores and `E` a sparse vector of gross errors. The crate
//! provides:
//!
//! * [`graph`]: the comparison multigraph, its gradient operator and
//!   minimum-norm Laplacian solves (least-squares ranking).
//! * [`solvers`]: outlier detection by iterative hard thresholding (iHT),
//!   iterative least trimmed squares (iLTS) and adaptive LTS (aLTS).
//! * [`lasso`]: the Huber-LASSO baseline and count-targeted path walking.
//! * [`theory`]: brute-force recovery-condition constants for small graphs.
//! * [`sim`]: the planted-outlier simulation harness.
//! * [`io`]: CSV ingestion and JSON/CSV reports.

pub mod error;
pub mod graph;
pub mod io;
pub mod lasso;
mod linalg;
pub mod sim;
pub mod solvers;
pub mod theory;

pub use error::{RankError, Result};
pub use graph::{
    least_squares_scores, ComparisonDataset, ComparisonRecord, GradientOperator, LaplacianSolver,
    ScoreVector, SolveDiagnostics,
};
pub use lasso::{huber_lasso, lasso_select_k, LassoGrid, LassoOptions, LassoPathPoint, LassoSelection};
pub use solvers::{
    alts, certify_coordinatewise_minimum, iht, ilts, proj_k, Detection, Method, OutlierVector,
    SelectionMask, SolverConfig, SolverOutcome,
};
