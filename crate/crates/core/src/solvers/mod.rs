//! Outlier detection by nonconvex iterative procedures.
//!
//! All three procedures alternate an exact least-squares score update with
//! a combinatorial update of the outlier set:
//!
//! * [`iht`] hard-thresholds the residual to its `K` largest squares.
//! * [`ilts`] trims the `K` largest squared residuals and refits, stopping
//!   when a trimming mask repeats.
//! * [`alts`] estimates the outlier count itself for `±1` data by squeezing
//!   a growing underestimate against the count of sign-inconsistent records.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{RankError, Result};
use crate::graph::ScoreVector;

mod alts;
mod certify;
mod iht;
mod ilts;
mod proj;
mod select;

pub use alts::{alts, iteration_bound, successive_pair_correction, CountStep};
pub use certify::{certify_coordinatewise_minimum, certify_outcome, trimmed_objective};
pub use iht::iht;
pub use ilts::ilts;
pub use proj::proj_k;

/// Detection method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Lasso,
    Iht,
    Ilts,
    Alts,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Lasso, Method::Iht, Method::Ilts, Method::Alts];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Lasso => "lasso",
            Method::Iht => "iht",
            Method::Ilts => "ilts",
            Method::Alts => "alts",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = RankError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "lasso" => Ok(Method::Lasso),
            "iht" => Ok(Method::Iht),
            "ilts" => Ok(Method::Ilts),
            "alts" => Ok(Method::Alts),
            other => Err(RankError::InvalidParameter(format!("unknown method '{other}'"))),
        }
    }
}

/// Sparse outlier magnitudes `E`, one entry per record.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutlierVector {
    pub values: Vec<f64>,
}

impl OutlierVector {
    pub fn zeros(n: usize) -> Self {
        Self {
            values: vec![0.0; n],
        }
    }

    /// Indices of nonzero entries, ascending.
    pub fn support(&self) -> Vec<usize> {
        self.values
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(k, _)| k)
            .collect()
    }

    pub fn l0(&self) -> usize {
        self.values.iter().filter(|v| **v != 0.0).count()
    }
}

/// Binary selection `Λ`: `true` keeps a record, `false` trims it as an outlier.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SelectionMask {
    pub keep: Vec<bool>,
}

impl SelectionMask {
    pub fn all(n: usize) -> Self {
        Self {
            keep: vec![true; n],
        }
    }

    pub fn from_dropped(n: usize, dropped: &[usize]) -> Self {
        let mut keep = vec![true; n];
        for &k in dropped {
            keep[k] = false;
        }
        Self { keep }
    }

    /// Trimmed indices, ascending.
    pub fn dropped(&self) -> Vec<usize> {
        self.keep
            .iter()
            .enumerate()
            .filter(|(_, k)| !**k)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn kept_count(&self) -> usize {
        self.keep.iter().filter(|k| **k).count()
    }
}

/// What a solver flags: outlier magnitudes or a trimming mask.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Detection {
    Magnitudes(OutlierVector),
    Mask(SelectionMask),
}

impl Detection {
    /// Flagged record indices in record order.
    pub fn flagged(&self) -> Vec<usize> {
        match self {
            Detection::Magnitudes(e) => e.support(),
            Detection::Mask(m) => m.dropped(),
        }
    }

    /// The trimming mask implied by the detection.
    pub fn mask(&self) -> SelectionMask {
        match self {
            Detection::Magnitudes(e) => SelectionMask {
                keep: e.values.iter().map(|v| *v == 0.0).collect(),
            },
            Detection::Mask(m) => m.clone(),
        }
    }
}

/// Parameters shared by the solvers. Each procedure reads only the fields
/// it needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Outlier budget `K` (iHT, iLTS).
    pub k: usize,
    /// iHT stopping tolerance, relative to `‖Y‖₂`.
    pub epsilon: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub max_iters: usize,
    /// Seed for tie-breaking choices (iLTS, aLTS).
    pub rng_seed: u64,
    /// Successive-pair correction after aLTS.
    pub apply_correction: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            k: 0,
            epsilon: 1e-8,
            beta1: 0.75,
            beta2: 1.03,
            max_iters: 1000,
            rng_seed: 0,
            apply_correction: false,
        }
    }
}

impl SolverConfig {
    pub fn with_k(k: usize) -> Self {
        Self {
            k,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(RankError::InvalidParameter("epsilon must be positive".into()));
        }
        if !(self.beta1 > 0.0 && self.beta1 < 1.0) {
            return Err(RankError::InvalidParameter("beta1 must lie in (0, 1)".into()));
        }
        if !(self.beta2 > 1.0 && self.beta2.is_finite()) {
            return Err(RankError::InvalidParameter("beta2 must exceed 1".into()));
        }
        if self.max_iters == 0 {
            return Err(RankError::InvalidParameter("max_iters must be positive".into()));
        }
        Ok(())
    }
}

/// Result of one solver run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolverOutcome {
    pub method: Method,
    pub scores: ScoreVector,
    pub detection: Detection,
    pub iterations: usize,
    pub converged: bool,
    /// Estimated outlier count (aLTS only).
    pub khat: Option<usize>,
    /// Fingerprints of every distinct mask visited (iLTS only).
    pub history_digest: Vec<u64>,
    /// Per-iteration objective: `F(s^k, Λ^k)` for iLTS and aLTS,
    /// `‖E^{k+1} - E^k‖₂` for iHT.
    pub trace: Vec<f64>,
    /// Per-iteration count estimates (aLTS only).
    pub count_trace: Vec<CountStep>,
}

impl SolverOutcome {
    pub fn flagged(&self) -> Vec<usize> {
        self.detection.flagged()
    }
}

pub(crate) fn residual(y: &[f64], xs: &[f64]) -> Vec<f64> {
    y.iter().zip(xs).map(|(a, b)| a - b).collect()
}
