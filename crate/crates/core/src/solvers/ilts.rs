use std::collections::hash_map::DefaultHasher;
use std::collections::HashSet;
use std::hash::{Hash, Hasher};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::certify::trimmed_objective;
use super::select::{record_classes, select_trimmed, Selection};
use super::{residual, Detection, Method, SelectionMask, SolverConfig, SolverOutcome};
use crate::error::{check_len, RankError, Result};
use crate::graph::{scores_with, ComparisonDataset, GradientOperator};

/// Fingerprint of a mask: hash of its sorted trimmed-index set.
pub(crate) fn mask_digest(dropped: &[usize]) -> u64 {
    let mut h = DefaultHasher::new();
    dropped.hash(&mut h);
    h.finish()
}

/// Iterative least trimmed squares with a known outlier budget `K`.
///
/// Starts from the full mask, alternates a masked least-squares fit with
/// trimming the `K` largest squared residuals, and stops as soon as a
/// trimming mask repeats one seen before. Returns the last mask that was
/// fitted together with its scores.
pub fn ilts(dataset: &ComparisonDataset, op: &GradientOperator, config: &SolverConfig) -> Result<SolverOutcome> {
    config.validate()?;
    check_len(op.n_rows(), dataset.len())?;
    let n_rows = dataset.len();
    if config.k >= n_rows {
        return Err(RankError::InvalidParameter(format!(
            "K = {} must be smaller than the number of comparisons {n_rows}",
            config.k
        )));
    }
    let y = dataset.values();
    let classes = record_classes(dataset);
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);

    let mut mask = SelectionMask::all(n_rows);
    let mut seen: HashSet<Vec<usize>> = HashSet::new();
    seen.insert(Vec::new());
    let mut history_digest = vec![mask_digest(&[])];
    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut converged = false;

    let scores = loop {
        iterations += 1;
        let solver = op.solver(Some(&mask.keep))?;
        let scores = scores_with(&solver, op, &y, Some(&mask.keep))?;
        let r = residual(&y, &op.apply_x(&scores.scores)?);
        trace.push(trimmed_objective(&r, &mask.keep));
        if iterations >= config.max_iters {
            break scores;
        }

        let squares: Vec<f64> = r.iter().map(|v| v * v).collect();
        match select_trimmed(&squares, config.k, &classes, Some(&seen), &mut rng) {
            Selection::Exhausted => {
                converged = true;
                break scores;
            }
            Selection::Drop(dropped) => {
                if seen.contains(&dropped) {
                    converged = true;
                    break scores;
                }
                history_digest.push(mask_digest(&dropped));
                mask = SelectionMask::from_dropped(n_rows, &dropped);
                seen.insert(dropped);
            }
        }
    };

    Ok(SolverOutcome {
        method: Method::Ilts,
        scores,
        detection: Detection::Mask(mask),
        iterations,
        converged,
        khat: None,
        history_digest,
        trace,
        count_trace: Vec::new(),
    })
}
