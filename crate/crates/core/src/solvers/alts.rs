use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::certify::trimmed_objective;
use super::select::{record_classes, select_trimmed, Selection};
use super::{residual, Detection, Method, SelectionMask, SolverConfig, SolverOutcome};
use crate::error::{check_len, Result};
use crate::graph::{scores_with, ComparisonDataset, GradientOperator};

/// Count estimates recorded at one aLTS iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CountStep {
    /// Running minimum of the number of sign-inconsistent records.
    pub overestimate: usize,
    /// Number of records trimmed for the next fit.
    pub underestimate: usize,
}

/// Upper bound on aLTS iterations for growth factors `beta1`, `beta2`.
pub fn iteration_bound(beta1: f64, beta2: f64) -> usize {
    (-beta1.ln() / beta2.ln()).floor() as usize + 2
}

/// `⌈x⌉` for nonnegative `x`, treating values within rounding noise of an
/// integer as that integer.
fn ceil_count(x: f64) -> usize {
    let r = x.round();
    if (x - r).abs() <= 1e-9 * x.abs().max(1.0) {
        r as usize
    } else {
        x.ceil() as usize
    }
}

/// Adaptive least trimmed squares for `±1` comparisons with unknown outlier count.
///
/// Each iteration fits masked least squares, counts records whose sign
/// disagrees with the fitted score difference (an overestimate, kept as a
/// running minimum), and grows an underestimate from `⌈β₁·K̃⁰⌉` by factor
/// `β₂`. Stops when the two meet; otherwise trims the underestimate's worth
/// of largest squared residuals and refits.
pub fn alts(dataset: &ComparisonDataset, op: &GradientOperator, config: &SolverConfig) -> Result<SolverOutcome> {
    config.validate()?;
    check_len(op.n_rows(), dataset.len())?;
    dataset.require_dichotomous()?;
    let n_rows = dataset.len();
    let y = dataset.values();
    let classes = record_classes(dataset);
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);

    let mut mask = SelectionMask::all(n_rows);
    let mut over_prev = usize::MAX;
    let mut under_prev = 0usize;
    let mut count_trace = Vec::new();
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iteration = 0usize;

    let (scores, khat) = loop {
        let solver = op.solver(Some(&mask.keep))?;
        let scores = scores_with(&solver, op, &y, Some(&mask.keep))?;
        let xs = op.apply_x(&scores.scores)?;
        let r = residual(&y, &xs);
        trace.push(trimmed_objective(&r, &mask.keep));

        // a zero score gap cannot confirm the observed direction
        let wrong = y.iter().zip(&xs).filter(|(v, d)| **d == 0.0 || v.signum() != d.signum()).count();
        let over = wrong.min(over_prev);
        let under = if iteration == 0 {
            ceil_count(config.beta1 * over as f64)
        } else {
            ceil_count(config.beta2 * under_prev as f64).min(over)
        };
        count_trace.push(CountStep {
            overestimate: over,
            underestimate: under,
        });
        iteration += 1;
        if under == over {
            converged = true;
            break (scores, over);
        }
        if iteration >= config.max_iters {
            break (scores, over);
        }

        let squares: Vec<f64> = r.iter().map(|v| v * v).collect();
        let Selection::Drop(dropped) = select_trimmed(&squares, under, &classes, None, &mut rng) else {
            unreachable!("selection without history always yields a mask");
        };
        mask = SelectionMask::from_dropped(n_rows, &dropped);
        over_prev = over;
        under_prev = under;
    };

    if config.apply_correction {
        mask = successive_pair_correction(dataset, &scores.scores, &mask);
    }

    Ok(SolverOutcome {
        method: Method::Alts,
        scores,
        detection: Detection::Mask(mask),
        iterations: iteration,
        converged,
        khat: Some(khat),
        history_digest: Vec::new(),
        trace,
        count_trace,
    })
}

/// Revisits each pair of items adjacent in the score order. When the
/// higher-scored item lost the direct head-to-head vote, the records
/// favouring it become the flagged ones and the majority records are kept.
pub fn successive_pair_correction(dataset: &ComparisonDataset, scores: &[f64], mask: &SelectionMask) -> SelectionMask {
    let mut items: Vec<usize> = (0..scores.len()).collect();
    items.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut keep = mask.keep.clone();
    for pair in items.windows(2) {
        let (hi, lo) = (pair[0], pair[1]);
        if !(scores[hi] > scores[lo]) {
            continue;
        }
        let mut for_hi = Vec::new();
        let mut for_lo = Vec::new();
        for (k, r) in dataset.records().iter().enumerate() {
            let oriented = if (r.item_i, r.item_j) == (hi, lo) {
                r.value
            } else if (r.item_i, r.item_j) == (lo, hi) {
                -r.value
            } else {
                continue;
            };
            if oriented > 0.0 {
                for_hi.push(k);
            } else if oriented < 0.0 {
                for_lo.push(k);
            }
        }
        if for_hi.len() < for_lo.len() {
            for &k in &for_lo {
                keep[k] = true;
            }
            for &k in &for_hi {
                keep[k] = false;
            }
        }
    }
    SelectionMask { keep }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::ComparisonRecord;
    use crate::RankError;

    fn total_order(n: usize, copies: usize) -> ComparisonDataset {
        let mut recs = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                for c in 0..copies {
                    // alternate orientation to exercise both storage forms
                    if c % 2 == 0 {
                        recs.push(ComparisonRecord::new("r", i, j, 1.0));
                    } else {
                        recs.push(ComparisonRecord::new("r", j, i, -1.0));
                    }
                }
            }
        }
        ComparisonDataset::new(n, recs).unwrap()
    }

    #[test]
    fn consistent_data_stops_immediately() {
        let d = total_order(6, 3);
        let out = alts(&d, &d.operator(), &SolverConfig::default()).unwrap();
        assert_eq!(out.khat, Some(0));
        assert_eq!(out.iterations, 1);
        assert!(out.flagged().is_empty());
        assert!(out.converged);
    }

    #[test]
    fn iteration_bound_for_default_betas() {
        assert_eq!(iteration_bound(0.75, 1.03), 11);
    }

    #[test]
    fn rejects_continuous_data() {
        let recs = vec![ComparisonRecord::new("r", 0, 1, 0.5)];
        let d = ComparisonDataset::new(2, recs).unwrap();
        assert!(matches!(
            alts(&d, &d.operator(), &SolverConfig::default()),
            Err(RankError::NotDichotomous { .. })
        ));
    }

    #[test]
    fn recovers_flipped_count_on_dense_sample() {
        // 8 items, 6 votes per pair, one flipped vote on five different pairs
        let mut d = total_order(8, 6);
        let mut recs = d.records().to_vec();
        for &k in &[0usize, 37, 80, 121, 160] {
            recs[k].value = -recs[k].value;
        }
        d = ComparisonDataset::new(8, recs).unwrap();
        let out = alts(&d, &d.operator(), &SolverConfig::default()).unwrap();
        assert_eq!(out.khat, Some(5));
        // the returned mask is the one fitted last, trimmed at the previous underestimate
        let trimmed = out.count_trace[out.count_trace.len() - 2].underestimate;
        let flagged = out.flagged();
        assert_eq!(flagged.len(), trimmed);
        assert!(flagged.iter().all(|k| [0, 37, 80, 121, 160].contains(k)));
        assert!(out.iterations <= 11);
        for w in out.count_trace.windows(2) {
            assert!(w[1].overestimate <= w[0].overestimate);
            assert!(w[1].underestimate >= w[0].underestimate);
        }
    }

    #[test]
    fn correction_flips_minority_direction() {
        // item 0 scored above item 1 but loses the head-to-head 1 to 2
        let recs = vec![
            ComparisonRecord::new("a", 0, 1, 1.0),
            ComparisonRecord::new("b", 0, 1, -1.0),
            ComparisonRecord::new("c", 1, 0, 1.0),
        ];
        let d = ComparisonDataset::new(2, recs).unwrap();
        let mask = SelectionMask::from_dropped(3, &[1, 2]);
        let fixed = successive_pair_correction(&d, &[0.3, -0.3], &mask);
        assert_eq!(fixed.dropped(), vec![0]);
        // majority agrees with the order: nothing changes
        let fixed = successive_pair_correction(&d, &[-0.3, 0.3], &mask);
        assert_eq!(fixed, mask);
    }

    #[test]
    fn ceil_ignores_rounding_noise() {
        assert_eq!(ceil_count(1.03 * 100.0), 103);
        assert_eq!(ceil_count(0.75 * 7.0), 6);
        assert_eq!(ceil_count(0.0), 0);
    }
}
