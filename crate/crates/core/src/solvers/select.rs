//! Trimming-mask selection shared by iLTS and aLTS.
//!
//! Records that are exact copies of each other (same unordered pair, same
//! oriented value) always have identical residuals and are interchangeable.
//! Masks are therefore kept canonical: within each class of identical
//! records the lowest indices are trimmed first. Boundary ties are resolved
//! by choosing how many records to trim from each tied class.

use std::collections::{HashMap, HashSet};

use rand::seq::index::sample;
use rand::Rng;

use crate::graph::ComparisonDataset;

/// Above this many distinct tie resolutions, unseen ones are found by
/// rejection sampling instead of enumeration.
const ENUMERATION_LIMIT: u128 = 100_000;
const MAX_REJECTION_DRAWS: usize = 100_000;

/// Class id per record; equal ids mean interchangeable records.
pub(crate) fn record_classes(dataset: &ComparisonDataset) -> Vec<usize> {
    let mut ids: HashMap<(usize, usize, u64), usize> = HashMap::new();
    dataset
        .records()
        .iter()
        .map(|r| {
            let (a, b, v) = if r.item_i < r.item_j {
                (r.item_i, r.item_j, r.value)
            } else {
                (r.item_j, r.item_i, -r.value)
            };
            // fold -0.0 into 0.0
            let key = (a, b, (v + 0.0).to_bits());
            let next = ids.len();
            *ids.entry(key).or_insert(next)
        })
        .collect()
}

/// Outcome of a trimming selection.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum Selection {
    /// Sorted indices to trim.
    Drop(Vec<usize>),
    /// Every admissible resolution of a boundary tie was already seen.
    Exhausted,
}

/// Chooses `drop` records with the largest squared residuals.
///
/// With `seen`, a boundary tie is resolved to a mask not in `seen` when one
/// exists; without it, uniformly at random over tied records.
pub(crate) fn select_trimmed<R: Rng>(
    squares: &[f64],
    drop: usize,
    classes: &[usize],
    seen: Option<&HashSet<Vec<usize>>>,
    rng: &mut R,
) -> Selection {
    let n = squares.len();
    let drop = drop.min(n);
    if drop == 0 {
        return Selection::Drop(Vec::new());
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| squares[b].total_cmp(&squares[a]).then(a.cmp(&b)));
    let boundary = squares[order[drop - 1]];
    let definite: Vec<usize> = order
        .iter()
        .copied()
        .take_while(|&k| squares[k].total_cmp(&boundary).is_gt())
        .collect();
    let tied: Vec<usize> = order[definite.len()..]
        .iter()
        .copied()
        .take_while(|&k| squares[k].total_cmp(&boundary).is_eq())
        .collect();
    let need = drop - definite.len();

    let groups = group_by_class(&tied, classes);
    let canonical = |counts: &[usize]| -> Vec<usize> {
        let mut out = definite.clone();
        for (group, &c) in groups.iter().zip(counts) {
            out.extend_from_slice(&group[..c]);
        }
        out.sort_unstable();
        out
    };

    if need == tied.len() {
        return Selection::Drop(canonical(&groups.iter().map(Vec::len).collect::<Vec<_>>()));
    }

    let sizes: Vec<usize> = groups.iter().map(Vec::len).collect();
    let random_counts = |rng: &mut R| -> Vec<usize> {
        let mut counts = vec![0; groups.len()];
        let group_of: Vec<usize> = sizes
            .iter()
            .enumerate()
            .flat_map(|(g, &s)| std::iter::repeat_n(g, s))
            .collect();
        for pick in sample(rng, tied.len(), need).into_iter() {
            counts[group_of[pick]] += 1;
        }
        counts
    };

    let Some(seen) = seen else {
        return Selection::Drop(canonical(&random_counts(rng)));
    };

    if count_compositions(&sizes, need) <= ENUMERATION_LIMIT {
        let mut candidates: Vec<Vec<usize>> = Vec::new();
        enumerate_compositions(&sizes, need, &mut Vec::new(), &mut |counts| {
            let mask = canonical(counts);
            if !seen.contains(&mask) {
                candidates.push(mask);
            }
        });
        if candidates.is_empty() {
            return Selection::Exhausted;
        }
        let pick = rng.gen_range(0..candidates.len());
        return Selection::Drop(candidates.swap_remove(pick));
    }
    for _ in 0..MAX_REJECTION_DRAWS {
        let mask = canonical(&random_counts(rng));
        if !seen.contains(&mask) {
            return Selection::Drop(mask);
        }
    }
    Selection::Exhausted
}

fn group_by_class(tied: &[usize], classes: &[usize]) -> Vec<Vec<usize>> {
    let mut position: HashMap<usize, usize> = HashMap::new();
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut sorted = tied.to_vec();
    sorted.sort_unstable();
    for k in sorted {
        let g = *position.entry(classes[k]).or_insert_with(|| {
            groups.push(Vec::new());
            groups.len() - 1
        });
        groups[g].push(k);
    }
    groups
}

/// Number of ways to take `total` items from groups of the given sizes,
/// counting only per-group counts. Saturates above the enumeration limit.
fn count_compositions(sizes: &[usize], total: usize) -> u128 {
    let mut ways = vec![0u128; total + 1];
    ways[0] = 1;
    for &s in sizes {
        let mut next = vec![0u128; total + 1];
        for (t, &w) in ways.iter().enumerate() {
            if w == 0 {
                continue;
            }
            for c in 0..=s.min(total - t) {
                next[t + c] = (next[t + c] + w).min(ENUMERATION_LIMIT + 1);
            }
        }
        ways = next;
    }
    ways[total]
}

fn enumerate_compositions(
    sizes: &[usize],
    remaining: usize,
    prefix: &mut Vec<usize>,
    visit: &mut dyn FnMut(&[usize]),
) {
    let depth = prefix.len();
    if depth == sizes.len() {
        if remaining == 0 {
            visit(prefix);
        }
        return;
    }
    let capacity_after: usize = sizes[depth + 1..].iter().sum();
    let lo = remaining.saturating_sub(capacity_after);
    for c in lo..=sizes[depth].min(remaining) {
        prefix.push(c);
        enumerate_compositions(sizes, remaining - c, prefix, visit);
        prefix.pop();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(7)
    }

    #[test]
    fn unique_selection() {
        let sq = [1.0, 9.0, 4.0, 0.5];
        let sel = select_trimmed(&sq, 2, &[0, 1, 2, 3], None, &mut rng());
        assert_eq!(sel, Selection::Drop(vec![1, 2]));
    }

    #[test]
    fn identical_records_form_one_choice() {
        // records 1..=3 identical; drop two of them
        let sq = [0.1, 4.0, 4.0, 4.0];
        let classes = [0, 1, 1, 1];
        let mut seen = HashSet::new();
        let sel = select_trimmed(&sq, 2, &classes, Some(&seen), &mut rng());
        assert_eq!(sel, Selection::Drop(vec![1, 2]));
        seen.insert(vec![1, 2]);
        assert_eq!(select_trimmed(&sq, 2, &classes, Some(&seen), &mut rng()), Selection::Exhausted);
    }

    #[test]
    fn distinct_tied_records_pick_unseen() {
        let sq = [4.0, 4.0, 4.0, 0.0];
        let classes = [0, 1, 2, 3];
        let mut seen = HashSet::new();
        let mut r = rng();
        for _ in 0..3 {
            match select_trimmed(&sq, 2, &classes, Some(&seen), &mut r) {
                Selection::Drop(mask) => {
                    assert_eq!(mask.len(), 2);
                    assert!(!mask.contains(&3));
                    assert!(seen.insert(mask));
                }
                Selection::Exhausted => panic!("unseen choice exists"),
            }
        }
        assert_eq!(select_trimmed(&sq, 2, &classes, Some(&seen), &mut r), Selection::Exhausted);
    }

    #[test]
    fn composition_counts() {
        assert_eq!(count_compositions(&[1, 1, 1], 2), 3);
        assert_eq!(count_compositions(&[8], 3), 1);
        assert_eq!(count_compositions(&[2, 3], 3), 3);
        let mut all = Vec::new();
        enumerate_compositions(&[2, 3], 3, &mut Vec::new(), &mut |c| all.push(c.to_vec()));
        assert_eq!(all, vec![vec![0, 3], vec![1, 2], vec![2, 1]]);
    }
}
