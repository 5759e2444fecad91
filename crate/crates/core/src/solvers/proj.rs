use std::cmp::Ordering;

use super::OutlierVector;
use crate::error::{RankError, Result};

/// Keeps the `k` entries of `v` with the largest squares and zeroes the rest.
///
/// Equal squares are resolved in favour of the lower index.
pub fn proj_k(v: &[f64], k: usize) -> Result<OutlierVector> {
    if k > v.len() {
        return Err(RankError::InvalidParameter(format!(
            "K = {k} exceeds vector length {}",
            v.len()
        )));
    }
    let mut out = OutlierVector::zeros(v.len());
    if k == 0 {
        return Ok(out);
    }
    let mut idx: Vec<usize> = (0..v.len()).collect();
    let by_square_desc =
        |a: &usize, b: &usize| -> Ordering { (v[*b] * v[*b]).total_cmp(&(v[*a] * v[*a])).then(a.cmp(b)) };
    if k < idx.len() {
        idx.select_nth_unstable_by(k - 1, by_square_desc);
    }
    for &i in &idx[..k] {
        out.values[i] = v[i];
    }
    Ok(out)
}
