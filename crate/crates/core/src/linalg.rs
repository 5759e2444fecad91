//! Small dense helpers shared by the solvers and the condition checks.

use nalgebra::{DMatrix, SymmetricEigen};

/// Largest eigenvalue of a symmetric matrix (its spectral norm when PSD).
pub(crate) fn max_eigenvalue(m: &DMatrix<f64>) -> f64 {
    match m.nrows() {
        0 => 0.0,
        1 => m[(0, 0)],
        2 => {
            let (a, b, d) = (m[(0, 0)], m[(0, 1)], m[(1, 1)]);
            let mid = 0.5 * (a + d);
            let rad = (0.25 * (a - d) * (a - d) + b * b).sqrt();
            mid + rad
        }
        _ => SymmetricEigen::new(m.clone()).eigenvalues.max(),
    }
}

/// Spectral norm of an arbitrary matrix, via the smaller Gram matrix.
pub(crate) fn spectral_norm(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 0 || a.ncols() == 0 {
        return 0.0;
    }
    let gram = if a.nrows() <= a.ncols() {
        a * a.transpose()
    } else {
        a.transpose() * a
    };
    max_eigenvalue(&gram).max(0.0).sqrt()
}

/// Principal submatrix `m[idx, idx]`.
pub(crate) fn principal_submatrix(m: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), idx.len(), |r, c| m[(idx[r], idx[c])])
}

/// `C(n, k)`, saturating at `u128::MAX`.
pub(crate) fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = match acc.checked_mul((n - i) as u128) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    acc
}

pub(crate) fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binomials() {
        assert_eq!(binomial(45, 3), 14190);
        assert_eq!(binomial(5, 0), 1);
        assert_eq!(binomial(3, 5), 0);
        assert_eq!(binomial(120, 60), 96_614_908_840_363_322_603_893_139_521_372_656);
    }

    #[test]
    fn eigen_closed_form_matches_general() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 3.0]);
        let general = SymmetricEigen::new(m.clone()).eigenvalues.max();
        assert!((max_eigenvalue(&m) - general).abs() < 1e-12);
    }

    #[test]
    fn spectral_norm_of_rectangular() {
        let a = DMatrix::from_row_slice(1, 2, &[3.0, 4.0]);
        assert!((spectral_norm(&a) - 5.0).abs() < 1e-12);
        assert!((spectral_norm(&a.transpose()) - 5.0).abs() < 1e-12);
    }
}
