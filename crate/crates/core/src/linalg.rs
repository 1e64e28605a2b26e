//! Small dense linear-algebra helpers shared by the solvers.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Singular values of `a` in descending order.
pub fn singular_values(a: &DMatrix<f64>) -> Vec<f64> {
    if a.is_empty() {
        return Vec::new();
    }
    let mut s: Vec<f64> = a.clone().singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Rank tolerance `max(rows, cols) * sigma_max * eps`.
pub fn rank_tolerance(rows: usize, cols: usize, sigma_max: f64) -> f64 {
    rows.max(cols) as f64 * sigma_max * f64::EPSILON
}

/// Numerical rank under [`rank_tolerance`].
pub fn numerical_rank(a: &DMatrix<f64>) -> usize {
    let s = singular_values(a);
    let Some(&smax) = s.first() else { return 0 };
    let tol = rank_tolerance(a.nrows(), a.ncols(), smax);
    s.iter().filter(|&&v| v > tol && v > 0.0).count()
}

/// Least-squares solution of `a * x = b` for full-column-rank `a`, via SVD.
///
/// Fails with [`Error::RankDeficient`] when `a` has fewer than `a.ncols()`
/// numerically independent columns.
pub fn lstsq(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if a.nrows() != b.nrows() {
        return Err(Error::ShapeMismatch(format!(
            "design has {} rows, target has {}",
            a.nrows(),
            b.nrows()
        )));
    }
    let required = a.ncols();
    if a.nrows() < required {
        return Err(Error::RankDeficient { rank: numerical_rank(a), required });
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let tol = rank_tolerance(a.nrows(), a.ncols(), smax);
    let rank = svd.singular_values.iter().filter(|&&v| v > tol && v > 0.0).count();
    if rank < required {
        return Err(Error::RankDeficient { rank, required });
    }
    Ok(svd.solve(b, tol).expect("both factors were computed"))
}

/// Vector form of [`lstsq`].
pub fn lstsq_vec(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let m = DMatrix::from_column_slice(b.len(), 1, b.as_slice());
    lstsq(a, &m).map(|x| x.column(0).into_owned())
}

/// Minimum-norm least-squares solution `pinv(a) * b`, truncating singular
/// values below the rank tolerance. Never fails.
pub fn pinv_solve(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    if a.is_empty() {
        return DMatrix::zeros(a.ncols(), b.ncols());
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let tol = rank_tolerance(a.nrows(), a.ncols(), smax).max(f64::MIN_POSITIVE);
    svd.solve(b, tol).expect("both factors were computed")
}
