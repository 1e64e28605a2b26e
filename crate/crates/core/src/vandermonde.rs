//! Vandermonde matrices in the monomial basis.
//!
//! Columns use ascending degree throughout: entry `(n, k)` of `V(x)` is
//! `x[n]^k`, so column 0 is all ones. Coefficient vectors follow the same
//! order, `w = [w_0, w_1, ..., w_{K-1}]`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Sampling positions `x`. Non-empty, all entries finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct SampleLocations(Vec<f64>);

impl SampleLocations {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidInput("no sample locations".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("location {i} is not finite")));
        }
        Ok(Self(values))
    }

    /// `n` equally spaced points from `lo` to `hi` inclusive.
    pub fn linspace(lo: f64, hi: f64, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidInput("no sample locations".into()));
        }
        if n == 1 {
            return Self::new(vec![lo]);
        }
        let step = (hi - lo) / (n - 1) as f64;
        Self::new((0..n).map(|i| lo + i as f64 * step).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn to_dvector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.0)
    }

    /// True when no two entries compare equal.
    pub fn is_distinct(&self) -> bool {
        let mut v = self.0.clone();
        v.sort_by(f64::total_cmp);
        v.windows(2).all(|w| w[0] != w[1])
    }
}

impl TryFrom<Vec<f64>> for SampleLocations {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Self::new(values)
    }
}

impl From<SampleLocations> for Vec<f64> {
    fn from(x: SampleLocations) -> Self {
        x.0
    }
}

/// `N x K` Vandermonde matrix with entry `(n, k) = x[n]^k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Vandermonde(DMatrix<f64>);

impl Vandermonde {
    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    /// Number of columns, one more than the polynomial degree.
    pub fn degree_plus_one(&self) -> usize {
        self.0.ncols()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }
}

/// `K x L` coefficient matrix; column `l` holds polynomial `l` in ascending degree.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientMatrix(DMatrix<f64>);

impl CoefficientMatrix {
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        if entries.nrows() == 0 || entries.ncols() == 0 {
            return Err(Error::InvalidInput("coefficient matrix must be at least 1x1".into()));
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("coefficient matrix has non-finite entries".into()));
        }
        Ok(Self(entries))
    }

    /// Number of coefficients per polynomial (`K`).
    pub fn degree_plus_one(&self) -> usize {
        self.0.nrows()
    }

    /// Number of polynomials (`L`).
    pub fn channels(&self) -> usize {
        self.0.ncols()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }
}

/// `N x L` matrix of sampled function values.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationMatrix(DMatrix<f64>);

impl ObservationMatrix {
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("observation matrix has non-finite entries".into()));
        }
        Ok(Self(entries))
    }

    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    pub fn channels(&self) -> usize {
        self.0.ncols()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }
}

/// Builds `V(x)` with `k` columns. Column `j` is column `j - 1` times `x`
/// elementwise, so every column is an exact repeated product.
pub fn build_vandermonde(x: &SampleLocations, k: usize) -> Result<Vandermonde> {
    if k == 0 {
        return Err(Error::InvalidInput("K must be at least 1".into()));
    }
    Ok(Vandermonde(vandermonde_matrix(x.as_slice(), k)))
}

/// Unchecked kernel behind [`build_vandermonde`], used in inner loops where
/// the inputs were validated upstream.
pub(crate) fn vandermonde_matrix(x: &[f64], k: usize) -> DMatrix<f64> {
    let n = x.len();
    let mut v = DMatrix::zeros(n, k);
    if k == 0 {
        return v;
    }
    v.column_mut(0).fill(1.0);
    for j in 1..k {
        for i in 0..n {
            v[(i, j)] = v[(i, j - 1)] * x[i];
        }
    }
    v
}

/// Ordinary least-squares coefficients for a single channel.
///
/// Requires `N >= K` and distinct locations; otherwise returns
/// [`Error::RankDeficient`] with the numerical rank of `V`.
pub fn ols_fit(v: &Vandermonde, y: &DVector<f64>) -> Result<DVector<f64>> {
    if y.len() != v.rows() {
        return Err(Error::ShapeMismatch(format!(
            "V has {} rows, y has {} entries",
            v.rows(),
            y.len()
        )));
    }
    linalg::lstsq_vec(&v.0, y)
}

/// Noiseless observations `Y = V(x) W`.
pub fn synthesize_observations(
    x: &SampleLocations,
    w: &CoefficientMatrix,
) -> Result<ObservationMatrix> {
    let v = build_vandermonde(x, w.degree_plus_one())?;
    Ok(ObservationMatrix(v.0 * &w.0))
}

/// Polynomial differentiation matrix: `K x K`, superdiagonal `1, 2, ..., K-1`.
///
/// For coefficients `w`, `D w` are the coefficients of the derivative, and
/// `V(x) D` has column `k` equal to `k * x^(k-1)`.
pub fn differentiation_matrix(k: usize) -> DMatrix<f64> {
    let mut d = DMatrix::zeros(k, k);
    for j in 1..k {
        d[(j - 1, j)] = j as f64;
    }
    d
}

/// Ratio of extreme singular values of `V`. Infinite when the smallest one
/// falls under the rank tolerance.
pub fn condition_estimate(v: &Vandermonde) -> f64 {
    let s = linalg::singular_values(&v.0);
    let (Some(&smax), Some(&smin)) = (s.first(), s.last()) else {
        return f64::INFINITY;
    };
    if v.rows() < v.degree_plus_one() {
        return f64::INFINITY;
    }
    if smin <= linalg::rank_tolerance(v.rows(), v.degree_plus_one(), smax) {
        return f64::INFINITY;
    }
    smax / smin
}

/// Evaluates each coefficient column of `w` at the points `z` (Horner's rule).
/// Returns a `z.len() x L` matrix.
pub fn evaluate_polynomials(w: &DMatrix<f64>, z: &[f64]) -> DMatrix<f64> {
    let k = w.nrows();
    DMatrix::from_fn(z.len(), w.ncols(), |i, l| {
        (0..k).rev().fold(0.0, |acc, j| acc * z[i] + w[(j, l)])
    })
}
