//! Affine ambiguity of the Vandermonde factorization.
//!
//! For any shift `t0` and nonzero scale `t1`, the upper Pascal matrix
//! `T(t0, t1)` satisfies `v(x)^T T = v(t0 + t1 x)^T`. Hence `V(x) T` is again
//! Vandermonde and `(t0 + t1 x, T^-1 W)` explains `Y` as well as `(x, W)`.
//! Recovered locations are therefore scored modulo this transform.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fmt as numfmt;
use crate::linalg;
use crate::vandermonde::{vandermonde_matrix, SampleLocations};

/// The affine map `x -> t0 + t1 x` with `t1 != 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PascalTransform {
    t0: f64,
    t1: f64,
}

impl PascalTransform {
    pub const IDENTITY: PascalTransform = PascalTransform { t0: 0.0, t1: 1.0 };

    pub fn new(t0: f64, t1: f64) -> Result<Self> {
        if !t0.is_finite() || !t1.is_finite() {
            return Err(Error::InvalidInput("transform parameters must be finite".into()));
        }
        if t1 == 0.0 {
            return Err(Error::InvalidInput("transform scale t1 must be nonzero".into()));
        }
        Ok(Self { t0, t1 })
    }

    pub fn shift(&self) -> f64 {
        self.t0
    }

    pub fn scale(&self) -> f64 {
        self.t1
    }

    pub fn apply_scalar(&self, x: f64) -> f64 {
        self.t0 + self.t1 * x
    }

    /// `self` followed by `next`: `x -> next(self(x))`.
    ///
    /// Matches the matrix product `pascal_matrix(self) * pascal_matrix(next)`.
    pub fn then(&self, next: &PascalTransform) -> PascalTransform {
        PascalTransform { t0: next.t0 + next.t1 * self.t0, t1: next.t1 * self.t1 }
    }

    pub fn inverse(&self) -> PascalTransform {
        PascalTransform { t0: -self.t0 / self.t1, t1: 1.0 / self.t1 }
    }
}

/// Upper Pascal matrix: entry `(i, j) = C(j, i) t0^(j-i) t1^i` for `i <= j`.
///
/// Column `j` holds the coefficients of `(t0 + t1 x)^j`.
pub fn pascal_matrix(t: &PascalTransform, k: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(k, k);
    if k == 0 {
        return m;
    }
    let mut pow0 = vec![1.0; k];
    let mut pow1 = vec![1.0; k];
    for p in 1..k {
        pow0[p] = pow0[p - 1] * t.t0;
        pow1[p] = pow1[p - 1] * t.t1;
    }
    // Binomial row C(j, .) built additively, one row per column of T.
    let mut binom = vec![0.0; k];
    binom[0] = 1.0;
    for j in 0..k {
        if j > 0 {
            for i in (1..=j).rev() {
                binom[i] += binom[i - 1];
            }
        }
        for i in 0..=j {
            m[(i, j)] = binom[i] * pow0[j - i] * pow1[i];
        }
    }
    m
}

/// Elementwise `t0 + t1 x`.
pub fn apply_transform(t: &PascalTransform, x: &SampleLocations) -> SampleLocations {
    SampleLocations::new(x.as_slice().iter().map(|&v| t.apply_scalar(v)).collect())
        .expect("finite affine image of finite locations")
}

/// Largest deviation `|v(x_n)^T T - v(t0 + t1 x_n)^T|` over all samples and columns.
pub fn verify_pascal_identity(x: &SampleLocations, t: &PascalTransform, k: usize) -> f64 {
    verify_with_matrix(x, t, &pascal_matrix(t, k))
}

/// As [`verify_pascal_identity`] but against an arbitrary `K x K` matrix, so
/// perturbed candidates can be checked.
pub fn verify_with_matrix(x: &SampleLocations, t: &PascalTransform, m: &DMatrix<f64>) -> f64 {
    let k = m.ncols();
    let lhs = vandermonde_matrix(x.as_slice(), k) * m;
    let mapped: Vec<f64> = x.as_slice().iter().map(|&v| t.apply_scalar(v)).collect();
    let rhs = vandermonde_matrix(&mapped, k);
    (lhs - rhs).amax()
}

/// Normalized error modulo Pascal transform, with the optimal transform.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PneResult {
    #[serde(serialize_with = "numfmt::ser_f64")]
    pub value: f64,
    #[serde(serialize_with = "numfmt::ser_f64")]
    pub t0_opt: f64,
    #[serde(serialize_with = "numfmt::ser_f64")]
    pub t1_opt: f64,
}

impl PneResult {
    pub fn transform(&self) -> Option<PascalTransform> {
        PascalTransform::new(self.t0_opt, self.t1_opt).ok()
    }
}

/// `min_{t0,t1} |x_true - (t0 + t1 x_hat)|_2 / (N T)`.
pub fn pne(x_hat: &SampleLocations, x_true: &SampleLocations, period: f64) -> Result<PneResult> {
    let n = x_true.len();
    if x_hat.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "estimate has {} locations, truth has {n}",
            x_hat.len()
        )));
    }
    if n < 2 {
        return Err(Error::InvalidInput("PNE needs at least two locations".into()));
    }
    if !(period > 0.0 && period.is_finite()) {
        return Err(Error::InvalidInput("sampling period must be positive".into()));
    }
    let first = x_hat.as_slice()[0];
    if x_hat.as_slice().iter().all(|&v| v == first) {
        return Err(Error::DegenerateEstimate);
    }
    // QR of [1 | x_hat] by one Gram-Schmidt step: the second column minus
    // its mean is orthogonal to the first. Identical inputs then give
    // t1 = 1 and t0 = 0 exactly.
    let nf = n as f64;
    let mean_hat = x_hat.as_slice().iter().sum::<f64>() / nf;
    let mean_true = x_true.as_slice().iter().sum::<f64>() / nf;
    let centered: Vec<f64> = x_hat.as_slice().iter().map(|v| v - mean_hat).collect();
    let ss: f64 = centered.iter().map(|c| c * c).sum();
    let scale = x_hat.as_slice().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if ss.sqrt() <= linalg::rank_tolerance(n, 2, scale * nf.sqrt()) {
        return Err(Error::DegenerateEstimate);
    }
    let cross: f64 = centered.iter().zip(x_true.as_slice()).map(|(c, x)| c * (x - mean_true)).sum();
    let t1 = cross / ss;
    let t0 = mean_true - t1 * mean_hat;
    let resid: f64 = x_true
        .as_slice()
        .iter()
        .zip(x_hat.as_slice())
        .map(|(&x, &xh)| (x - (t0 + t1 * xh)).powi(2))
        .sum::<f64>()
        .sqrt();
    Ok(PneResult { value: resid / (n as f64 * period), t0_opt: t0, t1_opt: t1 })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn locs(v: &[f64]) -> SampleLocations {
        SampleLocations::new(v.to_vec()).unwrap()
    }

    #[test]
    fn zero_scale_rejected() {
        assert!(PascalTransform::new(5.0, 0.0).is_err());
        assert!(PascalTransform::new(f64::NAN, 1.0).is_err());
    }

    #[test]
    fn identity_transform_gives_identity_matrix() {
        for k in 1..7 {
            assert_eq!(pascal_matrix(&PascalTransform::IDENTITY, k), DMatrix::identity(k, k));
        }
    }

    #[test]
    fn hand_expanded_k3() {
        // (1 + 2x)^0 = 1, (1 + 2x)^1 = 1 + 2x, (1 + 2x)^2 = 1 + 4x + 4x^2.
        let m = pascal_matrix(&PascalTransform::new(1.0, 2.0).unwrap(), 3);
        let expected =
            DMatrix::from_row_slice(3, 3, &[1.0, 1.0, 1.0, 0.0, 2.0, 4.0, 0.0, 0.0, 4.0]);
        assert_eq!(m, expected);
    }

    #[test]
    fn k4_matches_displayed_pattern() {
        let (a, b) = (0.7, -1.3);
        let m = pascal_matrix(&PascalTransform::new(a, b).unwrap(), 4);
        #[rustfmt::skip]
        let expected = DMatrix::from_row_slice(4, 4, &[
            1.0, a,   a * a,         a * a * a,
            0.0, b,   2.0 * a * b,   3.0 * a * a * b,
            0.0, 0.0, b * b,         3.0 * a * b * b,
            0.0, 0.0, 0.0,           b * b * b,
        ]);
        assert!((m - expected).amax() < 1e-14);
    }

    #[test]
    fn apply_examples() {
        let x = locs(&[0.0, 1.0]);
        assert_eq!(apply_transform(&PascalTransform::IDENTITY, &x), x);
        let y = apply_transform(&PascalTransform::new(1.0, 2.0).unwrap(), &x);
        assert_eq!(y.as_slice(), &[1.0, 3.0]);
    }

    #[test]
    fn identity_residual_exact() {
        let x = locs(&[-2.0, 0.3, 1.9, 2.7]);
        assert_eq!(verify_pascal_identity(&x, &PascalTransform::IDENTITY, 5), 0.0);
    }

    #[test]
    fn identity_residual_small_on_grid() {
        let x = SampleLocations::linspace(-3.0, 3.0, 30).unwrap();
        let t = PascalTransform::new(0.7, -1.3).unwrap();
        assert!(verify_pascal_identity(&x, &t, 4) <= 1e-10);
    }

    #[test]
    fn perturbed_matrix_breaks_identity() {
        let x = SampleLocations::linspace(-3.0, 3.0, 30).unwrap();
        let t = PascalTransform::new(0.7, -1.3).unwrap();
        let mut m = pascal_matrix(&t, 4);
        m[(2, 3)] = 0.0;
        // Column 3 loses 3 t0 t1^2 x^2, i.e. about 3.5 at |x| = 3.
        assert!(verify_with_matrix(&x, &t, &m) > 1.0);
    }

    #[test]
    fn composition_and_inverse() {
        let t = PascalTransform::new(0.5, 2.0).unwrap();
        let s = PascalTransform::new(-1.0, 0.25).unwrap();
        let prod = pascal_matrix(&t, 5) * pascal_matrix(&s, 5);
        assert!((prod - pascal_matrix(&t.then(&s), 5)).amax() < 1e-12);
        let id = t.then(&t.inverse());
        assert!((id.shift()).abs() < 1e-15 && (id.scale() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn pne_of_truth_is_zero() {
        let x = locs(&[0.0, 0.4, 1.1, 2.0]);
        let r = pne(&x, &x, 1.0).unwrap();
        assert!(r.value < 1e-15);
        assert!(r.t0_opt.abs() < 1e-14 && (r.t1_opt - 1.0).abs() < 1e-14);
    }

    #[test]
    fn pne_of_affine_preimage() {
        let x = locs(&[-1.0, 0.5, 2.0, 3.5]);
        let xh = locs(&x.as_slice().iter().map(|v| (v - 5.0) / 2.0).collect::<Vec<_>>());
        let r = pne(&xh, &x, 0.5).unwrap();
        assert!(r.value < 1e-14);
        assert!((r.t0_opt - 5.0).abs() < 1e-12 && (r.t1_opt - 2.0).abs() < 1e-12);
    }

    #[test]
    fn pne_matches_closed_form_two_by_two() {
        // Normal equations for design [1 | xh], xh = [0, 1, 1], target [0, 1, 2]:
        // [[3, 2], [2, 2]] t = [3, 3]  =>  t0 = 0, t1 = 1.5; residual [0, -0.5, 0.5].
        let r = pne(&locs(&[0.0, 1.0, 1.0]), &locs(&[0.0, 1.0, 2.0]), 1.0).unwrap();
        assert!(r.t0_opt.abs() < 1e-14);
        assert!((r.t1_opt - 1.5).abs() < 1e-14);
        assert!((r.value - 0.5f64.sqrt() / 3.0).abs() < 1e-15);
    }

    #[test]
    fn pne_errors() {
        let x = locs(&[0.0, 1.0, 2.0]);
        assert_eq!(pne(&locs(&[1.0, 1.0, 1.0]), &x, 1.0), Err(Error::DegenerateEstimate));
        assert!(matches!(pne(&locs(&[1.0, 2.0]), &x, 1.0), Err(Error::ShapeMismatch(_))));
        assert!(pne(&locs(&[1.0]), &locs(&[1.0]), 1.0).is_err());
        assert!(pne(&x, &x, 0.0).is_err());
    }
}
