//! Blind polynomial regression.
//!
//! Given only `Y = V(x) W`, where `V(x)` is the `N x K` Vandermonde matrix of
//! unknown sampling locations `x` and `W` holds the coefficients of `L`
//! polynomials, recover `x` (up to an affine map) and `W`.
//!
//! - [`vandermonde`]: matrix construction, least squares, derivatives.
//! - [`ambiguity`]: Pascal transforms and the normalized error modulo them.
//! - [`selection`]: exhaustive selection over a candidate grid.
//! - [`subspace`]: subspace fitting solved by sequential convex programming,
//!   plus an alternating-minimization baseline.
//! - [`jitter`]: the clock-jitter scenario generator.
//! - [`harness`]: Monte-Carlo sweeps, result tables and reconstructions.
//!
//! Columns of `V` and rows of `W` use ascending degree: `V[n][k] = x[n]^k`.

pub mod ambiguity;
pub mod error;
pub mod fmt;
pub mod harness;
pub mod jitter;
pub mod linalg;
pub mod selection;
pub mod subspace;
pub mod vandermonde;

pub use ambiguity::{apply_transform, pascal_matrix, pne, verify_pascal_identity, PascalTransform, PneResult};
pub use error::{Error, Result};
pub use jitter::{generate, JitterInstance, JitterScenario};
pub use selection::{exhaustive_search, CandidateGrid, SelectionPattern, SelectionResult};
pub use subspace::{solve_subspace, ScpConfig, SolverReport, Termination};
pub use vandermonde::{
    build_vandermonde, CoefficientMatrix, ObservationMatrix, SampleLocations, Vandermonde,
};
