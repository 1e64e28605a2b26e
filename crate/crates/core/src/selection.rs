//! Selection sampling: choose `N` of `G` candidate locations by exhaustive search.
//!
//! With the rows of `V(grid)` restricted to a pattern, the coefficients are
//! eliminated by least squares and each pattern is scored by the squared
//! Frobenius norm of the residual projection of `Y`.

use nalgebra::DMatrix;
#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg;
use crate::vandermonde::{vandermonde_matrix, CoefficientMatrix, ObservationMatrix, SampleLocations};

/// Strictly increasing candidate locations.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateGrid(Vec<f64>);

impl CandidateGrid {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidInput("empty candidate grid".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("candidate grid has non-finite entries".into()));
        }
        if values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidInput("candidate grid must be strictly increasing".into()));
        }
        Ok(Self(values))
    }

    pub fn uniform(lo: f64, hi: f64, g: usize) -> Result<Self> {
        Self::new(SampleLocations::linspace(lo, hi, g)?.into_vec())
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
}

/// Strictly increasing grid indices; the row support of the selection matrix.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SelectionPattern(Vec<usize>);

impl SelectionPattern {
    pub fn new(indices: Vec<usize>, grid_len: usize) -> Result<Self> {
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidInput("pattern indices must be strictly increasing".into()));
        }
        if indices.last().is_some_and(|&i| i >= grid_len) {
            return Err(Error::InvalidInput("pattern index out of grid range".into()));
        }
        Ok(Self(indices))
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionResult {
    pub pattern: SelectionPattern,
    /// Squared Frobenius misfit `|Y - V_sel W_hat|_F^2`.
    pub residual: f64,
    pub w_hat: CoefficientMatrix,
    pub x_hat: SampleLocations,
}

/// Search limits and tie handling for [`exhaustive_search_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchOptions {
    /// Largest number of patterns that may be enumerated.
    pub budget: u128,
    /// Residuals within `tie_tolerance * max(1, |Y|_F^2)` of the minimum are
    /// treated as ties and resolved lexicographically.
    pub tie_tolerance: f64,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self { budget: 10_000_000, tie_tolerance: 1e-14 }
    }
}

/// Binomial coefficient, saturating at `u128::MAX`.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        // acc * (n - i) / (i + 1) stays integral at every step.
        match acc.checked_mul((n - i) as u128) {
            Some(v) => acc = v / (i as u128 + 1),
            None => return u128::MAX,
        }
    }
    acc
}

/// Residual and coefficients for one pattern.
pub fn selection_residual(
    grid: &CandidateGrid,
    pattern: &SelectionPattern,
    y: &ObservationMatrix,
    k: usize,
) -> Result<(f64, CoefficientMatrix)> {
    check_pattern_shape(grid, pattern, y, k)?;
    let mut scratch = Vec::with_capacity(pattern.len());
    let (residual, w) = residual_for(grid.as_slice(), pattern.indices(), y.as_matrix(), k, &mut scratch)?;
    Ok((residual, CoefficientMatrix::new(w)?))
}

fn check_pattern_shape(
    grid: &CandidateGrid,
    pattern: &SelectionPattern,
    y: &ObservationMatrix,
    k: usize,
) -> Result<()> {
    if k == 0 {
        return Err(Error::InvalidInput("K must be at least 1".into()));
    }
    if pattern.len() != y.rows() {
        return Err(Error::ShapeMismatch(format!(
            "pattern selects {} rows, Y has {}",
            pattern.len(),
            y.rows()
        )));
    }
    if pattern.indices().last().is_some_and(|&i| i >= grid.len()) {
        return Err(Error::InvalidInput("pattern index out of grid range".into()));
    }
    if pattern.len() < k {
        return Err(Error::RankDeficient { rank: pattern.len(), required: k });
    }
    Ok(())
}

fn residual_for(
    grid: &[f64],
    indices: &[usize],
    y: &DMatrix<f64>,
    k: usize,
    scratch: &mut Vec<f64>,
) -> Result<(f64, DMatrix<f64>)> {
    scratch.clear();
    scratch.extend(indices.iter().map(|&i| grid[i]));
    let a = vandermonde_matrix(scratch, k);
    let w = linalg::lstsq(&a, y)?;
    let residual = (y - &a * &w).norm_squared();
    Ok((residual, w))
}

/// Exhaustive search with default [`SearchOptions`].
pub fn exhaustive_search(
    grid: &CandidateGrid,
    y: &ObservationMatrix,
    k: usize,
) -> Result<SelectionResult> {
    exhaustive_search_with(grid, y, k, &SearchOptions::default())
}

/// Enumerates every `N`-subset of the grid in lexicographic order and returns
/// the first one whose residual ties the minimum.
///
/// Blocks of patterns sharing a leading index are scored independently (in
/// parallel with the `parallel` feature) and merged in block order, so the
/// result is identical to a sequential scan.
pub fn exhaustive_search_with(
    grid: &CandidateGrid,
    y: &ObservationMatrix,
    k: usize,
    opts: &SearchOptions,
) -> Result<SelectionResult> {
    let n = y.rows();
    let g = grid.len();
    if k == 0 {
        return Err(Error::InvalidInput("K must be at least 1".into()));
    }
    if n > g {
        return Err(Error::InvalidInput(format!("cannot select {n} of {g} grid points")));
    }
    if n < k {
        return Err(Error::RankDeficient { rank: n, required: k });
    }
    let patterns = binomial(g, n);
    if patterns > opts.budget {
        return Err(Error::BudgetExceeded { patterns, budget: opts.budget });
    }
    let ym = y.as_matrix();
    let tol = opts.tie_tolerance * ym.norm_squared().max(1.0);

    let first_indices: Vec<usize> = (0..=g - n).collect();
    let score = |&first: &usize| scan_block(grid.as_slice(), first, n, ym, k, tol);
    #[cfg(feature = "parallel")]
    let blocks: Vec<Result<Frontier>> = first_indices.par_iter().map(score).collect();
    #[cfg(not(feature = "parallel"))]
    let blocks: Vec<Result<Frontier>> = first_indices.iter().map(score).collect();

    let blocks = blocks.into_iter().collect::<Result<Vec<_>>>()?;
    let min = blocks.iter().map(|b| b.min).fold(f64::INFINITY, f64::min);
    let (indices, residual) = blocks
        .into_iter()
        .flat_map(|b| b.entries)
        .find(|(_, r)| *r <= min + tol)
        .expect("at least one pattern was scored");

    let mut scratch = Vec::new();
    let (_, w) = residual_for(grid.as_slice(), &indices, ym, k, &mut scratch)?;
    let x_hat = SampleLocations::new(indices.iter().map(|&i| grid.as_slice()[i]).collect())?;
    Ok(SelectionResult {
        pattern: SelectionPattern(indices),
        residual,
        w_hat: CoefficientMatrix::new(w)?,
        x_hat,
    })
}

/// Prefix minima of one block that may still tie the final minimum.
///
/// Entries are in enumeration order with strictly decreasing residuals; the
/// first pattern within tolerance of any later minimum is always among them.
struct Frontier {
    min: f64,
    entries: Vec<(Vec<usize>, f64)>,
}

fn scan_block(
    grid: &[f64],
    first: usize,
    n: usize,
    y: &DMatrix<f64>,
    k: usize,
    tol: f64,
) -> Result<Frontier> {
    let g = grid.len();
    let mut idx: Vec<usize> = std::iter::once(first).chain(first + 1..first + n).collect();
    let mut frontier = Frontier { min: f64::INFINITY, entries: Vec::new() };
    let mut scratch = Vec::with_capacity(n);
    loop {
        let (r, _) = residual_for(grid, &idx, y, k, &mut scratch)?;
        if r < frontier.min {
            frontier.min = r;
            let cutoff = r + tol;
            frontier.entries.retain(|(_, e)| *e <= cutoff);
        }
        let improves = frontier.entries.last().is_none_or(|(_, last)| r < *last);
        if improves && r <= frontier.min + tol {
            frontier.entries.push((idx.clone(), r));
        }
        if !next_combination_tail(&mut idx, g) {
            break;
        }
    }
    Ok(frontier)
}

/// Advances `idx[1..]` to the next lexicographic combination, keeping `idx[0]`.
fn next_combination_tail(idx: &mut [usize], g: usize) -> bool {
    let n = idx.len();
    let mut i = n;
    while i > 1 {
        i -= 1;
        if idx[i] < g - n + i {
            idx[i] += 1;
            for j in i + 1..n {
                idx[j] = idx[j - 1] + 1;
            }
            return true;
        }
    }
    false
}
