//! Browser bindings for the demo page in `www/`. Every export returns a JSON
//! string; the plain `*_json` functions hold the logic so they can be tested
//! natively.

use blindpoly::ambiguity::{apply_transform, pascal_matrix, verify_pascal_identity, PascalTransform};
use blindpoly::fmt::rows_of;
use blindpoly::harness::{emit_reconstruction, solve_instance, Reconstruction, SolverKind, SolverSettings};
use blindpoly::selection::{binomial, exhaustive_search, CandidateGrid};
use blindpoly::vandermonde::{synthesize_observations, CoefficientMatrix, SampleLocations};
use blindpoly::{generate, JitterScenario};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Largest selection search the page will start.
const MAX_PATTERNS: u128 = 200_000;

#[derive(Serialize)]
struct JitterDemo {
    period: f64,
    uniform: Vec<f64>,
    termination: &'static str,
    iterations: usize,
    objective_trace: Vec<f64>,
    reconstruction: Reconstruction,
    relative_error: f64,
}

/// Draws a jitter instance, recovers it from the uniform grid and returns
/// locations, objective trace and plot curves.
pub fn jitter_demo_json(n: usize, k: usize, l: usize, delta: f64, seed: u64) -> Result<String, String> {
    let scenario = JitterScenario { n, domain_lo: -3.0, domain_hi: 3.0, delta, k, l, seed };
    let inst = generate(&scenario).map_err(|e| e.to_string())?;
    let report =
        solve_instance(&inst, SolverKind::SubspaceScp, &SolverSettings::default()).map_err(|e| e.to_string())?;
    let reconstruction = emit_reconstruction(&inst, &report).map_err(|e| e.to_string())?;
    let demo = JitterDemo {
        period: inst.period(),
        uniform: inst.uniform_locations.as_slice().to_vec(),
        termination: report.termination.as_str(),
        iterations: report.iterations,
        objective_trace: report.objective_trace.clone(),
        relative_error: reconstruction.relative_error(),
        reconstruction,
    };
    serde_json::to_string(&demo).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct PascalDemo {
    matrix: Vec<Vec<f64>>,
    x: Vec<f64>,
    transformed: Vec<f64>,
    identity_residual: f64,
}

/// Pascal matrix of `(t0, t1)` and the identity check on a uniform grid.
pub fn pascal_demo_json(t0: f64, t1: f64, k: usize) -> Result<String, String> {
    if !(1..=12).contains(&k) {
        return Err("K must be between 1 and 12".into());
    }
    let t = PascalTransform::new(t0, t1).map_err(|e| e.to_string())?;
    let x = SampleLocations::linspace(-1.0, 1.0, 9).map_err(|e| e.to_string())?;
    let demo = PascalDemo {
        matrix: rows_of(&pascal_matrix(&t, k)),
        transformed: apply_transform(&t, &x).into_vec(),
        identity_residual: verify_pascal_identity(&x, &t, k),
        x: x.into_vec(),
    };
    serde_json::to_string(&demo).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct SelectionDemo {
    grid: Vec<f64>,
    planted: Vec<usize>,
    found: Vec<usize>,
    residual: f64,
    patterns: u128,
}

/// Plants `n` of `g` uniform grid points under random polynomials, then
/// recovers them by exhaustive search.
pub fn selection_demo_json(g: usize, n: usize, k: usize, seed: u64) -> Result<String, String> {
    if n == 0 || n > g || g < 2 {
        return Err("need 1 <= N <= G and G >= 2".into());
    }
    let patterns = binomial(g, n);
    if patterns > MAX_PATTERNS {
        return Err(format!("C({g}, {n}) = {patterns} patterns is too many for the page"));
    }
    let grid = SampleLocations::linspace(-3.0, 3.0, g).map_err(|e| e.to_string())?.into_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut planted = rand::seq::index::sample(&mut rng, g, n).into_vec();
    planted.sort_unstable();
    let w = DMatrix::from_fn(k, 2, |_, _| rng.random_range(-1.0..1.0));

    let x = SampleLocations::new(planted.iter().map(|&i| grid[i]).collect()).map_err(|e| e.to_string())?;
    let w = CoefficientMatrix::new(w).map_err(|e| e.to_string())?;
    let y = synthesize_observations(&x, &w).map_err(|e| e.to_string())?;
    let cand = CandidateGrid::new(grid.clone()).map_err(|e| e.to_string())?;
    let best = exhaustive_search(&cand, &y, k).map_err(|e| e.to_string())?;
    let demo = SelectionDemo { grid, planted, found: best.pattern.indices().to_vec(), residual: best.residual, patterns };
    serde_json::to_string(&demo).map_err(|e| e.to_string())
}

#[wasm_bindgen]
pub fn jitter_demo(n: usize, k: usize, l: usize, delta: f64, seed: u32) -> Result<String, JsError> {
    jitter_demo_json(n, k, l, delta, seed.into()).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn pascal_demo(t0: f64, t1: f64, k: usize) -> Result<String, JsError> {
    pascal_demo_json(t0, t1, k).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn selection_demo(g: usize, n: usize, k: usize, seed: u32) -> Result<String, JsError> {
    selection_demo_json(g, n, k, seed.into()).map_err(|e| JsError::new(&e))
}
