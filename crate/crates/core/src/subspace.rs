//! Subspace fitting by sequential convex programming.
//!
//! The leading `K` left singular vectors `U` of `Y` span the same space as
//! `V(x_true)`. With `P = I - U U^T`, the locations minimize
//!
//! ```text
//! f(x) = 1/2 |P V(x)|_F^2
//! ```
//!
//! whose zero set is exactly the affine orbit `t0 + t1 x_true`. Each SCP
//! iteration minimizes the first-order model of `f` over the ball
//! `|x - x_r|_2^2 <= rho(r)` (closed form: a normalized gradient step to the
//! boundary) and then picks the best convex combination of the old iterate
//! and the step on a grid of weights, so `f` never increases.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
#[cfg(feature = "parallel")]
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::vandermonde::{
    differentiation_matrix, vandermonde_matrix, CoefficientMatrix, ObservationMatrix,
    SampleLocations,
};

/// Orthonormal basis of the signal subspace and the projector onto its complement.
#[derive(Debug, Clone)]
pub struct SignalSubspace {
    u: DMatrix<f64>,
    p: DMatrix<f64>,
}

impl SignalSubspace {
    /// `N x K` basis with orthonormal columns.
    pub fn basis(&self) -> &DMatrix<f64> {
        &self.u
    }

    /// `N x N` projector `I - U U^T`.
    pub fn projector(&self) -> &DMatrix<f64> {
        &self.p
    }

    /// `P V(x)` as `V - U (U^T V)`, in `O(N K^2)`.
    fn project(&self, v: &DMatrix<f64>) -> DMatrix<f64> {
        v - &self.u * (self.u.transpose() * v)
    }

    /// Same value as [`objective`] without touching the `N x N` projector.
    pub fn objective(&self, x: &[f64], k: usize) -> f64 {
        0.5 * self.project(&vandermonde_matrix(x, k)).norm_squared()
    }

    /// Same value as [`gradient`] without touching the `N x N` projector.
    pub fn gradient(&self, x: &[f64], k: usize) -> DVector<f64> {
        let v = vandermonde_matrix(x, k);
        let pv = self.project(&v);
        let vd = v * differentiation_matrix(k);
        DVector::from_fn(x.len(), |n, _| pv.row(n).dot(&vd.row(n)))
    }
}

/// Leading `K` left singular vectors of `Y` and the complementary projector.
///
/// Requires `N > K` and `sigma_K` above the rank tolerance.
pub fn signal_subspace(y: &ObservationMatrix, k: usize) -> Result<SignalSubspace> {
    let n = y.rows();
    if k == 0 {
        return Err(Error::InvalidInput("K must be at least 1".into()));
    }
    if n <= k {
        return Err(Error::InvalidInput(format!("need more samples than K (N = {n}, K = {k})")));
    }
    let ym = y.as_matrix();
    if ym.ncols() < k {
        return Err(Error::RankDeficient { rank: ym.ncols(), required: k });
    }
    let svd = ym.clone().svd(true, false);
    let u_full = svd.u.expect("requested U");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let smax = svd.singular_values[order[0]];
    let tol = linalg::rank_tolerance(ym.nrows(), ym.ncols(), smax);
    let rank = order
        .iter()
        .filter(|&&i| svd.singular_values[i] > tol && svd.singular_values[i] > 0.0)
        .count();
    if rank < k {
        return Err(Error::RankDeficient { rank, required: k });
    }
    let u = DMatrix::from_fn(n, k, |i, j| u_full[(i, order[j])]);
    let mut p = -(&u * u.transpose());
    for i in 0..n {
        p[(i, i)] += 1.0;
    }
    // Enforce exact symmetry.
    for i in 0..n {
        for j in i + 1..n {
            let s = 0.5 * (p[(i, j)] + p[(j, i)]);
            p[(i, j)] = s;
            p[(j, i)] = s;
        }
    }
    Ok(SignalSubspace { u, p })
}

/// `f(x) = 1/2 |P V(x)|_F^2`.
pub fn objective(p: &DMatrix<f64>, x: &[f64], k: usize) -> f64 {
    0.5 * (p * vandermonde_matrix(x, k)).norm_squared()
}

/// Gradient of [`objective`].
///
/// Entry `n` is the inner product of row `n` of `P V(x)` with row `n` of
/// `V(x) D`, i.e. the diagonal of `P^T P V D^T V^T` without the `N x N` product.
pub fn gradient(p: &DMatrix<f64>, x: &[f64], k: usize) -> DVector<f64> {
    let v = vandermonde_matrix(x, k);
    let pv = p * &v;
    let vd = v * differentiation_matrix(k);
    DVector::from_fn(x.len(), |n, _| pv.row(n).dot(&vd.row(n)))
}

/// Minimizer of the linearization `f(x_r) + g^T (x - x_r)` over the ball
/// `|x - x_r|_2^2 <= rho`: a step of length `sqrt(rho)` against `g`.
pub fn scp_step(gradient: &DVector<f64>, x_r: &[f64], rho: f64) -> Vec<f64> {
    let gnorm = gradient.norm();
    if gnorm == 0.0 || !gnorm.is_finite() {
        return x_r.to_vec();
    }
    let scale = rho.sqrt() / gnorm;
    x_r.iter().zip(gradient.iter()).map(|(&x, &g)| x - scale * g).collect()
}

/// Result of a grid line search between the current iterate and a trial point.
#[derive(Debug, Clone, PartialEq)]
pub struct LineSearchOutcome {
    /// Weight on the current iterate: `x_next = alpha x_r + (1 - alpha) x_hat`.
    pub alpha: f64,
    pub x_next: Vec<f64>,
    pub value: f64,
}

/// Evaluates `func` at `alpha = 1, 0` and `alpha = i / (points + 1)` for
/// `i = 1..=points`, keeping the lowest value. `alpha = 1` is `x_r`, so the
/// returned value never exceeds `func(x_r)`; ties keep the earlier candidate.
pub fn line_search_by<F>(func: F, x_r: &[f64], x_hat: &[f64], points: usize) -> LineSearchOutcome
where
    F: Fn(&[f64]) -> f64,
{
    let mut best = LineSearchOutcome { alpha: 1.0, x_next: x_r.to_vec(), value: func(x_r) };
    let mut trial = vec![0.0; x_r.len()];
    let denom = (points + 1) as f64;
    let alphas = std::iter::once(0.0).chain((1..=points).map(|i| i as f64 / denom));
    for alpha in alphas {
        for ((t, &a), &b) in trial.iter_mut().zip(x_r).zip(x_hat) {
            *t = alpha * a + (1.0 - alpha) * b;
        }
        let value = func(&trial);
        if value < best.value {
            best = LineSearchOutcome { alpha, x_next: trial.clone(), value };
        }
    }
    best
}

/// [`line_search_by`] on the subspace objective.
pub fn line_search(
    p: &DMatrix<f64>,
    x_r: &[f64],
    x_hat: &[f64],
    k: usize,
    points: usize,
) -> LineSearchOutcome {
    line_search_by(|x| objective(p, x, k), x_r, x_hat, points)
}

/// Trust-region radius schedule `rho(r)`, a squared 2-norm budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RhoSchedule {
    /// `max(initial * decay^r, floor)`.
    Geometric { initial: f64, decay: f64, floor: f64 },
    Constant { rho: f64 },
}

impl RhoSchedule {
    /// Default schedule for sampling period `period`: `(period / 2)^2 * 0.99^r`,
    /// floored at `1e-12`.
    pub fn for_period(period: f64) -> Self {
        RhoSchedule::Geometric { initial: (0.5 * period).powi(2), decay: 0.99, floor: 1e-12 }
    }

    pub fn at(&self, r: usize) -> f64 {
        match *self {
            RhoSchedule::Geometric { initial, decay, floor } => {
                let exp = i32::try_from(r).unwrap_or(i32::MAX);
                (initial * decay.powi(exp)).max(floor)
            }
            RhoSchedule::Constant { rho } => rho,
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            RhoSchedule::Geometric { initial, decay, floor } => {
                initial > 0.0 && floor > 0.0 && decay > 0.0 && initial.is_finite()
            }
            RhoSchedule::Constant { rho } => rho > 0.0 && rho.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput("trust radius schedule must stay positive".into()))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScpConfig {
    pub rho: RhoSchedule,
    pub max_iterations: usize,
    /// Stop once `f <= objective_tolerance * sigma_min(V(x))^2`.
    pub objective_tolerance: f64,
    /// Stop once an accepted step is shorter than this (2-norm).
    pub step_tolerance: f64,
    /// Interior grid points of the line search; at least 2.
    pub line_search_points: usize,
    /// Extra runs from perturbed starting points.
    pub num_restarts: usize,
    /// Half-width of the uniform restart perturbation, in sampling periods.
    pub restart_scale: f64,
    /// Sampling period used to scale restart perturbations.
    pub period: f64,
    pub restart_seed: u64,
}

impl ScpConfig {
    pub fn for_period(period: f64) -> Self {
        Self {
            rho: RhoSchedule::for_period(period),
            max_iterations: 5000,
            objective_tolerance: 1e-14,
            step_tolerance: 1e-10,
            line_search_points: 32,
            num_restarts: 0,
            restart_scale: 0.5,
            period,
            restart_seed: 0,
        }
    }

    fn validate(&self) -> Result<()> {
        self.rho.validate()?;
        if self.line_search_points < 2 {
            return Err(Error::InvalidInput("line search needs at least 2 points".into()));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidInput("max_iterations must be positive".into()));
        }
        if self.objective_tolerance < 0.0 || self.step_tolerance < 0.0 {
            return Err(Error::InvalidInput("tolerances must be nonnegative".into()));
        }
        Ok(())
    }
}

impl Default for ScpConfig {
    fn default() -> Self {
        Self::for_period(1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    ConvergedObjective,
    ConvergedStep,
    MaxIterations,
    /// Produced by the grid search rather than an iterative solver.
    ExhaustiveSearch,
}

impl Termination {
    pub fn as_str(&self) -> &'static str {
        match self {
            Termination::ConvergedObjective => "converged-objective",
            Termination::ConvergedStep => "converged-step",
            Termination::MaxIterations => "max-iterations",
            Termination::ExhaustiveSearch => "exhaustive-search",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverReport {
    pub x_hat: SampleLocations,
    pub w_hat: CoefficientMatrix,
    /// Objective after each iteration, starting with the value at `x0`.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub termination: Termination,
    pub restart_index: usize,
}

impl SolverReport {
    pub fn final_objective(&self) -> f64 {
        *self.objective_trace.last().expect("trace holds the starting value")
    }
}

/// Subspace-fitting SCP from `x0`, with optional perturbed restarts.
pub fn solve_subspace(
    y: &ObservationMatrix,
    x0: &SampleLocations,
    k: usize,
    cfg: &ScpConfig,
) -> Result<SolverReport> {
    cfg.validate()?;
    if x0.len() != y.rows() {
        return Err(Error::ShapeMismatch(format!(
            "x0 has {} entries, Y has {} rows",
            x0.len(),
            y.rows()
        )));
    }
    let subspace = signal_subspace(y, k)?;

    let mut starts = vec![x0.as_slice().to_vec()];
    if cfg.num_restarts > 0 {
        let half = cfg.restart_scale * cfg.period;
        for r in 1..=cfg.num_restarts {
            let mut rng = ChaCha20Rng::seed_from_u64(cfg.restart_seed);
            rng.set_stream(r as u64);
            starts.push(
                x0.as_slice()
                    .iter()
                    .map(|&v| if half > 0.0 { v + rng.random_range(-half..=half) } else { v })
                    .collect(),
            );
        }
    }

    let run = |(i, start): (usize, &Vec<f64>)| {
        let (x, trace, iterations, termination) = run_scp(&subspace, start, k, cfg);
        (i, x, trace, iterations, termination)
    };
    #[cfg(feature = "parallel")]
    let runs: Vec<_> = starts.par_iter().enumerate().map(run).collect();
    #[cfg(not(feature = "parallel"))]
    let runs: Vec<_> = starts.iter().enumerate().map(run).collect();

    // Lowest final objective wins; restart index breaks ties.
    let (restart_index, x, trace, iterations, termination) = runs
        .into_iter()
        .min_by(|a, b| {
            let fa = *a.2.last().unwrap();
            let fb = *b.2.last().unwrap();
            fa.total_cmp(&fb).then(a.0.cmp(&b.0))
        })
        .expect("at least one start");

    let x_hat = SampleLocations::new(x)?;
    let w_hat = recover_coefficients(&x_hat, y, k)?;
    Ok(SolverReport { x_hat, w_hat, objective_trace: trace, iterations, termination, restart_index })
}

/// `W = V(x)^+ Y`.
pub fn recover_coefficients(
    x: &SampleLocations,
    y: &ObservationMatrix,
    k: usize,
) -> Result<CoefficientMatrix> {
    let v = vandermonde_matrix(x.as_slice(), k);
    CoefficientMatrix::new(linalg::pinv_solve(&v, y.as_matrix()))
}

fn run_scp(
    s: &SignalSubspace,
    x0: &[f64],
    k: usize,
    cfg: &ScpConfig,
) -> (Vec<f64>, Vec<f64>, usize, Termination) {
    let mut x = x0.to_vec();
    let mut f = s.objective(&x, k);
    let mut trace = vec![f];
    if f == 0.0 || objective_converged(f, &x, k, cfg) {
        return (x, trace, 0, Termination::ConvergedObjective);
    }
    for r in 0..cfg.max_iterations {
        let rho = cfg.rho.at(r);
        let g = s.gradient(&x, k);
        let trial = scp_step(&g, &x, rho);
        let next = line_search_by(|z| s.objective(z, k), &x, &trial, cfg.line_search_points);
        let step: f64 =
            x.iter().zip(&next.x_next).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        x = next.x_next;
        f = next.value;
        trace.push(f);
        if objective_converged(f, &x, k, cfg) {
            return (x, trace, r + 1, Termination::ConvergedObjective);
        }
        if step < cfg.step_tolerance && step_tolerance_reached(rho, cfg) {
            return (x, trace, r + 1, Termination::ConvergedStep);
        }
    }
    (x, trace, cfg.max_iterations, Termination::MaxIterations)
}

/// `f(x) <= tol * sigma_min(V(x))^2`.
///
/// `f` alone is not scale aware: shrinking `x` towards a single point drives
/// it to zero. Since `|P Q|_F^2 <= 2 f / sigma_min(V)^2` for an orthonormal
/// basis `Q` of `V(x)`, this test bounds the angle between `range(V(x))`
/// and the signal subspace instead.
fn objective_converged(f: f64, x: &[f64], k: usize, cfg: &ScpConfig) -> bool {
    let s = linalg::singular_values(&vandermonde_matrix(x, k));
    let smin = s.last().copied().unwrap_or(0.0);
    f <= cfg.objective_tolerance * smin * smin
}

/// A short step only counts as convergence once the trust region has reached
/// its smallest radius; a larger region may just have overshot.
fn step_tolerance_reached(rho: f64, cfg: &ScpConfig) -> bool {
    rho <= cfg.rho.at(usize::MAX)
}

/// Settings for [`alternating_minimization`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AltMinConfig {
    pub max_outer: usize,
    /// Stop once `1/2 |Y - V W|_F^2 < tolerance * |Y|_F^2`.
    pub tolerance: f64,
    pub rho: RhoSchedule,
    pub line_search_points: usize,
}

impl AltMinConfig {
    pub fn for_period(period: f64) -> Self {
        Self {
            max_outer: 5000,
            tolerance: 1e-16,
            rho: RhoSchedule::for_period(period),
            line_search_points: 32,
        }
    }
}

impl Default for AltMinConfig {
    fn default() -> Self {
        Self::for_period(1.0)
    }
}

/// `1/2 |Y - V(x) W|_F^2`.
pub fn fit_objective(y: &DMatrix<f64>, x: &[f64], w: &DMatrix<f64>) -> f64 {
    0.5 * (vandermonde_matrix(x, w.nrows()) * w - y).norm_squared()
}

/// Gradient of [`fit_objective`] in `x` with `W` fixed: entry `n` is the inner
/// product of row `n` of `V(x) W - Y` with row `n` of `V(x) D W`.
pub fn fit_gradient(y: &DMatrix<f64>, x: &[f64], w: &DMatrix<f64>) -> DVector<f64> {
    let k = w.nrows();
    let v = vandermonde_matrix(x, k);
    let resid = &v * w - y;
    let dvw = v * differentiation_matrix(k) * w;
    DVector::from_fn(x.len(), |n, _| resid.row(n).dot(&dvw.row(n)))
}

/// Baseline: alternate the exact coefficient update `W = V(x)^+ Y` with one
/// trust-region gradient step on `x` for the full fitting objective.
pub fn alternating_minimization(
    y: &ObservationMatrix,
    x0: &SampleLocations,
    k: usize,
    cfg: &AltMinConfig,
) -> Result<SolverReport> {
    let n = y.rows();
    if k == 0 {
        return Err(Error::InvalidInput("K must be at least 1".into()));
    }
    if n <= k {
        return Err(Error::InvalidInput(format!("need more samples than K (N = {n}, K = {k})")));
    }
    if x0.len() != n {
        return Err(Error::ShapeMismatch(format!("x0 has {} entries, Y has {n} rows", x0.len())));
    }
    cfg.rho.validate()?;
    if cfg.line_search_points < 2 {
        return Err(Error::InvalidInput("line search needs at least 2 points".into()));
    }
    let ym = y.as_matrix();
    let f_tol = cfg.tolerance * ym.norm_squared();
    let mut x = x0.as_slice().to_vec();
    let mut w = linalg::pinv_solve(&vandermonde_matrix(&x, k), ym);
    let mut f = fit_objective(ym, &x, &w);
    let mut trace = vec![f];
    let mut termination = Termination::MaxIterations;
    let mut iterations = cfg.max_outer;
    if f < f_tol || f == 0.0 {
        termination = Termination::ConvergedObjective;
        iterations = 0;
    } else {
        for r in 0..cfg.max_outer {
            let g = fit_gradient(ym, &x, &w);
            let trial = scp_step(&g, &x, cfg.rho.at(r));
            let next = line_search_by(|z| fit_objective(ym, z, &w), &x, &trial, cfg.line_search_points);
            x = next.x_next;
            let w_next = linalg::pinv_solve(&vandermonde_matrix(&x, k), ym);
            let f_next = fit_objective(ym, &x, &w_next);
            // The pseudoinverse is the exact minimizer; keep the old W only if
            // rounding made it marginally worse.
            if f_next <= next.value {
                w = w_next;
                f = f_next;
            } else {
                f = next.value;
            }
            trace.push(f);
            if f < f_tol {
                termination = Termination::ConvergedObjective;
                iterations = r + 1;
                break;
            }
        }
    }
    let x_hat = SampleLocations::new(x)?;
    Ok(SolverReport {
        x_hat,
        w_hat: CoefficientMatrix::new(w)?,
        objective_trace: trace,
        iterations,
        termination,
        restart_index: 0,
    })
}
