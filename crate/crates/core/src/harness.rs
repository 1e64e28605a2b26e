//! Monte-Carlo jitter-correction experiments.
//!
//! A sweep visits every `(K, L, delta)` cell with `L >= K`, draws `runs`
//! instances per cell (run `i` always uses seed `derive_seed(master, i)`),
//! solves each from the uniform grid and scores the estimate with PNE.
//! Failures are recorded per run and never abort the sweep.

use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize, Serializer};

use crate::ambiguity::{pne, PneResult};
use crate::error::{Error, Result};
use crate::fmt::{self as numfmt, format_f64};
use crate::jitter::{derive_seed, generate, JitterInstance, JitterScenario};
use crate::linalg;
use crate::selection::{exhaustive_search_with, CandidateGrid, SearchOptions};
use crate::subspace::{
    alternating_minimization, solve_subspace, AltMinConfig, RhoSchedule, ScpConfig, SolverReport,
    Termination,
};
use crate::vandermonde::{evaluate_polynomials, vandermonde_matrix, SampleLocations};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverKind {
    SubspaceScp,
    SelectionExhaustive,
    AlternatingBaseline,
}

impl SolverKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            SolverKind::SubspaceScp => "subspace-scp",
            SolverKind::SelectionExhaustive => "selection-exhaustive",
            SolverKind::AlternatingBaseline => "alternating-baseline",
        }
    }
}

impl std::str::FromStr for SolverKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "subspace-scp" => Ok(SolverKind::SubspaceScp),
            "selection-exhaustive" => Ok(SolverKind::SelectionExhaustive),
            "alternating-baseline" => Ok(SolverKind::AlternatingBaseline),
            other => Err(Error::InvalidInput(format!("unknown solver {other:?}"))),
        }
    }
}

/// Solver settings expressed relative to the sampling period `T` of each
/// scenario, so one configuration serves every cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverSettings {
    /// Initial trust radius in periods; `rho(0) = (radius * T)^2`.
    pub initial_radius_periods: f64,
    pub rho_decay: f64,
    pub rho_floor: f64,
    pub max_iterations: usize,
    pub objective_tolerance: f64,
    pub step_tolerance: f64,
    pub line_search_points: usize,
    pub num_restarts: usize,
    pub restart_scale: f64,
    /// Candidate grid size for the selection solver.
    pub grid_size: usize,
    pub search_budget: u128,
}

impl Default for SolverSettings {
    fn default() -> Self {
        let scp = ScpConfig::default();
        Self {
            initial_radius_periods: 0.5,
            rho_decay: 0.99,
            rho_floor: 1e-12,
            max_iterations: scp.max_iterations,
            objective_tolerance: scp.objective_tolerance,
            step_tolerance: scp.step_tolerance,
            line_search_points: scp.line_search_points,
            num_restarts: scp.num_restarts,
            restart_scale: scp.restart_scale,
            grid_size: 0,
            search_budget: SearchOptions::default().budget,
        }
    }
}

impl SolverSettings {
    fn rho(&self, period: f64) -> RhoSchedule {
        RhoSchedule::Geometric {
            initial: (self.initial_radius_periods * period).powi(2),
            decay: self.rho_decay,
            floor: self.rho_floor,
        }
    }

    pub fn scp_config(&self, period: f64, seed: u64) -> ScpConfig {
        ScpConfig {
            rho: self.rho(period),
            max_iterations: self.max_iterations,
            objective_tolerance: self.objective_tolerance,
            step_tolerance: self.step_tolerance,
            line_search_points: self.line_search_points,
            num_restarts: self.num_restarts,
            restart_scale: self.restart_scale,
            period,
            restart_seed: seed,
        }
    }

    pub fn alt_config(&self, period: f64) -> AltMinConfig {
        AltMinConfig {
            max_outer: self.max_iterations,
            tolerance: self.objective_tolerance,
            rho: self.rho(period),
            line_search_points: self.line_search_points,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    #[serde(rename = "K")]
    pub ks: Vec<usize>,
    #[serde(rename = "L")]
    pub ls: Vec<usize>,
    #[serde(rename = "delta")]
    pub deltas: Vec<f64>,
    #[serde(rename = "N")]
    pub n: usize,
    pub domain: [f64; 2],
    pub runs: usize,
    pub solver: SolverKind,
    pub settings: SolverSettings,
    pub master_seed: u64,
    pub output_dir: Option<String>,
    /// Worker threads; 0 picks the default.
    pub jobs: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            ks: vec![3],
            ls: vec![3],
            deltas: vec![5.0],
            n: 30,
            domain: [-3.0, 3.0],
            runs: 100,
            solver: SolverKind::SubspaceScp,
            settings: SolverSettings::default(),
            master_seed: 0,
            output_dir: None,
            jobs: 0,
        }
    }
}

impl ExperimentConfig {
    /// `(K, L)` pairs with `L >= K`, in list order.
    pub fn cells(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for &k in &self.ks {
            for &l in &self.ls {
                if l < k {
                    continue;
                }
                for &d in &self.deltas {
                    out.push((k, l, d));
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        if self.runs == 0 {
            return Err(Error::InvalidInput("runs must be at least 1".into()));
        }
        if self.cells().is_empty() {
            return Err(Error::InvalidInput("no (K, L, delta) cell with L >= K".into()));
        }
        for (k, l, d) in self.cells() {
            self.scenario(k, l, d, 0).validate()?;
        }
        Ok(())
    }

    pub fn scenario(&self, k: usize, l: usize, delta: f64, run: usize) -> JitterScenario {
        JitterScenario {
            n: self.n,
            domain_lo: self.domain[0],
            domain_hi: self.domain[1],
            delta,
            k,
            l,
            seed: derive_seed(self.master_seed, run as u64),
        }
    }
}

/// One row of the results table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecord {
    pub run: usize,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "L")]
    pub l: usize,
    pub delta: f64,
    pub pne: f64,
    pub t0: f64,
    pub t1: f64,
    pub objective: f64,
    pub iterations: usize,
    /// Termination reason, or `error:<code>` for a failed run.
    pub termination: String,
    pub wall_s: f64,
}

impl RunRecord {
    pub fn failed(&self) -> bool {
        self.termination.starts_with("error:")
    }
}

/// Mean and median PNE of one cell over its successful runs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellSummary {
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "L")]
    pub l: usize,
    pub delta: f64,
    pub runs: usize,
    pub failures: usize,
    #[serde(serialize_with = "ser_maybe_nonfinite")]
    pub mean_pne: f64,
    #[serde(serialize_with = "ser_maybe_nonfinite")]
    pub median_pne: f64,
    #[serde(serialize_with = "ser_maybe_nonfinite")]
    pub mean_db: f64,
    #[serde(serialize_with = "ser_maybe_nonfinite")]
    pub median_db: f64,
}

fn ser_maybe_nonfinite<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        numfmt::ser_f64(v, s)
    } else {
        s.serialize_str(&format_f64(*v))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub records: Vec<RunRecord>,
    pub summary: Vec<CellSummary>,
}

/// `20 log10(pne)`; zero maps to negative infinity.
pub fn to_db(pne: f64) -> f64 {
    20.0 * pne.log10()
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// Solves one instance from its uniform grid with the chosen solver.
pub fn solve_instance(
    instance: &JitterInstance,
    solver: SolverKind,
    settings: &SolverSettings,
) -> Result<SolverReport> {
    let k = instance.scenario.k;
    let period = instance.period();
    let x0 = &instance.uniform_locations;
    match solver {
        SolverKind::SubspaceScp => {
            let cfg = settings.scp_config(period, instance.scenario.seed);
            solve_subspace(&instance.y, x0, k, &cfg)
        }
        SolverKind::AlternatingBaseline => {
            alternating_minimization(&instance.y, x0, k, &settings.alt_config(period))
        }
        SolverKind::SelectionExhaustive => {
            let s = &instance.scenario;
            let g = if settings.grid_size == 0 { 2 * s.n } else { settings.grid_size };
            let margin = s.jitter_sigma();
            let grid = CandidateGrid::uniform(s.domain_lo - margin, s.domain_hi + margin, g)?;
            let opts = SearchOptions { budget: settings.search_budget, ..Default::default() };
            let r = exhaustive_search_with(&grid, &instance.y, k, &opts)?;
            Ok(SolverReport {
                x_hat: r.x_hat,
                w_hat: r.w_hat,
                objective_trace: vec![0.5 * r.residual],
                iterations: 1,
                termination: Termination::ExhaustiveSearch,
                restart_index: 0,
            })
        }
    }
}

fn run_one(cfg: &ExperimentConfig, k: usize, l: usize, delta: f64, run: usize) -> RunRecord {
    let start = Instant::now();
    let outcome = generate(&cfg.scenario(k, l, delta, run)).and_then(|inst| {
        let report = solve_instance(&inst, cfg.solver, &cfg.settings)?;
        let score = pne(&report.x_hat, &inst.true_locations, inst.period())?;
        Ok((report, score))
    });
    let wall_s = start.elapsed().as_secs_f64();
    match outcome {
        Ok((report, score)) => RunRecord {
            run,
            k,
            l,
            delta,
            pne: score.value,
            t0: score.t0_opt,
            t1: score.t1_opt,
            objective: report.final_objective(),
            iterations: report.iterations,
            termination: report.termination.as_str().to_owned(),
            wall_s,
        },
        Err(e) => RunRecord {
            run,
            k,
            l,
            delta,
            pne: f64::NAN,
            t0: f64::NAN,
            t1: f64::NAN,
            objective: f64::NAN,
            iterations: 0,
            termination: format!("error:{}", e.code()),
            wall_s,
        },
    }
}

/// Runs the full sweep. Records come back in `(cell, run)` order whatever the
/// thread count.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let tasks: Vec<(usize, usize, f64, usize)> = cfg
        .cells()
        .into_iter()
        .flat_map(|(k, l, d)| (0..cfg.runs).map(move |r| (k, l, d, r)))
        .collect();
    let records = execute(cfg, &tasks)?;
    let summary = summarize(&records);
    Ok(ExperimentOutput { records, summary })
}

#[cfg(feature = "parallel")]
fn execute(cfg: &ExperimentConfig, tasks: &[(usize, usize, f64, usize)]) -> Result<Vec<RunRecord>> {
    use rayon::prelude::*;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?;
    Ok(pool.install(|| {
        tasks.par_iter().map(|&(k, l, d, r)| run_one(cfg, k, l, d, r)).collect()
    }))
}

#[cfg(not(feature = "parallel"))]
fn execute(cfg: &ExperimentConfig, tasks: &[(usize, usize, f64, usize)]) -> Result<Vec<RunRecord>> {
    Ok(tasks.iter().map(|&(k, l, d, r)| run_one(cfg, k, l, d, r)).collect())
}

/// Per-cell aggregates, in order of first appearance.
pub fn summarize(records: &[RunRecord]) -> Vec<CellSummary> {
    let mut keys: Vec<(usize, usize, f64)> = Vec::new();
    for r in records {
        let key = (r.k, r.l, r.delta);
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    keys.into_iter()
        .map(|(k, l, delta)| {
            let cell: Vec<&RunRecord> =
                records.iter().filter(|r| r.k == k && r.l == l && r.delta == delta).collect();
            let ok: Vec<f64> = cell.iter().filter(|r| !r.failed()).map(|r| r.pne).collect();
            let mean_pne = mean(&ok);
            let median_pne = median(&ok);
            CellSummary {
                k,
                l,
                delta,
                runs: cell.len(),
                failures: cell.len() - ok.len(),
                mean_pne,
                median_pne,
                mean_db: to_db(mean_pne),
                median_db: to_db(median_pne),
            }
        })
        .collect()
}

pub const CSV_HEADER: &str = "run,K,L,delta,pne,t0,t1,objective,iters,termination,wall_s";

/// Results table; floats carry 17 significant digits.
pub fn records_to_csv(records: &[RunRecord]) -> String {
    let mut out = String::with_capacity(128 * (records.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in records {
        let row = [
            r.run.to_string(),
            r.k.to_string(),
            r.l.to_string(),
            format_f64(r.delta),
            format_f64(r.pne),
            format_f64(r.t0),
            format_f64(r.t1),
            format_f64(r.objective),
            r.iterations.to_string(),
            r.termination.clone(),
            format_f64(r.wall_s),
        ];
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn summary_to_json(summary: &[CellSummary]) -> String {
    serde_json::to_string_pretty(summary).expect("summary serializes")
}

/// Plot-ready reconstruction of one solved instance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Reconstruction {
    #[serde(serialize_with = "numfmt::ser_vec")]
    pub x_true: Vec<f64>,
    #[serde(serialize_with = "numfmt::ser_vec")]
    pub x_hat: Vec<f64>,
    /// `t0 + t1 x_hat` with the PNE-optimal transform.
    #[serde(serialize_with = "numfmt::ser_vec")]
    pub x_corrected: Vec<f64>,
    pub pne: PneResult,
    #[serde(rename = "Y", serialize_with = "numfmt::ser_rows")]
    pub y: Vec<Vec<f64>>,
    /// `V(x_hat) V(x_hat)^+ Y`.
    #[serde(rename = "Y_hat", serialize_with = "numfmt::ser_rows")]
    pub y_hat: Vec<Vec<f64>>,
    pub curves: Curves,
}

/// Original and inferred polynomials sampled on a common axis in the true
/// coordinates. Inferred curves are evaluated at `(z - t0) / t1`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Curves {
    #[serde(serialize_with = "numfmt::ser_vec")]
    pub z: Vec<f64>,
    #[serde(serialize_with = "numfmt::ser_rows")]
    pub original: Vec<Vec<f64>>,
    #[serde(serialize_with = "numfmt::ser_rows")]
    pub inferred: Vec<Vec<f64>>,
}

pub const CURVE_POINTS: usize = 200;

/// `V(x_hat) V(x_hat)^+ Y`.
pub fn reconstruct_observations(x_hat: &SampleLocations, y: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
    let v = vandermonde_matrix(x_hat.as_slice(), k);
    let w = linalg::pinv_solve(&v, y);
    v * w
}

pub fn emit_reconstruction(instance: &JitterInstance, report: &SolverReport) -> Result<Reconstruction> {
    let k = instance.scenario.k;
    let ym = instance.y.as_matrix();
    if report.x_hat.len() != ym.nrows() {
        return Err(Error::ShapeMismatch("estimate and instance sizes differ".into()));
    }
    let score = pne(&report.x_hat, &instance.true_locations, instance.period())?;
    let y_hat = reconstruct_observations(&report.x_hat, ym, k);
    let corrected: Vec<f64> =
        report.x_hat.as_slice().iter().map(|&v| score.t0_opt + score.t1_opt * v).collect();

    let (lo, hi) = instance
        .true_locations
        .as_slice()
        .iter()
        .chain(&corrected)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let z = SampleLocations::linspace(lo, hi, CURVE_POINTS)?.into_vec();
    let original = evaluate_polynomials(instance.w_true.as_matrix(), &z);
    let w_hat = linalg::pinv_solve(&vandermonde_matrix(report.x_hat.as_slice(), k), ym);
    let z_hat: Vec<f64> = z.iter().map(|&v| (v - score.t0_opt) / score.t1_opt).collect();
    let inferred = evaluate_polynomials(&w_hat, &z_hat);

    Ok(Reconstruction {
        x_true: instance.true_locations.as_slice().to_vec(),
        x_hat: report.x_hat.as_slice().to_vec(),
        x_corrected: corrected,
        pne: score,
        y: numfmt::rows_of(ym),
        y_hat: numfmt::rows_of(&y_hat),
        curves: Curves { z, original: numfmt::rows_of(&original), inferred: numfmt::rows_of(&inferred) },
    })
}

impl Reconstruction {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reconstruction serializes")
    }

    /// `|Y_hat - Y|_F / |Y|_F`.
    pub fn relative_error(&self) -> f64 {
        let (mut num, mut den) = (0.0, 0.0);
        for (a, b) in self.y_hat.iter().flatten().zip(self.y.iter().flatten()) {
            num += (a - b) * (a - b);
            den += b * b;
        }
        if den == 0.0 {
            num.sqrt()
        } else {
            (num / den).sqrt()
        }
    }
}
