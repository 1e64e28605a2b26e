//! `blindpoly`: jitter-correction sweeps, single-instance solves, fixture
//! generation and PNE scoring.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use blindpoly::harness::{
    emit_reconstruction, records_to_csv, run_experiment, solve_instance, summary_to_json,
    ExperimentConfig, SolverKind,
};
use blindpoly::vandermonde::condition_estimate;
use blindpoly::{build_vandermonde, generate, pne, JitterInstance, JitterScenario, SampleLocations};
use clap::{Parser, Subcommand};
use serde_json::Value;

const SEED_ENV: &str = "BLINDPOLY_SEED";

/// Condition numbers above this draw a warning on `solve`.
const CONDITION_WARNING: f64 = 1e8;

#[derive(Parser)]
#[command(name = "blindpoly", version, about = "Blind polynomial regression experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte-Carlo sweep over (K, L, delta); writes results.csv and summary.json
    Sweep(SweepArgs),
    /// Solve one fixture and write the reconstruction JSON
    Solve(SolveArgs),
    /// Draw one jitter instance and write it as a fixture
    Generate(GenerateArgs),
    /// PNE of an estimate against the true locations
    Score(ScoreArgs),
}

#[derive(clap::Args)]
struct SweepArgs {
    /// JSON config; flags override its fields
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    runs: Option<usize>,
    /// Comma-separated jitter severities
    #[arg(long, value_delimiter = ',')]
    delta: Option<Vec<f64>>,
    #[arg(long = "K", value_delimiter = ',')]
    k: Option<Vec<usize>>,
    #[arg(long = "L", value_delimiter = ',')]
    l: Option<Vec<usize>>,
    #[arg(long = "N")]
    n: Option<usize>,
    /// subspace-scp, selection-exhaustive or alternating-baseline
    #[arg(long)]
    solver: Option<SolverKind>,
    /// Master seed; falls back to the config, then $BLINDPOLY_SEED, then 0
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (0 = all cores)
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(clap::Args)]
struct SolveArgs {
    /// Fixture written by `generate`
    #[arg(long)]
    fixture: PathBuf,
    #[arg(long, default_value = "subspace-scp")]
    solver: SolverKind,
    /// JSON config whose `settings` tune the solver
    #[arg(long)]
    config: Option<PathBuf>,
    /// Reconstruction JSON path; stdout when omitted
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(clap::Args)]
struct GenerateArgs {
    #[arg(long = "N", default_value_t = 30)]
    n: usize,
    #[arg(long = "K", default_value_t = 3)]
    k: usize,
    #[arg(long = "L", default_value_t = 3)]
    l: usize,
    #[arg(long, default_value_t = 5.0)]
    delta: f64,
    /// Falls back to $BLINDPOLY_SEED, then 0
    #[arg(long)]
    seed: Option<u64>,
    /// Domain as `lo,hi`
    #[arg(long, value_delimiter = ',', default_values_t = [-3.0, 3.0], allow_hyphen_values = true)]
    domain: Vec<f64>,
    /// Fixture path; stdout when omitted
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(clap::Args)]
struct ScoreArgs {
    /// JSON array, or an object with `x_hat` (reconstruction) or `x`
    #[arg(long)]
    estimate: PathBuf,
    /// JSON array, a fixture, or an object with `x_true` or `x`
    #[arg(long)]
    truth: PathBuf,
    /// Sampling period; taken from a fixture's `T` when omitted
    #[arg(long)]
    period: Option<f64>,
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Sweep(a) => sweep(a),
        Command::Solve(a) => solve(a),
        Command::Generate(a) => generate_fixture(a),
        Command::Score(a) => score(a),
    }
}

fn read_json(path: &Path) -> Result<Value> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn env_seed() -> Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(s) => Ok(Some(s.trim().parse().with_context(|| format!("{SEED_ENV}={s:?}"))?)),
        Err(std::env::VarError::NotPresent) => Ok(None),
        Err(e) => bail!("{SEED_ENV}: {e}"),
    }
}

fn load_config(path: Option<&Path>) -> Result<(ExperimentConfig, bool)> {
    let Some(path) = path else {
        return Ok((ExperimentConfig::default(), false));
    };
    let value = read_json(path)?;
    let has_seed = value.get("master_seed").is_some();
    let cfg = serde_json::from_value(value).with_context(|| format!("config {}", path.display()))?;
    Ok((cfg, has_seed))
}

fn write_or_print(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn sweep(a: SweepArgs) -> Result<()> {
    let (mut cfg, config_seed) = load_config(a.config.as_deref())?;
    if let Some(v) = a.runs {
        cfg.runs = v;
    }
    if let Some(v) = a.delta {
        cfg.deltas = v;
    }
    if let Some(v) = a.k {
        cfg.ks = v;
    }
    if let Some(v) = a.l {
        cfg.ls = v;
    }
    if let Some(v) = a.n {
        cfg.n = v;
    }
    if let Some(v) = a.solver {
        cfg.solver = v;
    }
    if let Some(v) = a.jobs {
        cfg.jobs = v;
    }
    match (a.seed, config_seed) {
        (Some(s), _) => cfg.master_seed = s,
        (None, false) => cfg.master_seed = env_seed()?.unwrap_or(0),
        (None, true) => {}
    }
    let out = a
        .out
        .or_else(|| cfg.output_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("blindpoly-out"));

    let result = run_experiment(&cfg)?;
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    fs::write(out.join("results.csv"), records_to_csv(&result.records))?;
    fs::write(out.join("summary.json"), summary_to_json(&result.summary))?;

    for c in &result.summary {
        eprintln!(
            "K={} L={} delta={} runs={} failures={} median_pne={:e} ({:.1} dB) mean_pne={:e} ({:.1} dB)",
            c.k, c.l, c.delta, c.runs, c.failures, c.median_pne, c.median_db, c.mean_pne, c.mean_db
        );
    }
    eprintln!("wrote {}", out.display());
    Ok(())
}

fn solve(a: SolveArgs) -> Result<()> {
    let text = fs::read_to_string(&a.fixture).with_context(|| format!("reading {}", a.fixture.display()))?;
    let inst = JitterInstance::from_json(&text)?;
    let (cfg, _) = load_config(a.config.as_deref())?;
    let report = solve_instance(&inst, a.solver, &cfg.settings)?;

    let cond = condition_estimate(&build_vandermonde(&report.x_hat, inst.scenario.k)?);
    if cond > CONDITION_WARNING {
        eprintln!("warning: V(x_hat) is ill-conditioned (cond {cond:e})");
    }
    let rec = emit_reconstruction(&inst, &report)?;
    eprintln!(
        "{}: {} after {} iterations, objective {:e}, pne {:e}, relative error {:e}",
        a.solver.as_str(),
        report.termination.as_str(),
        report.iterations,
        report.final_objective(),
        rec.pne.value,
        rec.relative_error()
    );
    write_or_print(a.out.as_deref(), &rec.to_json())
}

fn generate_fixture(a: GenerateArgs) -> Result<()> {
    let seed = match a.seed {
        Some(s) => s,
        None => env_seed()?.unwrap_or(0),
    };
    let [lo, hi] = a.domain[..] else {
        bail!("--domain takes exactly two values, lo,hi");
    };
    let scenario = JitterScenario {
        n: a.n,
        domain_lo: lo,
        domain_hi: hi,
        delta: a.delta,
        k: a.k,
        l: a.l,
        seed,
    };
    let inst = generate(&scenario)?;
    write_or_print(a.out.as_deref(), &inst.to_json())
}

/// Pulls a location vector out of a bare array or the first matching key.
fn locations(value: &Value, keys: &[&str], path: &Path) -> Result<SampleLocations> {
    let arr = if value.is_array() {
        value
    } else {
        keys.iter()
            .find_map(|k| value.get(*k))
            .with_context(|| format!("{}: expected an array or one of {keys:?}", path.display()))?
    };
    let v: Vec<f64> = serde_json::from_value(arr.clone())
        .with_context(|| format!("{}: locations must be numbers", path.display()))?;
    Ok(SampleLocations::new(v)?)
}

fn score(a: ScoreArgs) -> Result<()> {
    let est_json = read_json(&a.estimate)?;
    let truth_json = read_json(&a.truth)?;
    let x_hat = locations(&est_json, &["x_hat", "x"], &a.estimate)?;
    let x_true = locations(&truth_json, &["x_true", "x"], &a.truth)?;
    let period = match a.period {
        Some(t) => t,
        None => truth_json
            .get("T")
            .and_then(Value::as_f64)
            .context("--period is required unless the truth file is a fixture")?,
    };
    let result = pne(&x_hat, &x_true, period)?;
    println!("{}", serde_json::to_string_pretty(&result)?);
    Ok(())
}
