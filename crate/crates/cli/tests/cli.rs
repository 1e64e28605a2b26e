use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use blindpoly::harness::CSV_HEADER;
use blindpoly::JitterInstance;
use serde_json::Value;

fn blindpoly(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_blindpoly"))
        .args(args)
        .current_dir(dir)
        .env_remove("BLINDPOLY_SEED")
        .output()
        .expect("binary runs")
}

fn ok(out: Output) -> Output {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn generate_is_seeded_and_honours_env() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(blindpoly(&["generate", "--seed", "5", "--delta", "3", "--out", "a.json"], d));
    ok(blindpoly(&["generate", "--seed", "5", "--delta", "3", "--out", "b.json"], d));
    let env = ok(Command::new(env!("CARGO_BIN_EXE_blindpoly"))
        .args(["generate", "--delta", "3"])
        .env("BLINDPOLY_SEED", "5")
        .output()
        .unwrap());
    let a = fs::read_to_string(d.join("a.json")).unwrap();
    assert_eq!(a, fs::read_to_string(d.join("b.json")).unwrap());
    assert_eq!(a.trim_end(), String::from_utf8(env.stdout).unwrap().trim_end());

    let inst = JitterInstance::from_json(&a).unwrap();
    assert_eq!(inst.scenario.seed, 5);
    assert_eq!(inst.y.as_matrix().shape(), (30, 3));
    // Lossless: re-serializing the parsed fixture gives the same text.
    assert_eq!(inst.to_json(), a);
}

#[test]
fn generate_accepts_negative_domain_and_rejects_bad_shapes() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(blindpoly(&["generate", "--domain", "-1,2", "--N", "5", "--K", "2", "--L", "2"], dir.path()));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["scenario"]["domain_lo"], -1.0);
    assert_eq!(v["T"], 0.75);

    assert!(!blindpoly(&["generate", "--K", "3", "--L", "2"], dir.path()).status.success());
    assert!(!blindpoly(&["generate", "--domain", "1,2,3"], dir.path()).status.success());
}

#[test]
fn solve_then_score_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(blindpoly(&["generate", "--seed", "2", "--delta", "5", "--out", "f.json"], d));
    ok(blindpoly(&["solve", "--fixture", "f.json", "--out", "rec.json"], d));
    let rec = read_json(&d.join("rec.json"));
    for key in ["x_true", "x_hat", "x_corrected", "pne", "Y", "Y_hat", "curves"] {
        assert!(rec.get(key).is_some(), "missing {key}");
    }
    assert_eq!(rec["curves"]["z"].as_array().unwrap().len(), 200);
    let pne = rec["pne"]["value"].as_f64().unwrap();
    assert!(pne <= 1e-6, "pne {pne}");

    let scored = ok(blindpoly(&["score", "--estimate", "rec.json", "--truth", "f.json"], d));
    let s: Value = serde_json::from_slice(&scored.stdout).unwrap();
    assert_eq!(s["value"].as_f64().unwrap(), pne);
    assert_eq!(s["t1_opt"], rec["pne"]["t1_opt"]);
}

#[test]
fn score_bare_arrays() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("est.json"), "[0, 1, 1]").unwrap();
    fs::write(d.join("truth.json"), "[0, 1, 2]").unwrap();
    let out = ok(blindpoly(&["score", "--estimate", "est.json", "--truth", "truth.json", "--period", "1"], d));
    let s: Value = serde_json::from_slice(&out.stdout).unwrap();
    // Fit of [0, 1, 2] on [1 | (0, 1, 1)]: t0 = 0, t1 = 1.5, residual sqrt(0.5).
    assert!(s["t0_opt"].as_f64().unwrap().abs() < 1e-15);
    assert!((s["t1_opt"].as_f64().unwrap() - 1.5).abs() < 1e-15);
    assert!((s["value"].as_f64().unwrap() - 0.5f64.sqrt() / 3.0).abs() < 1e-15);

    let missing = blindpoly(&["score", "--estimate", "est.json", "--truth", "truth.json"], d);
    assert!(!missing.status.success());
    assert!(String::from_utf8_lossy(&missing.stderr).contains("--period"));
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

#[test]
fn sweep_writes_consistent_csv_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(blindpoly(
        &["sweep", "--runs", "4", "--delta", "2,20", "--K", "2,3,4", "--L", "3", "--seed", "9", "--out", "o"],
        d,
    ));
    let csv = fs::read_to_string(d.join("o/results.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some(CSV_HEADER));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    // K = 4 > L = 3 is skipped, leaving 2 K values x 2 deltas x 4 runs.
    assert_eq!(rows.len(), 16);
    assert!(rows.iter().all(|r| r.len() == 11 && r[1] != "4"));
    assert_eq!(rows.iter().map(|r| r[0]).collect::<Vec<_>>()[..4], ["0", "1", "2", "3"]);
    // 17 significant digits: one leading digit and 16 after the point.
    let delta = rows[0][3];
    assert_eq!(delta.split('e').next().unwrap().len(), 18, "{delta}");

    // Aggregates recomputed from the CSV match the summary.
    let summary = read_json(&d.join("o/summary.json"));
    let cells = summary.as_array().unwrap();
    assert_eq!(cells.len(), 4);
    for cell in cells {
        let (k, dl) = (cell["K"].as_u64().unwrap().to_string(), cell["delta"].as_f64().unwrap());
        let pne: Vec<f64> = rows
            .iter()
            .filter(|r| r[1] == k && r[3].parse::<f64>().unwrap() == dl)
            .map(|r| r[4].parse().unwrap())
            .collect();
        assert_eq!(pne.len(), 4);
        let mean = pne.iter().sum::<f64>() / 4.0;
        assert!((cell["mean_pne"].as_f64().unwrap() - mean).abs() <= 1e-12);
        assert!((cell["median_pne"].as_f64().unwrap() - median(pne.clone())).abs() <= 1e-12);
        let db = 20.0 * median(pne).log10();
        assert!((cell["median_db"].as_f64().unwrap() - db).abs() <= 1e-9);
    }
}

fn without_wall_time(csv: &str) -> Vec<String> {
    csv.lines().map(|l| l.rsplit_once(',').unwrap().0.to_owned()).collect()
}

#[test]
fn sweep_output_does_not_depend_on_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(blindpoly(&["sweep", "--runs", "6", "--delta", "10", "--jobs", "1", "--out", "one"], d));
    ok(blindpoly(&["sweep", "--runs", "6", "--delta", "10", "--jobs", "3", "--out", "three"], d));
    let one = fs::read_to_string(d.join("one/results.csv")).unwrap();
    let three = fs::read_to_string(d.join("three/results.csv")).unwrap();
    assert_eq!(without_wall_time(&one), without_wall_time(&three));
}

#[test]
fn sweep_config_file_with_flag_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(
        d.join("cfg.json"),
        r#"{"K": [2], "L": [2], "delta": [4.0], "N": 12, "runs": 3, "master_seed": 21, "output_dir": "from_cfg"}"#,
    )
    .unwrap();
    ok(blindpoly(&["sweep", "--config", "cfg.json", "--runs", "2"], d));
    let csv = fs::read_to_string(d.join("from_cfg/results.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(csv.lines().skip(1).all(|l| l.starts_with(&['0', '1'][..]) && l.contains(",2,2,")));

    // The config seed wins over the environment; the flag wins over both.
    let run = |extra: &[&str], env: Option<&str>, out: &str| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_blindpoly"));
        cmd.args(["sweep", "--config", "cfg.json", "--out", out]).args(extra).current_dir(d);
        match env {
            Some(s) => cmd.env("BLINDPOLY_SEED", s),
            None => cmd.env_remove("BLINDPOLY_SEED"),
        };
        ok(cmd.output().unwrap());
        without_wall_time(&fs::read_to_string(d.join(out).join("results.csv")).unwrap())
    };
    let base = run(&[], None, "s1");
    assert_eq!(run(&[], Some("99"), "s2"), base);
    assert_eq!(run(&["--seed", "21"], Some("99"), "s3"), base);
    assert_ne!(run(&["--seed", "22"], None, "s4"), base);
}

#[test]
fn sweep_env_seed_is_a_fallback() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let run = |env: &str, extra: &[&str], out: &str| {
        ok(Command::new(env!("CARGO_BIN_EXE_blindpoly"))
            .args(["sweep", "--runs", "2", "--N", "10", "--out", out])
            .args(extra)
            .env("BLINDPOLY_SEED", env)
            .current_dir(d)
            .output()
            .unwrap());
        without_wall_time(&fs::read_to_string(d.join(out).join("results.csv")).unwrap())
    };
    assert_eq!(run("4", &[], "a"), run("0", &["--seed", "4"], "b"));
    assert_ne!(run("4", &[], "c"), run("5", &[], "d"));
}

#[test]
fn sweep_rejects_bad_input() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let bad_solver = blindpoly(&["sweep", "--solver", "newton"], d);
    assert!(!bad_solver.status.success());
    assert!(String::from_utf8_lossy(&bad_solver.stderr).contains("unknown solver"));
    assert!(!blindpoly(&["sweep", "--K", "4", "--L", "3"], d).status.success());
    assert!(!blindpoly(&["sweep", "--runs", "0"], d).status.success());
}

#[test]
fn sweep_records_selection_runs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(blindpoly(
        &["sweep", "--solver", "selection-exhaustive", "--runs", "2", "--N", "5", "--K", "2", "--L", "2", "--delta", "0.5", "--out", "sel"],
        d,
    ));
    let csv = fs::read_to_string(d.join("sel/results.csv")).unwrap();
    assert!(csv.lines().skip(1).all(|l| l.contains(",exhaustive-search,")), "{csv}");
}
