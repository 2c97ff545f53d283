use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn kyleback(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kyleback"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

/// Data rows of a CSV written by the tool, skipping the provenance line.
fn rows(path: &Path) -> (String, Vec<csv::StringRecord>) {
    let text = fs::read_to_string(path).unwrap();
    let (stamp, body) = text.split_once('\n').unwrap();
    let mut r = csv::Reader::from_reader(body.as_bytes());
    (stamp.to_string(), r.records().map(|x| x.unwrap()).collect())
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn validate_exit_codes() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    assert_eq!(code(&kyleback(d, &["validate"])), 0);
    let report = json(&d.join("out/validation.json"));
    assert_eq!(report["report"]["overall"], Value::Bool(true));
    assert_eq!(report["seed"], Value::from(1));

    let q = write(d, "q.toml", "[model]\nkind = \"quadratic\"\ndelta = 1.5\n");
    assert_eq!(code(&kyleback(d, &["validate", "--config", q.to_str().unwrap()])), 1);

    let bad = write(d, "bad.toml", "[model\nkind = ");
    assert_eq!(code(&kyleback(d, &["validate", "--config", bad.to_str().unwrap()])), 2);
    let unknown = write(d, "unknown.toml", "[sim]\npaths = 10\n");
    assert_eq!(code(&kyleback(d, &["validate", "--config", unknown.to_str().unwrap()])), 2);
    let missing = d.join("nowhere.toml");
    assert_eq!(code(&kyleback(d, &["validate", "--config", missing.to_str().unwrap()])), 2);
    assert_eq!(code(&kyleback(d, &["frobnicate"])), 2);
}

#[test]
fn tampered_weighting_function_fails() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    let cfg = write(d, "w.toml", "[model]\nconstant_w = 0.5\n");
    let c = cfg.to_str().unwrap();
    assert_eq!(code(&kyleback(d, &["validate", "--config", c])), 1);
    assert_eq!(code(&kyleback(d, &["verify", "--config", c])), 1);
    let report = json(&d.join("out/report.json"));
    assert_eq!(report["report"]["overall"], Value::Bool(false));
}

#[test]
fn simulate_summary_and_paths() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    let args = ["simulate", "--paths", "1000", "--steps", "512", "--seed", "5"];
    assert_eq!(code(&kyleback(d, &args)), 0);
    let (stamp, summary) = rows(&d.join("out/summary.csv"));
    assert!(stamp.contains("config_hash=") && stamp.contains("seed=5"));
    let mid = summary
        .iter()
        .filter(|r| &r[1] == "xi")
        .min_by(|a, b| {
            let da = (a[0].parse::<f64>().unwrap() - 0.5).abs();
            let db = (b[0].parse::<f64>().unwrap() - 0.5).abs();
            da.total_cmp(&db)
        })
        .unwrap();
    let mean: f64 = mid[3].parse().unwrap();
    let se: f64 = mid[4].parse().unwrap();
    assert!(mean.abs() <= 3.0 * se, "{mean} {se}");
    assert!(!d.join("out/paths.csv").exists());

    let first = fs::read(d.join("out/summary.csv")).unwrap();
    let mut dumped = args.to_vec();
    dumped.extend(["--dump-paths", "--out", "again"]);
    assert_eq!(code(&kyleback(d, &dumped)), 0);
    assert_eq!(first, fs::read(d.join("again/summary.csv")).unwrap());
    let (_, paths) = rows(&d.join("again/paths.csv"));
    assert_eq!(paths.len(), 1000 * 513);
    for r in paths.iter().take(2000) {
        let f = |i: usize| r[i].parse::<f64>().unwrap();
        assert_eq!(f(5), f(6) + f(2));
    }
}

#[test]
fn verify_subset_has_exactly_that_entry() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    let out = kyleback(d, &["verify", "--only", "density"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
    let report = json(&d.join("out/report.json"));
    let entries = report["report"]["entries"].as_array().unwrap();
    assert_eq!(entries.len(), 1);
    assert_eq!(entries[0]["name"], "density");
    assert_eq!(entries[0]["provenance"]["config_hash"], report["config_hash"]);
    let table = fs::read_to_string(d.join("out/report.txt")).unwrap();
    assert!(table.starts_with("# kyleback verify config_hash="));
    assert!(table.contains("overall: PASS"));
}

#[test]
fn verify_refuses_small_samples_without_permission() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    let args = ["verify", "--only", "optimality", "--paths", "100", "--steps", "64"];
    assert_eq!(code(&kyleback(d, &args)), 2);
    let cfg = write(d, "small.toml", "[verify]\nallow_small_samples = true\n");
    let mut allowed = args.to_vec();
    allowed.extend(["--config", cfg.to_str().unwrap()]);
    let out = kyleback(d, &allowed);
    assert_ne!(code(&out), 2);
    let report = json(&d.join("out/report.json"));
    let warnings = report["report"]["entries"][0]["warnings"].as_array().unwrap();
    assert!(!warnings.is_empty());
}

#[test]
fn unknown_test_name_is_a_usage_error() {
    let tmp = TempDir::new().unwrap();
    let out = kyleback(tmp.path(), &["verify", "--only", "everything"]);
    assert_eq!(code(&out), 2);
}

const SWEEP: &str = r#"
[verify]
n_paths = 200
n_steps = 128
tests = ["density"]

[sweep]
values = [0.25, 0.5, 1.0]
"#;

#[test]
fn sweep_writes_one_block_per_value() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    let cfg = write(d, "sweep.toml", SWEEP);
    assert_eq!(code(&kyleback(d, &["sweep", "--config", cfg.to_str().unwrap()])), 0);
    let (_, rows) = rows(&d.join("out/sweep.csv"));
    let valid: Vec<&csv::StringRecord> = rows.iter().filter(|r| &r[1] == "valid").collect();
    assert_eq!(valid.len(), 3);
    assert!(valid.iter().all(|r| &r[2] == "1"));
    for g in ["0.25", "0.5", "1"] {
        assert!(rows.iter().any(|r| &r[0] == g && &r[1] == "utility_equilibrium"));
        assert!(rows.iter().any(|r| &r[0] == g && &r[1] == "pass_density" && &r[2] == "1"));
    }
}

#[test]
fn sweep_rejects_empty_or_missing_values() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    let empty = write(d, "empty.toml", "[sweep]\nvalues = []\n");
    assert_eq!(code(&kyleback(d, &["sweep", "--config", empty.to_str().unwrap()])), 2);
    assert_eq!(code(&kyleback(d, &["sweep"])), 2);
    let other = write(d, "other.toml", "[sweep]\nparameter = \"q\"\nvalues = [0.1]\n");
    assert_eq!(code(&kyleback(d, &["sweep", "--config", other.to_str().unwrap()])), 2);
}

#[test]
fn sweep_flags_infeasible_values() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    let text = "[model]\nkind = \"quadratic\"\n[verify]\nn_paths = 100\nn_steps = 64\ntests = [\"density\"]\n[sweep]\nvalues = [0.25, 1.0]\n";
    let cfg = write(d, "q.toml", text);
    assert_eq!(code(&kyleback(d, &["sweep", "--config", cfg.to_str().unwrap()])), 1);
    let (_, rows) = rows(&d.join("out/sweep.csv"));
    let valid: Vec<(&str, &str)> = rows
        .iter()
        .filter(|r| &r[1] == "valid")
        .map(|r| (&r[0], &r[2]))
        .collect();
    assert_eq!(valid, vec![("0.25", "0"), ("1", "1")]);
}

#[test]
fn single_value_sweep_matches_verify() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    let text = "[verify]\nn_paths = 2000\nn_steps = 256\ntests = [\"admissibility\"]\nallow_small_samples = true\n[sweep]\nvalues = [1.0]\n";
    let cfg = write(d, "one.toml", text);
    let c = cfg.to_str().unwrap();
    kyleback(d, &["verify", "--config", c]);
    assert_eq!(code(&kyleback(d, &["sweep", "--config", c])), 0);
    let report = json(&d.join("out/report.json"));
    let est = report["report"]["entries"][0]["checks"][0]["estimate"].as_f64().unwrap();
    let (_, rows) = rows(&d.join("out/sweep.csv"));
    let swept: f64 = rows
        .iter()
        .find(|r| &r[1] == "admissibility_estimate")
        .unwrap()[2]
        .parse()
        .unwrap();
    assert_eq!(est, swept);
}

#[test]
fn density_table() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    let args = ["density", "--s", "0.25", "--t", "0.75", "--lower=-0.6", "--upper=0.6", "--points", "61"];
    assert_eq!(code(&kyleback(d, &args)), 0);
    let (stamp, rows) = rows(&d.join("out/density.csv"));
    assert!(stamp.starts_with("# kyleback density config_hash="));
    assert_eq!(rows.len(), 2 * 61 * 61);
    // the x = 0 row of rho integrates to one; its spread is about 0.1
    let dy = 1.2 / 60.0;
    let mass: f64 = rows
        .iter()
        .filter(|r| &r[0] == "rho" && r[2].parse::<f64>().unwrap() == 0.0)
        .map(|r| r[5].parse::<f64>().unwrap() * dy)
        .sum();
    assert!((mass - 1.0).abs() < 1e-6, "{mass}");
    assert!(rows.iter().all(|r| r[5].parse::<f64>().unwrap() >= 0.0));

    assert_eq!(code(&kyleback(d, &["density", "--s", "0.5", "--t", "0.5"])), 2);
}

#[test]
fn stray_family_parameter_is_a_usage_error() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    let cfg = write(d, "s.toml", "[model]\nkind = \"static\"\nq = 0.1\n");
    assert_eq!(code(&kyleback(d, &["validate", "--config", cfg.to_str().unwrap()])), 2);
}
