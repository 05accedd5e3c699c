use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

struct Run {
    code: i32,
    stdout: String,
    stderr: String,
    out: PathBuf,
}

fn aggdiff(dir: &TempDir, command: &str, config: &str) -> Run {
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, config).unwrap();
    let out = dir.path().join("out");
    let Output { status, stdout, stderr } = Command::new(env!("CARGO_BIN_EXE_aggdiff"))
        .arg(command)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    Run {
        code: status.code().unwrap(),
        stdout: String::from_utf8(stdout).unwrap(),
        stderr: String::from_utf8(stderr).unwrap(),
        out,
    }
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn csv(path: &Path) -> (String, Vec<Vec<f64>>) {
    let text = fs::read_to_string(path).unwrap();
    assert!(!text.contains('\r'));
    let mut lines = text.lines();
    let header = lines.next().unwrap().to_owned();
    let rows = lines.map(|l| l.split(',').map(|x| x.parse().unwrap()).collect()).collect();
    (header, rows)
}

#[test]
fn validate_prints_reference_exponents() {
    let dir = TempDir::new().unwrap();
    let r = aggdiff(&dir, "validate", "params.d = 3\nparams.s = 1.1\nparams.m = 1.2\n");
    assert_eq!(r.code, 0, "{}", r.stderr);
    for line in ["a                    1.200000000000", "beta                 1.333333333333", "p                    1.090909090909"] {
        assert!(r.stdout.contains(line), "{}", r.stdout);
    }
}

#[test]
fn regime_violation_names_the_inequality() {
    let dir = TempDir::new().unwrap();
    let r = aggdiff(&dir, "validate", "params.s = 1.0\n");
    assert_eq!(r.code, 2);
    assert!(r.stderr.contains("2<2s fails"), "{}", r.stderr);
    let r = aggdiff(&dir, "extremal", "params.m = 1.5\n");
    assert_eq!(r.code, 2);
    assert!(r.stderr.contains("m<2−2s/d fails"), "{}", r.stderr);
}

#[test]
fn configuration_errors_exit_one() {
    let dir = TempDir::new().unwrap();
    assert_eq!(aggdiff(&dir, "validate", "params.s 1.1\n").code, 1);
    assert_eq!(aggdiff(&dir, "validate", "params.q = 1\n").code, 1);
    assert_eq!(aggdiff(&dir, "frobnicate", "").code, 1);
    let missing = Command::new(env!("CARGO_BIN_EXE_aggdiff")).arg("validate").output().unwrap();
    assert_eq!(missing.status.code(), Some(1));
    let absent = Command::new(env!("CARGO_BIN_EXE_aggdiff"))
        .args(["validate", "--config", "/nonexistent/run.cfg"])
        .output()
        .unwrap();
    assert_eq!(absent.status.code(), Some(1));
}

#[test]
fn extremal_writes_profile_and_sidecar() {
    let dir = TempDir::new().unwrap();
    let r = aggdiff(&dir, "extremal", "grid.n = 256\n");
    assert_eq!(r.code, 0, "{}", r.stderr);
    let side = json(&r.out.join("extremal.json"));
    let cstar = side["cstar"].as_f64().unwrap();
    assert!(cstar > 1.8 && cstar <= 1.9107, "{cstar}");
    assert!(side["el_residual"].as_f64().unwrap() <= 1e-4);
    assert!(side["iterations"].as_u64().unwrap() >= 1);
    assert_eq!(side["params"]["s"].as_f64(), Some(1.1));
    let (header, rows) = csv(&r.out.join("profile.csv"));
    assert_eq!(header, "r,w");
    assert_eq!(rows.len(), 256);
    let first = fs::read(r.out.join("profile.csv")).unwrap();

    let again = aggdiff(&dir, "extremal", "grid.n = 256\n");
    assert_eq!(again.code, 0);
    assert_eq!(fs::read(again.out.join("profile.csv")).unwrap(), first);

    let fine = aggdiff(&dir, "extremal", "grid.n = 512\n");
    let fine_cstar = json(&fine.out.join("extremal.json"))["cstar"].as_f64().unwrap();
    assert!(((fine_cstar - cstar) / cstar).abs() <= 1e-3);
}

#[test]
fn extremal_without_convergence_writes_partial_profile() {
    let dir = TempDir::new().unwrap();
    let r = aggdiff(&dir, "extremal", "grid.n = 128\nextremal.max_iter = 1\n");
    assert_eq!(r.code, 3, "{}", r.stderr);
    assert_eq!(json(&r.out.join("extremal.json"))["converged"], Value::Bool(false));
    assert_eq!(csv(&r.out.join("profile.csv")).1.len(), 128);
}

#[test]
fn thresholds_and_classification() {
    let dir = TempDir::new().unwrap();
    let r = aggdiff(&dir, "thresholds", "grid.n = 128\n");
    assert_eq!(r.code, 0, "{}", r.stderr);
    let t = json(&r.out.join("thresholds.json"));
    let x_star = t["x_star"].as_f64().unwrap();
    let cstar = t["cstar"].as_f64().unwrap();
    assert!(((82.30 / cstar).powi(3) / x_star - 1.0).abs() < 1e-3, "{x_star}");
    let (header, rows) = csv(&r.out.join("threshold_profile.csv"));
    assert_eq!(header, "r,u");
    assert!((rows[0][1] - 1.0).abs() < 1e-14);

    for (kappa, verdict) in [(0.8, "GlobalExistence"), (1.0, "Indeterminate"), (1.2, "FiniteTimeBlowup")] {
        let r = aggdiff(&dir, "classify", &format!("grid.n = 128\ninitial.kind = threshold\ninitial.kappa = {kappa}\n"));
        assert_eq!(r.code, 0, "{}", r.stderr);
        let c = json(&r.out.join("classification.json"));
        assert_eq!(c["verdict"], verdict);
        for key in ["product", "x_star", "energy_lhs", "g_at_xstar", "margins"] {
            assert!(c.get(key).is_some(), "{key}");
        }
        assert!(json(&r.out.join("energy_report.json")).get("free_energy").is_some());
    }

    // a wide low Gaussian lies far below both thresholds
    let r = aggdiff(&dir, "classify", "grid.n = 128\ngrid.r_max = 8\ninitial.amplitude = 0.05\n");
    assert_eq!(json(&r.out.join("classification.json"))["verdict"], "GlobalExistence");
}

#[test]
fn evolve_output_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let config = "grid.n = 96\ngrid.r_max = 6\ninitial.amplitude = 0.3\nsim.t_end = 0.5\nsim.record_every = 10\n";
    let r = aggdiff(&dir, "evolve", config);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let (header, rows) = csv(&r.out.join("trace.csv"));
    assert_eq!(header, "t,mass,lm,linf,F,m2,dissipation,dt");
    assert!(rows.len() > 2);
    let drift = (rows[rows.len() - 1][1] - rows[0][1]).abs() / rows[0][1];
    assert!(drift < 1e-12);
    let footer = json(&r.out.join("trace.json"));
    assert_eq!(footer["outcome"], "CompletedBounded");
    let (final_header, _) = csv(&r.out.join("final.csv"));
    assert_eq!(final_header, "r,u");

    let first = fs::read(r.out.join("trace.csv")).unwrap();
    let again = aggdiff(&dir, "evolve", config);
    assert_eq!(fs::read(again.out.join("trace.csv")).unwrap(), first);
}

#[test]
fn dichotomy_default_amplitudes() {
    let dir = TempDir::new().unwrap();
    let r = aggdiff(&dir, "dichotomy", "grid.n = 256\n");
    assert_eq!(r.code, 0, "{}\n{}", r.stdout, r.stderr);
    let summary = json(&r.out.join("summary.json"));
    let rows = summary["rows"].as_array().unwrap();
    assert_eq!(rows[0]["classification"]["verdict"], "GlobalExistence");
    assert_eq!(rows[0]["outcome"], "CompletedBounded");
    assert_eq!(rows[1]["classification"]["verdict"], "FiniteTimeBlowup");
    assert!(rows[1]["outcome"]["BlowupDetected"].as_f64().unwrap() > 0.0);
    assert_eq!(summary["all_consistent"], Value::Bool(true));
    assert!(r.out.join("trace_kappa_0.8.csv").exists());
    assert!(r.out.join("trace_kappa_1.2.json").exists());
}

#[test]
fn dichotomy_at_the_threshold_stays_put() {
    let dir = TempDir::new().unwrap();
    let r = aggdiff(&dir, "dichotomy", "grid.n = 256\ndichotomy.kappas = 1.0\nsim.t_end_factor = 1\n");
    assert_eq!(r.code, 0, "{}", r.stderr);
    let row = &json(&r.out.join("summary.json"))["rows"][0];
    assert_eq!(row["classification"]["verdict"], "Indeterminate");
    assert_eq!(row["outcome"], "CompletedBounded");
    let (_, trace) = csv(&r.out.join("trace_kappa_1.csv"));
    for rec in &trace {
        assert!((rec[3] - 1.0).abs() < 0.01, "peak {}", rec[3]);
    }
}

#[test]
fn dichotomy_mismatch_is_flagged() {
    let dir = TempDir::new().unwrap();
    // far too short for the blow-up to develop
    let r = aggdiff(&dir, "dichotomy", "grid.n = 256\ndichotomy.kappas = 1.2\nsim.t_end = 0.5\n");
    assert_eq!(r.code, 5);
    assert!(r.stdout.contains("MISMATCH"));
    let summary = json(&r.out.join("summary.json"));
    assert_eq!(summary["rows"][0]["consistent"], Value::Bool(false));
    assert_eq!(summary["all_consistent"], Value::Bool(false));
}

#[test]
fn selftest_passes_and_detects_a_corrupted_kernel() {
    let dir = TempDir::new().unwrap();
    let r = aggdiff(&dir, "selftest", "seed = 7\n");
    assert_eq!(r.code, 0, "{}\n{}", r.stdout, r.stderr);
    assert_eq!(r.stdout.lines().filter(|l| l.starts_with("PASS")).count(), 10);
    assert_eq!(json(&r.out.join("selftest.json")).as_array().unwrap().len(), 10);

    let bad = aggdiff(&dir, "selftest", "selftest.corrupt_kernel = 1.5\n");
    assert_eq!(bad.code, 4);
    assert!(bad.stdout.contains("FAIL  3 hls bound"), "{}", bad.stdout);
    assert!(bad.stderr.contains("hls bound"), "{}", bad.stderr);
}
