use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_tranche-sim"))
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("tranche-sim-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn status(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn csv_column(path: &Path, name: &str) -> Vec<String> {
    let mut r = csv::Reader::from_path(path).unwrap();
    let idx = r.headers().unwrap().iter().position(|h| h == name).unwrap();
    r.records().map(|rec| rec.unwrap()[idx].to_string()).collect()
}

#[test]
fn validate_accepts_fixtures() {
    for name in ["standard.toml", "benefit.toml", "fallback.toml", "refund.toml", "insure.toml", "divergence_curve.toml", "payout_table.toml"] {
        let out = bin().arg("validate").arg(fixture(name)).output().unwrap();
        assert_eq!(status(&out), 0, "{name}: {}", String::from_utf8_lossy(&out.stderr));
        assert!(out.stderr.is_empty());
    }
}

#[test]
fn validate_reports_field_paths() {
    let dir = scratch("validate");
    let text = std::fs::read_to_string(fixture("standard.toml")).unwrap();
    let cases = [
        (text.replace("t2 = 30", "t2 = 24"), "period"),
        (text.replace("rate_per_step = \"0.0125\"\n\n[[venues]]", "rate_per_step = \"0.0125\"\nevents = [{ kind = \"loss\", time = 5, fraction = \"-0.1\" }]\n\n[[venues]]"), "venues[0].events[0]"),
        (text.replace("seed = 1", "seed = 1\nspeed = 2"), "speed"),
    ];
    for (i, (body, needle)) in cases.iter().enumerate() {
        let path = dir.join(format!("case{i}.toml"));
        std::fs::write(&path, body).unwrap();
        let out = bin().arg("validate").arg(&path).output().unwrap();
        assert_eq!(status(&out), 3, "case {i}");
        let err = String::from_utf8_lossy(&out.stderr);
        assert!(err.contains(needle), "case {i}: {err}");
    }
}

#[test]
fn exit_codes_distinguish_failures() {
    let out = bin().arg("validate").arg("/nonexistent/file.toml").output().unwrap();
    assert_eq!(status(&out), 5);
    let out = bin().arg("frobnicate").output().unwrap();
    assert_eq!(status(&out), 2);
    let out = bin().args(["run"]).arg(fixture("standard.toml")).output().unwrap();
    assert_eq!(status(&out), 2, "--out is required");
}

#[test]
fn run_standard_writes_payouts() {
    let dir = scratch("standard");
    let out = bin().arg("run").arg(fixture("standard.toml")).arg("--out").arg(&dir).arg("--quiet").output().unwrap();
    assert_eq!(status(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out.stdout.is_empty());
    let per = csv_column(&dir.join("payouts.csv"), "c_per_tranche");
    assert_eq!(per, ["1.05", "1.05", "1.05"]);
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["scenario_hash"].as_str().unwrap().len(), 64);
    assert!(report["tool_version"].as_str().unwrap().starts_with("tranche-sim "));
    for file in ["states.csv", "prices.csv"] {
        assert!(std::fs::read_to_string(dir.join(file)).unwrap().lines().count() > 1);
    }
}

#[test]
fn run_fallback_reports_worked_ratios() {
    let dir = scratch("fallback");
    let out = bin().arg("run").arg(fixture("fallback.toml")).arg("--out").arg(&dir).args(["--format", "json"]).output().unwrap();
    assert_eq!(status(&out), 0);
    assert!(!dir.join("payouts.csv").exists());
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap();
    let ratios = &report["policy"]["fallback_ratios"];
    assert_eq!(ratios["cx_payout"], "0.4");
    assert_eq!(ratios["cy_payout"], "30");
}

#[test]
fn reports_are_byte_identical_and_seed_sensitive() {
    let read = |dir: &Path| std::fs::read(dir.join("report.json")).unwrap();
    let (a, b, c) = (scratch("det-a"), scratch("det-b"), scratch("det-c"));
    for dir in [&a, &b] {
        let out = bin().arg("run").arg(fixture("insure.toml")).arg("--out").arg(dir).arg("-q").output().unwrap();
        assert_eq!(status(&out), 0);
    }
    assert_eq!(read(&a), read(&b));
    let out = bin().args(["--seed", "99", "run"]).arg(fixture("insure.toml")).arg("--out").arg(&c).arg("-q").output().unwrap();
    assert_eq!(status(&out), 0);
    assert_ne!(read(&a), read(&c));
}

#[test]
fn divergence_sweep_cross_checks_and_orders_rows() {
    let dir = scratch("divergence");
    let out = bin().arg("sweep").arg(fixture("divergence_curve.toml")).arg("--out").arg(&dir).output().unwrap();
    assert_eq!(status(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let csv = dir.join("divergence_curve.csv");
    let r: Vec<f64> = csv_column(&csv, "r").iter().map(|v| v.parse().unwrap()).collect();
    assert!(r.windows(2).all(|w| w[0] < w[1]));
    assert_eq!(*r.last().unwrap(), 1.05);
    let ac: f64 = csv_column(&csv, "D_AC").last().unwrap().parse().unwrap();
    let bc: f64 = csv_column(&csv, "D_BC").last().unwrap().parse().unwrap();
    assert!(bc > ac && bc < 1e-3);
}

#[test]
fn invalid_sweep_is_a_validation_error() {
    let dir = scratch("badsweep");
    let spec = dir.join("bad.toml");
    std::fs::write(&spec, "[axis]\nfrom = \"1\"\nto = \"2\"\nstep = \"0\"\n[divergence]\npa_start = \"1\"\npb_start = \"1\"\n").unwrap();
    let out = bin().arg("sweep").arg(&spec).arg("--out").arg(&dir).output().unwrap();
    assert_eq!(status(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("axis.step"));
}
