mod common;

use std::fs;
use std::path::Path;
use std::process::Command;

fn run(cmd: &str, cfg: &str, dir: &Path, extra: &[&str]) -> (i32, String) {
    let cfg_path = dir.join(format!("{cmd}.cfg"));
    fs::write(&cfg_path, cfg).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_parpath"))
        .arg(cmd)
        .arg("--config")
        .arg(&cfg_path)
        .arg("--out")
        .arg(dir.join(cmd))
        .args(extra)
        .output()
        .unwrap();
    (out.status.code().unwrap(), String::from_utf8_lossy(&out.stderr).into_owned())
}

fn csv_column(path: &Path, name: &str) -> Vec<String> {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let col = header.iter().position(|h| *h == name).unwrap();
    lines.map(|l| l.split(',').nth(col).unwrap().to_string()).collect()
}

#[test]
fn missing_hurst_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let (code, err) = run("lift", "grid.N = 16\n", dir.path(), &[]);
    assert_eq!(code, 2);
    assert!(err.contains("kernel.H"), "{err}");
    let (code, err) = run("lift", "kernel.H = 0.3\nkernel.hurst = 0.3\n", dir.path(), &[]);
    assert_eq!(code, 2);
    assert!(err.contains("unknown key"), "{err}");
}

#[test]
fn half_hurst_lift_reproduces_the_driver() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _) = run("lift", "kernel.H = 0.5\ngrid.N = 64\ncorr.rho = 1\n", dir.path(), &[]);
    assert_eq!(code, 0);
    let csv = dir.path().join("lift/path_0.csv");
    let xhat: Vec<f64> = csv_column(&csv, "xhat1").iter().map(|v| v.parse().unwrap()).collect();
    let x: Vec<f64> = csv_column(&csv, "X").iter().map(|v| v.parse().unwrap()).collect();
    assert_eq!(xhat.len(), 65);
    for (a, b) in xhat.iter().zip(&x) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn lift_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "kernel.H = 0.2\ngrid.N = 128\nrun.paths = 2\n";
    run("lift", cfg, dir.path(), &["--seed", "42"]);
    let first = fs::read(dir.path().join("lift/path_1.prp")).unwrap();
    let manifest = fs::read(dir.path().join("lift/manifest.json")).unwrap();
    run("lift", cfg, dir.path(), &["--seed", "42", "--threads", "3"]);
    assert_eq!(first, fs::read(dir.path().join("lift/path_1.prp")).unwrap());
    assert_eq!(manifest, fs::read(dir.path().join("lift/manifest.json")).unwrap());
    let text = String::from_utf8(manifest).unwrap();
    assert!(text.contains("\"seed\": 42") && text.contains("config_hash"));
}

#[test]
fn verify_flags_a_corrupted_dump() {
    let dir = tempfile::tempdir().unwrap();
    let base = "kernel.H = 0.3\ngrid.N = 64\n";
    assert_eq!(run("verify", base, dir.path(), &[]).0, 0);
    let model = common::rl_model(0.3, 64, 0.0, 0);
    let (_, prp) = model.lift(0, &model.plan()).unwrap();
    let mut dump = Vec::new();
    prp.perturb_level1(20, 0, 0.01).write_to(&mut dump).unwrap();
    let bad = dir.path().join("bad.prp");
    fs::write(&bad, dump).unwrap();
    let cfg = format!("{base}verify.input = {}\n", bad.display());
    let (code, _) = run("verify", &cfg, dir.path(), &[]);
    assert_eq!(code, 3);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("verify/verify.json")).unwrap()).unwrap();
    assert_eq!(report["pass"], false);
    assert_eq!(report["entries"][0]["generator"]["pass"], false);
    assert!(dir.path().join("verify/manifest.json").exists());
    assert_eq!(run("verify", &format!("{base}verify.triples = 0\n"), dir.path(), &[]).0, 2);
}

#[test]
fn rate_and_smile_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "rate.H = 0.3\nrate.rho = -0.4\nrate.sigma0 = 1.2\nf.family = constant\nf.value = 0.3\n\
               rate.K = 8\nrate.z_min = -0.4\nrate.z_max = 0.4\nrate.z_steps = 5\n";
    assert_eq!(run("rate", cfg, dir.path(), &[]).0, 0);
    let z = csv_column(&dir.path().join("rate/rate.csv"), "z");
    let r = csv_column(&dir.path().join("rate/rate.csv"), "rate");
    for (z, r) in z.iter().zip(&r) {
        let (z, r): (f64, f64) = (z.parse().unwrap(), r.parse().unwrap());
        assert!((r - common::constant_rate(z, 0.3, 1.2)).abs() <= 1e-6);
    }
    assert_eq!(run("smile", cfg, dir.path(), &[]).0, 0);
    let sig = csv_column(&dir.path().join("smile/smile.csv"), "sigma_asym");
    assert_eq!(sig[2], "");
    assert!(sig.iter().enumerate().all(|(k, s)| k == 2 || (s.parse::<f64>().unwrap() - 0.36).abs() < 1e-6));
}

#[test]
fn integrate_and_rde_write_their_tables() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "kernel.H = 0.3\ngrid.N = 64\nrun.paths = 2\nmodel.sigma.family = linear\nmodel.sigma.params = 0,1\n";
    assert_eq!(run("integrate", cfg, dir.path(), &[]).0, 0);
    for f in ["integral_0.rp", "integral_1.csv", "trace_0.csv", "warnings.json", "manifest.json", "timing.json"] {
        assert!(dir.path().join("integrate").join(f).exists(), "{f}");
    }
    assert_eq!(run("rde", cfg, dir.path(), &[]).0, 0);
    assert_eq!(csv_column(&dir.path().join("rde/paths.csv"), "S").len(), 130);
    let bad = "kernel.H = 0.3\nmodel.sigma.family = linear\nmodel.sigma.params = 1\n";
    assert_eq!(run("rde", bad, dir.path(), &[]).0, 2);
}

#[test]
fn mc_flat_implied_volatility() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "kernel.H = 0.5\ngrid.N = 64\nf.family = constant\nf.value = 0.2\n\
               model.sigma.family = linear\nmodel.sigma.params = 0,1\nmc.checks = price\nmc.paths = 4000\n\
               mc.strikes = 0.9,1,1.1\nmc.maturities = 0.5,1\n";
    assert_eq!(run("mc", cfg, dir.path(), &[]).0, 0);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("mc/mc.json")).unwrap()).unwrap();
    let checks = report["checks"].as_array().unwrap();
    assert_eq!(checks.len(), 6);
    assert!(checks.iter().all(|c| c["pass"] == true), "{checks:?}");
}

#[test]
fn mc_tail_reports_insufficient_data() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "kernel.H = 0.5\nf.family = constant\nf.value = 0.2\nmc.checks = tail\nmc.paths = 100\n\
               mc.tail.z = 0.5\nmc.tail.steps = 8\nrate.K = 8\n";
    assert_eq!(run("mc", cfg, dir.path(), &[]).0, 4);
}
