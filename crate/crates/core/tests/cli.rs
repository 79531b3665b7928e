use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use pdcert::certify::{build_region_lmis, validate_certificate};
use pdcert::cli::{load_certificate, load_problem};

fn problem(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("problems").join(name)
}

fn pdcert(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pdcert"))
        .args(args)
        .env_remove("PDCERT_SEED")
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn csv_rows(path: &Path) -> Vec<csv::StringRecord> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records().map(|x| x.unwrap()).collect()
}

#[test]
fn simulate_reaches_the_optimum() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("traj.csv");
    let o = pdcert(&["simulate", "--problem", s(&problem("hinge_example.json")), "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = csv_rows(&out);
    let header = csv::Reader::from_path(&out).unwrap().headers().unwrap().clone();
    let col = header.iter().position(|h| h == "err_norm").unwrap();
    let last: f64 = rows.last().unwrap()[col].parse().unwrap();
    assert!(last <= 1e-4, "final error {last}");
}

#[test]
fn zero_horizon_writes_only_the_initial_row() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("traj.csv");
    let o = pdcert(&[
        "simulate",
        "--problem",
        s(&problem("hinge_example.json")),
        "--horizon",
        "0",
        "--x0",
        "1,-2",
        "--lam0",
        "0.5",
        "--out",
        s(&out),
    ]);
    assert!(o.status.success());
    let rows = csv_rows(&out);
    assert_eq!(rows.len(), 1);
    assert_eq!(&rows[0][1], "1");
    assert_eq!(&rows[0][2], "-2");
    assert_eq!(&rows[0][3], "0.5");
}

#[test]
fn seed_controls_the_initial_multiplier() {
    let dir = tempfile::tempdir().unwrap();
    let run = |seed: &str, name: &str| {
        let out = dir.path().join(name);
        let o = pdcert(&[
            "simulate",
            "--problem",
            s(&problem("hinge_example.json")),
            "--horizon",
            "0",
            "--seed",
            seed,
            "--out",
            s(&out),
        ]);
        assert!(o.status.success());
        fs::read_to_string(out).unwrap()
    };
    assert_eq!(run("7", "a.csv"), run("7", "b.csv"));
    assert_ne!(run("7", "a.csv"), run("8", "c.csv"));
}

#[test]
fn malformed_input_exits_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, "{\n  \"n\": 2,\n  \"quadratic\": [\n").unwrap();
    let out = dir.path().join("traj.csv");
    let o = pdcert(&["simulate", "--problem", s(&bad), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bad.json:"));

    let missing = dir.path().join("missing.json");
    let o = pdcert(&["certify", "--problem", s(&missing), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn certify_unconstrained_writes_a_certificate_that_validates() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("cert.json");
    let o = pdcert(&[
        "certify",
        "--problem",
        s(&problem("unconstrained.json")),
        "--tol",
        "1e-2",
        "--out",
        s(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let file = load_certificate(&out).unwrap();
    assert!(file.alpha > 0.9 && file.alpha <= 1.0, "{}", file.alpha);
    let cert = file.to_certificate().unwrap();
    let (spec, _) = load_problem(&problem("unconstrained.json")).unwrap();
    let lmis = build_region_lmis(&spec).unwrap();
    assert!(validate_certificate(&lmis, &cert, 1e-6).unwrap().passed());
}

#[test]
fn zero_strong_convexity_is_not_certifiable() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("cert.json");
    let o = pdcert(&["certify", "--problem", s(&problem("zero_mu_free.json")), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(4));
    assert!(!out.exists());
}

#[test]
fn clm_modes_produce_witnesses() {
    let dir = tempfile::tempdir().unwrap();
    for (file, mode) in [
        ("hinge_example.json", "constructive"),
        ("hinge_example.json", "sdp"),
        ("unconstrained.json", "constructive"),
    ] {
        let out = dir.path().join(format!("{mode}-{file}"));
        let o = pdcert(&["clm", "--problem", s(&problem(file)), "--mode", mode, "--out", s(&out)]);
        assert!(o.status.success(), "{file} {mode}: {}", String::from_utf8_lossy(&o.stderr));
        let doc: serde_json::Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
        assert!(doc["grid"]["min_margin"].as_f64().unwrap() > 0.0);
    }
}

#[test]
fn clm_without_strong_convexity_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("clm.json");
    let o = pdcert(&[
        "clm",
        "--problem",
        s(&problem("zero_mu_free.json")),
        "--mode",
        "sdp",
        "--out",
        s(&out),
    ]);
    assert_eq!(o.status.code(), Some(5));
}

#[test]
fn unwritable_output_directory_exits_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let target = blocker.join("sub");
    let o = pdcert(&["reproduce", "--out", s(&target), "--no-plots"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn reproduce_writes_all_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let o = pdcert(&["repro-paper", "--out", s(dir.path())]);
    let stdout = String::from_utf8_lossy(&o.stdout);
    for name in [
        "trajectory.csv",
        "error.csv",
        "certificate.json",
        "summary.txt",
        "trajectory.svg",
        "trajectory_error.svg",
    ] {
        assert!(dir.path().join(name).exists(), "{name} missing");
    }
    let summary = fs::read_to_string(dir.path().join("summary.txt")).unwrap();
    assert!(summary.contains("alpha"));
    // The exit status mirrors the checks in the summary.
    assert_eq!(o.status.success(), !stdout.contains("FAIL"), "{stdout}");
    let cert = load_certificate(&dir.path().join("certificate.json")).unwrap();
    let (spec, _) = load_problem(&problem("hinge_example.json")).unwrap();
    let lmis = build_region_lmis(&spec).unwrap();
    assert!(validate_certificate(&lmis, &cert.to_certificate().unwrap(), 1e-6)
        .unwrap()
        .passed());
}
