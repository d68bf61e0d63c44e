use std::fs;
use std::process::{Command, Output};

fn lab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_coupling-lab"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn geometry_prints_constant_and_shells() {
    let out = stdout(&lab(&["geometry", "--cells", "64", "--shells", "3"]));
    assert!(out.contains("a "), "{out}");
    assert!(out.contains("1.5000"), "{out}");
    // header plus U_0..U_3
    let rows = out.lines().skip_while(|l| !l.trim_start().starts_with('j')).count();
    assert_eq!(rows, 5, "{out}");
}

#[test]
fn solve_writes_row_and_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    let out = stdout(&lab(&[
        "solve",
        "--cells",
        "32",
        "--lambda",
        "1000",
        "--t-end",
        "0.01",
        "--out",
        run.to_str().unwrap(),
    ]));
    let mut lines = out.lines();
    assert!(lines.next().unwrap().starts_with("lambda,nu,gamma,a,h,dt"));
    assert!(lines.next().unwrap().starts_with("1e3,2.5e-1,"));
    assert!(run.join("report.json").exists());
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("case.toml");
    fs::write(&cfg, "cells = 24\nlambda = 100.0\nt_end = 0.01\nnu = 0.2\n").unwrap();
    let path = cfg.to_str().unwrap();
    let from_file = stdout(&lab(&["solve", "-c", path]));
    let row: Vec<&str> = from_file.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[0], "1e2");
    assert_eq!(row[1], "2e-1");
    let overridden = stdout(&lab(&["solve", "-c", path, "--lambda", "300", "--dt", "1e-4"]));
    let row: Vec<&str> = overridden.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[0], "3e2");
    assert_eq!(row[1], "2e-1");
    assert_eq!(row[5], "1e-4");
}

#[test]
fn sweep_then_fit() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("s.csv");
    let o = lab(&[
        "sweep",
        "--cells",
        "32",
        "--t-end",
        "0.02",
        "--lambdas",
        "100,300,1000,3000",
        "--csv",
        csv.to_str().unwrap(),
    ]);
    stdout(&o);
    assert_eq!(fs::read_to_string(&csv).unwrap().lines().count(), 5);
    let fit = stdout(&lab(&["fit", csv.to_str().unwrap()]));
    assert!(fit.contains("exp-sqrt") || fit.contains("best:"), "{fit}");
    assert!(fit.lines().any(|l| l.starts_with("best: ")), "{fit}");
}

#[test]
fn bad_input_fails_cleanly() {
    let o = lab(&["solve", "--cells", "16", "--nu", "0.6"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("error:"));
    let o = lab(&["fit", "/nonexistent/file.csv"]);
    assert!(!o.status.success());
}
