//! End-to-end exercises of the command-line interface through the real
//! binary: exit codes, file outputs, pipeline determinism.

use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_momheat")
}

fn workdir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("momheat-cli-{}-{tag}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_zero_data_config(dir: &Path, degree: u32) -> PathBuf {
    let path = dir.join("config.toml");
    let text = format!(
        r#"
lambda = 0.5
alpha = 5.134802200544679
eta = 0.0
R = 0.001
y0_coeffs = [0.0]
y_box = [-1.2, 1.2]
z_box = [-12.0, 12.0, -6.0, 6.0]
u_box = [-1.2, 1.2]
relaxation_degree = {degree}

[solver]
tol = 1e-7
max_iter = 200
cone_slack = 1e-7

[sim]
h = 0.02
dt = 1e-3
horizon = 0.1
"#
    );
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn usage_error_gives_exit_one() {
    let out = Command::new(bin()).arg("frobnicate").output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn missing_config_gives_io_exit() {
    let out = Command::new(bin())
        .args(["relax", "--config", "/nonexistent.toml", "--out", "/tmp/x"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn odd_degree_rejected() {
    let dir = workdir("odd");
    let cfg = write_zero_data_config(&dir, 3);
    let out = Command::new(bin())
        .args([
            "relax",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            dir.join("m.txt").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1), "config validation is a usage error");
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("even"), "stderr: {err}");
}

#[test]
fn zero_data_pipeline_and_determinism() {
    let dir = workdir("pipeline");
    let cfg = write_zero_data_config(&dir, 4);
    let moments = dir.join("moments.txt");

    // relax: zero-data instance solves to (near) zero objective, exit 0.
    let out = Command::new(bin())
        .args([
            "relax",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            moments.to_str().unwrap(),
            "--dump-program",
            dir.join("program.txt").to_str().unwrap(),
            "--export-sdpa",
            dir.join("program.dat-s").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(
        out.status.code(),
        Some(0),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let stdout = String::from_utf8_lossy(&out.stdout);
    let bound: f64 = stdout
        .split_whitespace()
        .nth(2)
        .and_then(|t| t.parse().ok())
        .expect("bound printed");
    assert!(bound.abs() < 1e-6, "zero-data objective ~ 0, got {bound}");
    assert!(dir.join("program.txt").exists());
    assert!(dir.join("program.dat-s").exists());

    // Deterministic: re-running produces an identical moments file.
    let moments2 = dir.join("moments2.txt");
    let out2 = Command::new(bin())
        .args([
            "relax",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            moments2.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out2.status.code(), Some(0));
    let a = std::fs::read(&moments).unwrap();
    let b = std::fs::read(&moments2).unwrap();
    assert_eq!(a, b, "pipeline must be deterministic");

    // extract with an over-budget p fails with the inequality in stderr.
    let out = Command::new(bin())
        .args([
            "extract",
            "--moments",
            moments.to_str().unwrap(),
            "--out",
            dir.join("bad.toml").to_str().unwrap(),
            "--form",
            "linear",
            "--m",
            "0",
            "--p",
            "9",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("p <= d - m - 1"));

    // extract a valid controller.
    let ctrl = dir.join("ctrl.toml");
    let out = Command::new(bin())
        .args([
            "extract",
            "--moments",
            moments.to_str().unwrap(),
            "--out",
            ctrl.to_str().unwrap(),
            "--form",
            "linear",
            "--m",
            "0",
            "--p",
            "3",
        ])
        .output()
        .unwrap();
    assert_eq!(
        out.status.code(),
        Some(0),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );

    // simulate with zero controller on zero data: zero cost.
    let out = Command::new(bin())
        .args([
            "simulate",
            "--config",
            cfg.to_str().unwrap(),
            "--out-prefix",
            dir.join("zrun").to_str().unwrap(),
            "--stride",
            "1",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("cost 0"), "stdout: {stdout}");
    assert!(dir.join("zrun_y.csv").exists());
    assert!(dir.join("zrun_u.csv").exists());
    assert!(dir.join("zrun_summary.toml").exists());

    // CSV parses back to the same trace (round trip through the library).
    let trace = momheat_core::pdesim::read_trace_csv(
        &dir.join("zrun_y.csv"),
        &dir.join("zrun_u.csv"),
    )
    .unwrap();
    assert!(trace.times.len() > 10);
    assert!(trace.states.iter().all(|s| s.iter().all(|&v| v == 0.0)));

    // lqr writes a loadable controller; compare runs and reports.
    let lqr = dir.join("lqr.toml");
    let out = Command::new(bin())
        .args([
            "lqr",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            lqr.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(
        out.status.code(),
        Some(0),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report = dir.join("report.toml");
    let out = Command::new(bin())
        .args([
            "compare",
            "--config",
            cfg.to_str().unwrap(),
            "--controller",
            ctrl.to_str().unwrap(),
            "--lqr-controller",
            lqr.to_str().unwrap(),
            "--out-prefix",
            dir.join("cmp").to_str().unwrap(),
            "--report",
            report.to_str().unwrap(),
            "--moments",
            moments.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(
        out.status.code(),
        Some(0),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let rep = std::fs::read_to_string(&report).unwrap();
    assert!(rep.contains("moment_cost"));
    assert!(rep.contains("sdp_lower_bound"));

    // sweep ranks candidates and writes the best one.
    let best = dir.join("best.toml");
    let out = Command::new(bin())
        .args([
            "sweep",
            "--config",
            cfg.to_str().unwrap(),
            "--moments",
            moments.to_str().unwrap(),
            "--forms",
            "linear",
            "--max-m",
            "1",
            "--out",
            best.to_str().unwrap(),
            "--horizon",
            "0.05",
        ])
        .output()
        .unwrap();
    assert_eq!(
        out.status.code(),
        Some(0),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(best.exists());
}

#[test]
fn moments_dump_block_sizes() {
    // The degree-4 dump carries all five measures with the documented
    // entry counts: 126 for the 5-variable measures, 70 for the others.
    let dir = workdir("dump");
    let cfg = write_zero_data_config(&dir, 4);
    let moments = dir.join("moments.txt");
    let out = Command::new(bin())
        .args([
            "relax",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            moments.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = std::fs::read_to_string(&moments).unwrap();
    assert!(text.contains("measure mu vars t x y z1 z2 count 126"));
    assert!(text.contains("measure mu_I vars x y z1 z2 count 70"));
    assert!(text.contains("measure mu_E vars t y z1 z2 u count 126"));
}
