use std::path::Path;
use std::process::{Command, Output};

use monodomain_funnel::funnel::FunnelRadius;
use monodomain_funnel::integrate::{Sample, TrajectoryLog};
use monodomain_funnel::io;

fn fhn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fhn-funnel"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

/// One-channel log whose error norm is `e` against the funnel radius `r(t) = 1 + t`.
fn synthetic_log(e: impl Fn(f64) -> f64) -> TrajectoryLog {
    let mut log = TrajectoryLog::new(1);
    for k in 0..=40 {
        let t = 0.05 * k as f64;
        let e = e(t);
        let r = 1.0 + t;
        log.samples.push(Sample {
            t,
            y: vec![e],
            y_ref: vec![0.0],
            e_norm: e,
            funnel_radius: FunnelRadius::Bounded(r),
            i_se: vec![-e],
            v_l2: 1.0,
            u_l2: 0.0,
            margin: r - e,
        });
    }
    log
}

fn write_log(dir: &Path, name: &str, log: &TrajectoryLog) -> String {
    let path = dir.join(name);
    io::write_trajectory(log, &path).unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn no_arguments_is_a_usage_error() {
    assert_eq!(code(&fhn(&[])), 2);
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    assert_eq!(code(&fhn(&["defibrillate"])), 2);
}

#[test]
fn help_exits_cleanly() {
    let out = fhn(&["--help"]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("track"));
}

#[test]
fn malformed_mesh_flag_is_rejected() {
    assert_eq!(code(&fhn(&["reference", "--mesh", "64by64"])), 2);
}

#[test]
fn invalid_config_reports_key_and_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "[model]\nc1 = 1.614\nc3 = -1.0\n").unwrap();
    let out = fhn(&["reference", "--config", path.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("model.c3"), "{err}");
    assert!(err.contains('3'), "{err}");
}

#[test]
fn config_for_another_scenario_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("track.toml");
    std::fs::write(&path, "scenario = \"track\"\n").unwrap();
    assert_eq!(code(&fhn(&["converge", "--config", path.to_str().unwrap()])), 2);
}

#[test]
fn missing_log_is_an_io_error() {
    assert_eq!(code(&fhn(&["verify", "--log", "/nonexistent/track.csv", "--check", "funnel"])), 2);
}

#[test]
fn verify_funnel_passes_inside_and_fails_on_contact() {
    let dir = tempfile::tempdir().unwrap();
    let inside = write_log(dir.path(), "inside.csv", &synthetic_log(|t| 0.5 * (-t).exp()));
    let out = fhn(&["verify", "--log", &inside, "--check", "funnel"]);
    assert_eq!(code(&out), 0, "{}", stdout(&out));
    assert!(stdout(&out).contains("PASS"));

    let touching = write_log(dir.path(), "touching.csv", &synthetic_log(|t| if t >= 1.0 { 1.0 + t } else { 0.1 }));
    let out = fhn(&["verify", "--log", &touching, "--check", "funnel"]);
    assert_eq!(code(&out), 1, "{}", stdout(&out));
    assert!(stdout(&out).contains("FAIL"));
}

#[test]
fn verify_rejects_unknown_check() {
    let dir = tempfile::tempdir().unwrap();
    let log = write_log(dir.path(), "log.csv", &synthetic_log(|_| 0.1));
    assert_eq!(code(&fhn(&["verify", "--log", &log, "--check", "lyapunov"])), 2);
}

#[test]
fn truncated_csv_is_a_format_error() {
    let dir = tempfile::tempdir().unwrap();
    let log = write_log(dir.path(), "log.csv", &synthetic_log(|_| 0.1));
    let mut text = std::fs::read_to_string(&log).unwrap();
    text.truncate(text.len() - 5);
    text.push_str(",x\n");
    std::fs::write(&log, text).unwrap();
    assert_eq!(code(&fhn(&["verify", "--log", &log, "--check", "funnel"])), 2);
}

#[test]
fn diffusion_test_on_a_small_mesh() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().to_str().unwrap();
    let out = fhn(&["diffusion-test", "--mesh", "16", "--modes", "4", "--out", out_dir]);
    // the 2% FEM band is sized for 64x64; 16x16 still meets it for the (1, 0) mode
    assert_eq!(code(&out), 0, "{}", stdout(&out));
    assert!(dir.path().join("report-diffusion-test.json").exists());
}

#[test]
fn converge_on_a_small_mesh() {
    let dir = tempfile::tempdir().unwrap();
    let out = fhn(&["converge", "--mesh", "24", "--modes", "8", "--t-end", "2", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stdout(&out));
    let text = std::fs::read_to_string(dir.path().join("report-converge.txt")).unwrap();
    assert!(text.contains("cross-discretization"));
}

#[test]
fn reentry_exits_one_when_activity_dies_out() {
    let dir = tempfile::tempdir().unwrap();
    let out = fhn(&["reentry", "--mesh", "8", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    assert!(!dir.path().join("reentry.snap").exists());
}

#[test]
fn track_is_bitwise_reproducible() {
    let run = || {
        let dir = tempfile::tempdir().unwrap();
        let out = fhn(&["track", "--mesh", "8", "--t-end", "10", "--out", dir.path().to_str().unwrap()]);
        assert_eq!(code(&out), 0, "{}", stdout(&out));
        for f in ["reference.csv", "reentry.snap", "report-track.txt", "report-track.json"] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        let csv = std::fs::read(dir.path().join("track.csv")).unwrap();
        let log = io::read_trajectory(&dir.path().join("track.csv")).unwrap();
        assert_eq!(log.samples.last().unwrap().t, 10.0);
        csv
    };
    assert_eq!(run(), run());
}
