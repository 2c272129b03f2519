use hapc_core::harness::MuscleFile;
use hapc_core::FatigueParams;
use std::path::Path;
use std::process::{Command, Output};

fn hapc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hapc")).args(args).output().unwrap()
}

fn arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn ok(out: &Output) {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn run_writes_trace_metrics_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = hapc(&["run", "--variant", "HAPC", "--cycles", "3", "--seed", "4", "--out-dir", arg(dir.path())]);
    ok(&out);
    for f in ["trace.csv", "metrics.csv", "summary.csv"] {
        assert!(dir.path().join(f).is_file(), "{f} missing");
    }
    let trace = std::fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    let header = trace.lines().next().unwrap();
    assert!(header.starts_with("t_s,side,hip_q,knee_q,hip_qref,knee_qref,hip_eps,knee_eps"));
    assert!(header.contains("r_fesb"));
    assert!(trace.lines().count() > 100);
    let metrics = std::fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
    // one row per cycle per leg
    assert_eq!(metrics.lines().count(), 1 + 2 * 3);
}

#[test]
fn compare_is_reproducible_byte_for_byte() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        ok(&hapc(&["compare", "--cycles", "3", "--seed", "7", "--out-dir", arg(d.path())]));
    }
    let mut names: Vec<_> = std::fs::read_dir(a.path())
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    assert_eq!(names.len(), 13);
    for n in &names {
        let x = std::fs::read(a.path().join(n)).unwrap();
        let y = std::fs::read(b.path().join(n)).unwrap();
        assert!(x == y, "{n:?} differs");
    }
}

#[test]
fn bad_config_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "n_cycles = 0\n").unwrap();
    let out = hapc(&["run", "--config", arg(&cfg), "--out-dir", arg(dir.path())]);
    assert_eq!(out.status.code(), Some(2));

    std::fs::write(&cfg, "n_cycles = [\n").unwrap();
    let out = hapc(&["run", "--config", arg(&cfg), "--out-dir", arg(dir.path())]);
    assert_eq!(out.status.code(), Some(2));

    let missing = dir.path().join("missing.toml");
    let out = hapc(&["run", "--config", arg(&missing), "--out-dir", arg(dir.path())]);
    assert_ne!(out.status.code(), Some(0));
}

#[test]
fn divergence_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("runaway.toml");
    std::fs::write(
        &cfg,
        "controller_variant = \"EPC\"\nn_cycles = 4\nplant_substep = 0.001\n\n[exo]\nbaseline_stiffness = 1e9\ntorque_limit = 1e12\n",
    )
    .unwrap();
    let out = hapc(&["run", "--config", arg(&cfg), "--out-dir", arg(dir.path())]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn unknown_muscle_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = hapc(&["synthesize", "--muscle", "left_elbow", "--out", arg(&dir.path().join("x.csv"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn synthesized_session_identifies_back() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("session.csv");
    let params = dir.path().join("muscle.toml");
    ok(&hapc(&["synthesize", "--muscle", "right_quadriceps", "--out", arg(&trace)]));
    let out = hapc(&["identify", "--trace", arg(&trace), "--muscle", "right_quadriceps", "--out", arg(&params)]);
    ok(&out);
    let file = MuscleFile::load(&params).unwrap();
    assert_eq!(file.muscles.len(), 1);
    let fitted = file.muscles[0].params;
    let truth = FatigueParams::RIGHT_QUADRICEPS;
    // thresholds resolve to one 50 us staircase step
    assert!((fitted.u_thr - truth.u_thr).abs() <= 50.0);
    assert!((fitted.u_sat - truth.u_sat).abs() <= 50.0);
    assert!((fitted.t_fat / truth.t_fat - 1.0).abs() < 0.05, "{} vs {}", fitted.t_fat, truth.t_fat);
}
