use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn rhg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rhg"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn bundled(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

/// Two homes, one day, generous limits.
fn small_scenario(dir: &Path, e_min: f64) -> PathBuf {
    let home = |id: &str| {
        serde_json::json!({
            "id": id,
            "battery": {"alpha": 0.995, "beta": 0.9, "q_max": 5.0, "s_eff_min": -2.0, "s_eff_max": 2.0},
            "flex": {"e_min": e_min, "e_max": 3.0, "l_max": 6.0, "gamma1": 0.05, "gamma2": 0.01}
        })
    };
    let scn = serde_json::json!({
        "name": "small",
        "steps": 24,
        "horizon": 6,
        "prosumers": [home("a"), home("b")],
        "profiles": {"synthetic": {"seed": 3, "solar_peak": 0.0}},
        "prices": {"peak": {"rho1": 0.02, "rho2": 0.05, "multiplier": 2.0, "windows": [[18, 22]]}},
        "aggregate_limits": {"constant": {"l_min": 0.0, "l_max": 30.0}}
    });
    let path = dir.join("small.json");
    std::fs::write(&path, serde_json::to_string_pretty(&scn).unwrap()).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn validate_accepts_bundled_scenarios() {
    for name in ["ny_peak_shaving.json", "disturbance_60pct.json"] {
        let out = rhg(&["validate", "--scenario", s(&bundled(name))]);
        assert!(out.status.success(), "{name}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn validate_names_the_bad_field() {
    let dir = tempfile::tempdir().unwrap();
    let path = small_scenario(dir.path(), 4.0);
    let out = rhg(&["validate", "--scenario", s(&path)]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("e_min"), "{err}");
}

#[test]
fn missing_file_is_an_input_error() {
    let out = rhg(&["validate", "--scenario", "/nonexistent/scenario.json"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn simulate_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let path = small_scenario(dir.path(), 0.2);
    let out_dir = dir.path().join("out");
    for mode in ["rhg", "day-ahead", "none"] {
        let out = rhg(&["simulate", "--scenario", s(&path), "--mode", mode, "--out", s(&out_dir)]);
        assert!(out.status.success(), "{mode}: {}", String::from_utf8_lossy(&out.stderr));
        for file in ["trace.csv", "aggregate.csv", "metrics.json"] {
            assert!(out_dir.join(file).exists(), "{mode} {file}");
        }
        let metrics: serde_json::Value =
            serde_json::from_slice(&std::fs::read(out_dir.join("metrics.json")).unwrap()).unwrap();
        assert_eq!(metrics["mode"], mode);
        assert_eq!(metrics["steps"], 24);
    }
}

#[test]
fn infeasible_step_exits_with_solver_code() {
    let dir = tempfile::tempdir().unwrap();
    let path = small_scenario(dir.path(), 0.2);
    let mut scn: serde_json::Value = serde_json::from_slice(&std::fs::read(&path).unwrap()).unwrap();
    scn["disturbances"] = serde_json::json!([
        {"kind": "aggregate_limit_scale", "start": 4, "duration": 2, "magnitude": 0.01, "visibility": "unforeseen"}
    ]);
    std::fs::write(&path, scn.to_string()).unwrap();
    let out_dir = dir.path().join("out");
    let out = rhg(&["simulate", "--scenario", s(&path), "--out", s(&out_dir)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("step 4"));
    // the partial trace is still written
    let agg = std::fs::read_to_string(out_dir.join("aggregate.csv")).unwrap();
    assert_eq!(agg.lines().count(), 5);
}

#[test]
fn day_ahead_violates_during_the_drop() {
    let dir = tempfile::tempdir().unwrap();
    let out = rhg(&[
        "simulate",
        "--scenario",
        s(&bundled("disturbance_60pct.json")),
        "--mode",
        "day-ahead",
        "--out",
        s(dir.path()),
    ]);
    assert!(out.status.success());
    let metrics: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("metrics.json")).unwrap()).unwrap();
    assert!(metrics["violations"].as_u64().unwrap() >= 1);
}

#[test]
fn gradcheck_passes_on_bundled_scenario() {
    let out = rhg(&[
        "gradcheck",
        "--scenario",
        s(&bundled("ny_peak_shaving.json")),
        "--samples",
        "3",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("pseudo-gradient max relative error"));
}

#[test]
fn steady_state_prints_every_prosumer() {
    let dir = tempfile::tempdir().unwrap();
    let path = small_scenario(dir.path(), 0.2);
    let out = rhg(&["steady-state", "--scenario", s(&path), "--step", "3"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.starts_with("id,zeta,q,e,s\na,") && text.contains("\nb,"));
    let out = rhg(&["steady-state", "--scenario", s(&path), "--step", "99"]);
    assert_eq!(out.status.code(), Some(1));
}
