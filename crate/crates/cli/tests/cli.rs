use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn surplus() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_surplus"));
    cmd.env_remove("SURPLUS_OUTPUT_DIR");
    cmd
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

#[test]
fn run_writes_all_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let out = surplus()
        .args(["run", "--dump-matrix", "3"])
        .arg(configs().join("ring4.json"))
        .arg("--out")
        .arg(tmp.path())
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    for f in [
        "trajectory.csv",
        "metrics.csv",
        "summary.json",
        "matrix_k3.csv",
    ] {
        assert!(tmp.path().join(f).exists(), "missing {f}");
    }
    let summary: serde_json::Value =
        serde_json::from_slice(&fs::read(tmp.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["converged"], true);
    let traj = fs::read_to_string(tmp.path().join("trajectory.csv")).unwrap();
    assert_eq!(traj.lines().next(), Some("k,x1,x2,x3,x4,s1,s2,s3,s4"));
    assert_eq!(traj.lines().count(), 2002);
    let m = fs::read_to_string(tmp.path().join("matrix_k3.csv")).unwrap();
    assert_eq!(m.lines().count(), 8);
}

#[test]
fn env_var_sets_output_dir() {
    let tmp = tempfile::tempdir().unwrap();
    let out = surplus()
        .arg("run")
        .arg(configs().join("two_components.json"))
        .env("SURPLUS_OUTPUT_DIR", tmp.path())
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
    assert!(String::from_utf8_lossy(&out.stderr).contains("did not converge"));
    assert!(tmp.path().join("summary.json").exists());
}

#[test]
fn repetitions_get_separate_files() {
    let tmp = tempfile::tempdir().unwrap();
    let out = surplus()
        .arg("run")
        .arg(configs().join("random_uniform.json"))
        .arg("--out")
        .arg(tmp.path())
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
    for r in 0..3 {
        assert!(tmp.path().join(format!("trajectory_rep{r}.csv")).exists());
        assert!(tmp.path().join(format!("metrics_rep{r}.csv")).exists());
    }
    let summary: serde_json::Value =
        serde_json::from_slice(&fs::read(tmp.path().join("summary.json")).unwrap()).unwrap();
    let seeds: Vec<_> = summary["runs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["seed"].as_u64().unwrap())
        .collect();
    assert_eq!(seeds, vec![7, 8, 9]);
}

#[test]
fn compare_writes_table() {
    let tmp = tempfile::tempdir().unwrap();
    let template = write(
        tmp.path(),
        "t.json",
        r#"{"repetitions": 2, "horizon": 100000, "seed": 3}"#,
    );
    let out = surplus()
        .args(["compare", "--n", "3,4"])
        .arg(&template)
        .arg("--out")
        .arg(tmp.path())
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(tmp.path().join("comparison.csv")).unwrap();
    let lines: Vec<_> = csv.lines().collect();
    assert_eq!(lines[0], "n,mean_steps_surplus,mean_steps_baseline,ratio");
    assert!(lines[1].starts_with("3,"));
    assert!(lines[2].starts_with("4,"));
    assert_eq!(String::from_utf8_lossy(&out.stdout), csv);
}

#[test]
fn check_connectivity_verdicts() {
    let sched = configs().join("ring4_schedule.json");
    let ok = surplus()
        .arg("check-connectivity")
        .arg(&sched)
        .args(["--window", "3", "--horizon", "12"])
        .output()
        .unwrap();
    assert_eq!(code(&ok), 0);
    let v: serde_json::Value = serde_json::from_slice(&ok.stdout).unwrap();
    assert_eq!(v["holds"], true);

    let short = surplus()
        .arg("check-connectivity")
        .arg(&sched)
        .args(["--window", "2", "--horizon", "12"])
        .output()
        .unwrap();
    assert_eq!(code(&short), 1);

    let tmp = tempfile::tempdir().unwrap();
    let generated = write(
        tmp.path(),
        "g.json",
        r#"{"generator": "fig3_family", "n": 5}"#,
    );
    let g = surplus()
        .arg("check-connectivity")
        .arg(&generated)
        .args(["--window", "0", "--horizon", "1"])
        .output()
        .unwrap();
    assert_eq!(code(&g), 0);
}

#[test]
fn validate_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let ok = surplus()
        .arg("validate")
        .arg(configs().join("ring4.json"))
        .output()
        .unwrap();
    assert_eq!(code(&ok), 0);

    let missing = surplus()
        .arg("validate")
        .arg(tmp.path().join("nope.json"))
        .output()
        .unwrap();
    assert_eq!(code(&missing), 2);

    let garbage = write(tmp.path(), "bad.json", "{not json");
    assert_eq!(
        code(&surplus().arg("validate").arg(&garbage).output().unwrap()),
        2
    );

    let base = r#""schedule": {"generator": "periodic_ring_4"}, "initial": {"x": [1, 2, 3, 4]}"#;
    let zero_horizon = write(
        tmp.path(),
        "h.json",
        &format!(
            r#"{{{base}, "weights": {{"mode": "uniform", "a": 0.2, "b": 0.2, "eps": 0.2}}, "horizon": 0}}"#
        ),
    );
    assert_eq!(
        code(
            &surplus()
                .arg("validate")
                .arg(&zero_horizon)
                .output()
                .unwrap()
        ),
        3
    );

    let heavy_b = write(
        tmp.path(),
        "w.json",
        &format!(
            r#"{{{base}, "weights": {{"mode": "uniform", "a": 0.2, "b": 0.9, "eps": 0.2}}, "horizon": 5}}"#
        ),
    );
    let out = surplus().arg("validate").arg(&heavy_b).output().unwrap();
    assert_eq!(code(&out), 4);
    assert!(String::from_utf8_lossy(&out.stderr).contains("node"));

    let short_x = write(
        tmp.path(),
        "d.json",
        r#"{"schedule": {"generator": "periodic_ring_4"}, "initial": {"x": [1, 2]},
            "weights": {"mode": "uniform", "a": 0.2, "b": 0.2, "eps": 0.2}, "horizon": 5}"#,
    );
    assert_eq!(
        code(&surplus().arg("validate").arg(&short_x).output().unwrap()),
        5
    );
}
