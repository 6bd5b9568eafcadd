use std::process::Command;

fn bench() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cocob-bench"))
}

#[test]
fn run_writes_csv_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let out = bench()
        .args(["run", "--problem", "abs10", "--optimizer", "cocob", "--iters", "20", "--select", "last"])
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("cocob.csv")).unwrap();
    assert!(csv.starts_with("step,loss,grad_norm,wall_ms\n"));
    assert_eq!(csv.lines().count(), 22);
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("cocob.json")).unwrap()).unwrap();
    assert_eq!(json["selection"], "last");
}

#[test]
fn errors_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        vec!["run", "--problem", "abs10", "--optimizer", "lbfgs"],
        vec!["run", "--problem", "mnist", "--optimizer", "cocob"],
        vec!["run", "--problem", "abs10", "--optimizer", "adam"],
        vec!["grid", "--problem", "abs10", "--optimizer", "sgd", "--lr-grid", "0.1,x"],
    ] {
        let out = bench().args(&args).arg("--out").arg(dir.path()).output().unwrap();
        assert!(!out.status.success(), "{args:?}");
        assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
    }
}

#[test]
fn grid_with_explicit_list() {
    let dir = tempfile::tempdir().unwrap();
    let out = bench()
        .args(["grid", "--problem", "quad@dim=2", "--optimizer", "sgd", "--iters", "10", "--lr-grid", "0.1,0.5"])
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("best lr"));
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 4);
}

#[test]
fn compare_and_verify() {
    let dir = tempfile::tempdir().unwrap();
    let out = bench()
        .args(["compare", "--problem", "quad@dim=2", "--iters", "20", "--lr-grid", "0.01,0.1", "--no-wall-clock"])
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success());
    let summary = std::fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 8);

    let out = bench().args(["verify", "--quick"]).output().unwrap();
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.lines().all(|l| l.starts_with("PASS")));
}
