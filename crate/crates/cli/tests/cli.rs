use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/toy")
}

fn relgat(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_relgat"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn run_writes_record_checkpoint_and_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let data = fixture();
    let res = relgat(&[
        "run",
        "--data",
        path(&data),
        "--layers",
        "2",
        "--relation",
        "absdiff_prod",
        "--missing",
        "40",
        "--seed",
        "1",
        "--epochs",
        "8",
        "--hidden",
        "8",
        "--out",
        path(&out),
    ]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    let stdout = String::from_utf8(res.stdout).unwrap();
    let record: serde_json::Value = serde_json::from_str(stdout.trim()).unwrap();
    assert_eq!(record["relation"], "absdiff_prod");
    assert_eq!(record["dataset"], "toy");
    assert_eq!(record["layers"], 2);
    for f in [
        "record.jsonl",
        "metrics.json",
        "trajectory.csv",
        "model.json",
        "model.bin",
    ] {
        assert!(out.join(f).exists(), "{f}");
    }

    // recomputing from the checkpoint reproduces the run's metrics exactly
    let again = dir.path().join("again.json");
    let res = relgat(&[
        "metrics",
        "--in",
        path(&out.join("model.json")),
        "--data",
        path(&data),
        "--out",
        path(&again),
    ]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    assert_eq!(
        fs::read(out.join("metrics.json")).unwrap(),
        fs::read(&again).unwrap()
    );
}

#[test]
fn sweep_then_summarize() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("sweep.json");
    fs::write(
        &config,
        r#"{"layers": [1, 2], "relations": ["none", "absdiff"], "missing": [0, 100], "seeds": [0, 1], "epochs": 4, "hidden_dim": 8}"#,
    )
    .unwrap();
    let out = dir.path().join("sweep");
    let res = relgat(&[
        "sweep",
        "--data",
        path(&fixture()),
        "--config",
        path(&config),
        "--out",
        path(&out),
        "--workers",
        "2",
    ]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    let records = fs::read_to_string(out.join("records.jsonl")).unwrap();
    assert_eq!(records.lines().count(), 16);

    let res = relgat(&["summarize", "--in", path(&out), "--format", "csv"]);
    assert_eq!(code(&res), 0);
    let table = String::from_utf8(res.stdout).unwrap();
    assert_eq!(table.lines().count(), 1 + 4);
    assert!(table.starts_with("dataset,relation,norm,missing,best_mean_test_acc"));
    let curve = fs::read_to_string(out.join("curve.csv")).unwrap();
    assert_eq!(
        curve.lines().next().unwrap(),
        "dataset,relation,norm,missing,layers,mean_test_acc,sd_test_acc,mean_row_diff,mean_col_diff,mean_r_group,mean_g_ins"
    );
    assert_eq!(curve.lines().count(), 1 + 8);

    let res = relgat(&["summarize", "--in", path(&out), "--format", "md"]);
    assert!(String::from_utf8(res.stdout)
        .unwrap()
        .starts_with("| dataset |"));

    // a second invocation has nothing left to run
    let res = relgat(&[
        "sweep",
        "--data",
        path(&fixture()),
        "--config",
        path(&config),
        "--out",
        path(&out),
        "--workers",
        "1",
    ]);
    assert_eq!(code(&res), 0);
    assert!(String::from_utf8_lossy(&res.stderr).contains("16 skipped, 0 completed"));
    assert_eq!(
        fs::read_to_string(out.join("records.jsonl")).unwrap(),
        records
    );
}

#[test]
fn configuration_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x");
    let data = fixture();
    let bad_relation = relgat(&[
        "run",
        "--data",
        path(&data),
        "--layers",
        "2",
        "--relation",
        "sum",
        "--out",
        path(&out),
    ]);
    assert_eq!(code(&bad_relation), 2);
    let zero_layers = relgat(&[
        "run",
        "--data",
        path(&data),
        "--layers",
        "0",
        "--out",
        path(&out),
    ]);
    assert_eq!(code(&zero_layers), 2);
    let bad_missing = relgat(&[
        "run",
        "--data",
        path(&data),
        "--layers",
        "1",
        "--missing",
        "120",
        "--out",
        path(&out),
    ]);
    assert_eq!(code(&bad_missing), 2);

    let config = dir.path().join("bad.json");
    fs::write(&config, r#"{"layerz": [1]}"#).unwrap();
    let res = relgat(&[
        "sweep",
        "--data",
        path(&data),
        "--config",
        path(&config),
        "--out",
        path(&out),
    ]);
    assert_eq!(code(&res), 2);
    fs::write(&config, r#"{"seeds": []}"#).unwrap();
    let res = relgat(&[
        "sweep",
        "--data",
        path(&data),
        "--config",
        path(&config),
        "--out",
        path(&out),
    ]);
    assert_eq!(code(&res), 2);
    assert!(!out.exists());

    let empty = tempfile::tempdir().unwrap();
    assert_eq!(code(&relgat(&["summarize", "--in", path(empty.path())])), 2);
}

#[test]
fn data_errors_exit_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x");
    let res = relgat(&[
        "run",
        "--data",
        path(&dir.path().join("nowhere")),
        "--layers",
        "2",
        "--out",
        path(&out),
    ]);
    assert_eq!(code(&res), 3);

    let broken = dir.path().join("broken");
    fs::create_dir(&broken).unwrap();
    for f in [
        "features.csv",
        "labels.csv",
        "edges.csv",
        "splits.json",
        "meta.json",
    ] {
        fs::copy(fixture().join(f), broken.join(f)).unwrap();
    }
    fs::write(broken.join("edges.csv"), "0,1\n2,x\n").unwrap();
    let res = relgat(&[
        "run",
        "--data",
        path(&broken),
        "--layers",
        "2",
        "--out",
        path(&out),
    ]);
    assert_eq!(code(&res), 3);
    assert!(String::from_utf8_lossy(&res.stderr).contains("edges.csv"));
}

#[test]
fn divergence_exits_with_4() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x");
    let res = relgat(&[
        "run",
        "--data",
        path(&fixture()),
        "--layers",
        "2",
        "--lr",
        "1e300",
        "--epochs",
        "3",
        "--out",
        path(&out),
    ]);
    assert_eq!(code(&res), 4, "{}", String::from_utf8_lossy(&res.stderr));
    assert!(String::from_utf8_lossy(&res.stderr).contains("diverged at epoch"));
}

#[test]
fn synth_output_loads_back() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("g");
    assert_eq!(
        code(&relgat(&["synth", "--out", path(&out), "--seed", "3"])),
        0
    );
    let res = relgat(&[
        "run",
        "--data",
        path(&out),
        "--layers",
        "1",
        "--epochs",
        "2",
        "--hidden",
        "4",
        "--out",
        path(&dir.path().join("r")),
    ]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
}
