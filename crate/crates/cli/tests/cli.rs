use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn sierl(args: &[&str], root: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sierl")).args(args).env("SIERL_OUTPUT_ROOT", root).output().expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

const TRAIN: &[&str] = &[
    "train",
    "--env",
    "hallway2",
    "--method",
    "sierl",
    "--seed",
    "1,2",
    "--total-steps",
    "2000",
    "--eval-period",
    "500",
];

#[test]
fn train_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let mut a = TRAIN.to_vec();
    a.extend(["--output-dir", "a"]);
    let mut b = TRAIN.to_vec();
    b.extend(["--output-dir", "b"]);
    ok(&sierl(&a, tmp.path()));
    ok(&sierl(&b, tmp.path()));
    for rel in ["metrics.csv", "seed_1/metrics.csv", "seed_2/metrics.csv"] {
        assert_eq!(
            fs::read(tmp.path().join("a").join(rel)).unwrap(),
            fs::read(tmp.path().join("b").join(rel)).unwrap()
        );
    }
    let rows = fs::read_to_string(tmp.path().join("a/metrics.csv")).unwrap().lines().count();
    assert_eq!(rows, 1 + 2000 / 500 + 1);
}

#[test]
fn config_file_and_overrides() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.cfg");
    fs::write(&cfg, "# small run\nenv = hallway2\nmethod = qlearn\nseeds = 5\ntotal_steps = 1000\neval_period = 1000\noutput_dir = from_file\n").unwrap();
    let out = ok(&sierl(&["train", "--config", cfg.to_str().unwrap(), "--output-dir=over"], tmp.path()));
    assert!(out.contains("metrics:"));
    assert!(tmp.path().join("over/seed_5/checkpoint.txt").is_file());
    assert!(!tmp.path().join("from_file").exists());
    let text = fs::read_to_string(tmp.path().join("over/config.txt")).unwrap();
    assert!(text.starts_with("# hash "));
    assert!(text.contains("method = qlearn"));
}

#[test]
fn eval_coverage_and_plot_from_a_run() {
    let tmp = tempfile::tempdir().unwrap();
    let mut args = TRAIN.to_vec();
    args.extend(["--output-dir", "run"]);
    ok(&sierl(&args, tmp.path()));
    let seed_dir = tmp.path().join("run/seed_1");

    let ckpt = seed_dir.join("checkpoint.txt");
    let out = ok(&sierl(&["eval", "--checkpoint", ckpt.to_str().unwrap(), "--main-episodes", "3"], tmp.path()));
    let report: serde_json::Value = serde_json::from_str(out.trim()).unwrap();
    assert_eq!(report["main_outcomes"].as_array().unwrap().len(), 3);
    assert!(report["random_success"].as_f64().is_some());

    let cov = seed_dir.join("coverage.csv");
    ok(&sierl(&["coverage", "--input", cov.to_str().unwrap(), "--output", "cov/final"], tmp.path()));
    assert!(fs::read_to_string(tmp.path().join("cov/final.svg")).unwrap().starts_with("<svg"));
    assert!(tmp.path().join("cov/final.csv").is_file());
    let missing = sierl(&["coverage", "--input", cov.to_str().unwrap(), "--step", "7", "--output", "x"], tmp.path());
    assert!(!missing.status.success());

    let metrics = tmp.path().join("run/metrics.csv");
    ok(&sierl(&["plot", "--output", "curves.svg", metrics.to_str().unwrap()], tmp.path()));
    assert!(fs::read_to_string(tmp.path().join("curves.svg")).unwrap().contains("polyline"));
}

#[test]
fn sweep_over_ablations() {
    let tmp = tempfile::tempdir().unwrap();
    let args = [
        "sweep",
        "--param",
        "ablation",
        "--values",
        "none,no_prioritization",
        "--env",
        "hallway2",
        "--seed",
        "1",
        "--total-steps",
        "1000",
        "--output-dir",
        "abl",
    ];
    ok(&sierl(&args, tmp.path()));
    let cmp = fs::read_to_string(tmp.path().join("abl/comparison.csv")).unwrap();
    assert_eq!(cmp.lines().count(), 3);
    assert!(tmp.path().join("abl/ablation_no_prioritization/metrics.csv").is_file());
}

#[test]
fn errors_are_structured() {
    let tmp = tempfile::tempdir().unwrap();
    for (args, kind) in [
        (vec!["train", "--env", "hallway2", "--bogus", "1"], "config"),
        (vec!["train", "--env", "moon"], "config"),
        (vec!["train", "--env", "hallway2", "--softmin-temp", "-1"], "config"),
        (vec!["eval", "--checkpoint", "/nonexistent/ckpt.txt"], "checkpoint"),
    ] {
        let out = sierl(&args, tmp.path());
        assert_eq!(out.status.code(), Some(1), "{args:?}");
        let err: serde_json::Value = serde_json::from_str(String::from_utf8_lossy(&out.stderr).trim()).unwrap();
        assert_eq!(err["error"], kind, "{args:?}");
        assert!(!err["message"].as_str().unwrap().is_empty());
    }
}
