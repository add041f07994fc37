//! End-to-end tests of the `bocf` binary: exit codes, artifact layout,
//! determinism, and the stdout contracts of every subcommand.

use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_bocf");

fn bocf(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn stdout_str(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn stderr_str(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).unwrap()
}

fn assert_code(out: &Output, code: i32) {
    assert_eq!(
        out.status.code(),
        Some(code),
        "stdout:\n{}\nstderr:\n{}",
        stdout_str(out),
        stderr_str(out)
    );
}

/// Generates a small patchwork dataset and returns its manifest path.
fn gensynth(dir: &Path, out: &str, extra: &[&str]) -> String {
    let mut args = vec!["gensynth", "--out-dir", out];
    args.extend_from_slice(extra);
    let run = bocf(dir, &args);
    assert_code(&run, 0);
    format!("{}/manifest.csv", out)
}

/// Flags for a model small enough to train in well under a second per epoch.
const TINY_MODEL: [&str; 10] = [
    "--conv-layers",
    "2",
    "--filters",
    "4",
    "--codebook",
    "8",
    "--hidden",
    "8",
    "--input-size",
    "16",
];

#[test]
fn help_and_version_exit_zero() {
    let dir = TempDir::new().unwrap();
    for args in [&["--help"][..], &["--version"][..], &["train", "--help"][..]] {
        let out = bocf(dir.path(), args);
        assert_code(&out, 0);
    }
}

#[test]
fn usage_errors_exit_one() {
    let dir = TempDir::new().unwrap();
    let unknown_flag = bocf(dir.path(), &["--bogus"]);
    assert_code(&unknown_flag, 1);

    let no_manifest = bocf(dir.path(), &["train"]);
    assert_code(&no_manifest, 1);
    assert!(stderr_str(&no_manifest).contains("--manifest"));

    let missing_file = bocf(dir.path(), &["train", "--manifest", "missing.csv"]);
    assert_code(&missing_file, 1);
    assert!(stderr_str(&missing_file).contains("missing.csv"));

    let manifest = gensynth(dir.path(), "data", &["--n", "3", "--size", "24", "--seed", "1"]);
    let bad_method = bocf(
        dir.path(),
        &["baseline", "--method", "nope", "--manifest", &manifest],
    );
    assert_code(&bad_method, 1);
    assert!(stderr_str(&bad_method).contains("unknown method"));
}

#[test]
fn gensynth_is_deterministic_and_grid_snapped() {
    let dir = TempDir::new().unwrap();
    let args = ["--n", "6", "--seed", "3", "--size", "32"];
    gensynth(dir.path(), "a", &args);
    gensynth(dir.path(), "b", &args);

    let names: Vec<String> = std::fs::read_dir(dir.path().join("a"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    assert_eq!(names.len(), 8, "6 scenes + manifest + config");
    for name in &names {
        if name == "config.json" {
            continue; // echoes out_dir, which differs by construction
        }
        let a = std::fs::read(dir.path().join("a").join(name)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(name)).unwrap();
        assert_eq!(a, b, "{} differs between identical runs", name);
    }

    // Stored ground truth sits exactly on the 16-bit grid.
    let manifest = std::fs::read_to_string(dir.path().join("a/manifest.csv")).unwrap();
    let mut rows = 0;
    for line in manifest.lines().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields.len(), 4, "path,r,g,b: {}", line);
        for value in &fields[1..] {
            let v: f64 = value.parse().unwrap();
            let scaled = v * 65535.0;
            assert!(
                (scaled - scaled.round()).abs() < 1e-9,
                "{} is off the 16-bit grid",
                value
            );
        }
        rows += 1;
    }
    assert_eq!(rows, 6);
}

#[test]
fn baseline_gray_world_vanishes_on_uniform_scenes() {
    let dir = TempDir::new().unwrap();
    // One patch plus the white patch makes every scene uniform.
    let manifest = gensynth(
        dir.path(),
        "uniform",
        &["--n", "5", "--size", "24", "--patches", "1", "--seed", "2"],
    );
    let out = bocf(
        dir.path(),
        &[
            "baseline",
            "--method",
            "gray-world",
            "--manifest",
            &manifest,
            "--out-dir",
            "base",
        ],
    );
    assert_code(&out, 0);
    let text = stdout_str(&out);
    assert_eq!(
        text.matches("0.000000000").count(),
        5,
        "all five statistics are exactly zero:\n{}",
        text
    );

    // report.json keeps full precision; rounding noise stays far below a
    // nanodegree on scenes lit by the illuminant the estimator recovers.
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("base/report.json")).unwrap())
            .unwrap();
    for key in ["best25", "mean", "median", "trimean", "worst25"] {
        let v = report[key].as_f64().unwrap();
        assert!(v.abs() < 1e-9, "{} = {} exceeds rounding noise", key, v);
    }
    assert_eq!(report["n"].as_u64().unwrap(), 5);

    let config: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("base/config.json")).unwrap())
            .unwrap();
    assert_eq!(config["method"], "gray-world");
}

#[test]
fn train_writes_reproducible_run_artifacts() {
    let dir = TempDir::new().unwrap();
    let manifest = gensynth(dir.path(), "data", &["--n", "5", "--size", "48", "--seed", "4"]);
    let mut args = vec![
        "train",
        "--manifest",
        &manifest,
        "--crop-size",
        "40",
        "--epochs",
        "3",
        "--batch-size",
        "5",
        "--seed",
        "4",
        "--checkpoint-interval",
        "2",
        "--out-dir",
        "runs",
    ];
    args.extend_from_slice(&TINY_MODEL);
    let first = bocf(dir.path(), &args);
    assert_code(&first, 0);
    let run_dir = dir.path().join(stdout_str(&first).trim());
    for artifact in ["config.json", "loss.csv", "model.ckpt", "model-epoch-0001.ckpt"] {
        assert!(run_dir.join(artifact).exists(), "{} missing", artifact);
    }
    let loss = std::fs::read_to_string(run_dir.join("loss.csv")).unwrap();
    assert_eq!(loss.lines().count(), 4, "header plus one row per epoch");
    assert_eq!(loss.lines().next(), Some("epoch,mean_rae_deg"));

    // Same seed and inputs: identical loss curve. Rerunning from the echoed
    // config reproduces the model bit for bit.
    let second = bocf(dir.path(), &args);
    assert_code(&second, 0);
    let second_dir = dir.path().join(stdout_str(&second).trim());
    assert_eq!(
        std::fs::read(run_dir.join("loss.csv")).unwrap(),
        std::fs::read(second_dir.join("loss.csv")).unwrap()
    );

    let config_path = run_dir.join("config.json");
    let third = bocf(
        dir.path(),
        &["train", "--config", config_path.to_str().unwrap()],
    );
    assert_code(&third, 0);
    let third_dir = dir.path().join(stdout_str(&third).trim());
    assert_eq!(
        std::fs::read(run_dir.join("model.ckpt")).unwrap(),
        std::fs::read(third_dir.join("model.ckpt")).unwrap()
    );
}

#[test]
fn eval_and_predict_share_the_model_contract() {
    let dir = TempDir::new().unwrap();
    let manifest = gensynth(dir.path(), "data", &["--n", "4", "--size", "48", "--seed", "6"]);
    let mut train_args = vec![
        "train",
        "--manifest",
        &manifest,
        "--crop-size",
        "40",
        "--epochs",
        "1",
        "--batch-size",
        "4",
        "--seed",
        "6",
        "--out-dir",
        "runs",
    ];
    train_args.extend_from_slice(&TINY_MODEL);
    let trained = bocf(dir.path(), &train_args);
    assert_code(&trained, 0);
    let model = format!("{}/model.ckpt", stdout_str(&trained).trim());

    let eval = bocf(
        dir.path(),
        &[
            "eval",
            "--manifest",
            &manifest,
            "--model",
            &model,
            "--out-dir",
            "eval",
            "--errors-csv",
            "eval/errors.csv",
        ],
    );
    assert_code(&eval, 0);
    let text = stdout_str(&eval);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("eval/report.json")).unwrap())
            .unwrap();
    // stdout prints the same numbers report.json stores (9 decimals).
    for key in ["best25", "mean", "median", "trimean", "worst25"] {
        let printed = format!("{:.9}", report[key].as_f64().unwrap());
        assert!(text.contains(&printed), "{} not in stdout:\n{}", printed, text);
    }
    let errors = std::fs::read_to_string(dir.path().join("eval/errors.csv")).unwrap();
    assert_eq!(errors.lines().count(), 5, "header plus one row per image");

    let predict = bocf(
        dir.path(),
        &["predict", "--manifest", &manifest, "--model", &model],
    );
    assert_code(&predict, 0);
    let predictions = stdout_str(&predict);
    let lines: Vec<&str> = predictions.lines().map(str::trim).collect();
    assert_eq!(lines.len(), 4, "one line per manifest image");
    for line in &lines {
        let fields: Vec<&str> = line.split(' ').collect();
        assert_eq!(fields.len(), 4, "path r g b: {}", line);
        assert!(fields[0].ends_with(".png"));
        let sum: f64 = fields[1..].iter().map(|v| v.parse::<f64>().unwrap()).sum();
        assert!((sum - 1.0).abs() < 1e-9, "estimate off the simplex: {}", line);
    }
}

#[test]
fn crossval_reports_folds_and_pooled() {
    let dir = TempDir::new().unwrap();
    let manifest = gensynth(dir.path(), "data", &["--n", "6", "--size", "48", "--seed", "8"]);
    let mut args = vec![
        "crossval",
        "--manifest",
        &manifest,
        "--crop-size",
        "40",
        "--epochs",
        "1",
        "--batch-size",
        "3",
        "--folds",
        "2",
        "--seed",
        "8",
        "--out-dir",
        "cv",
    ];
    args.extend_from_slice(&TINY_MODEL);
    let out = bocf(dir.path(), &args);
    assert_code(&out, 0);
    let text = stdout_str(&out);
    assert!(text.contains("fold 0") && text.contains("fold 1") && text.contains("pooled"));

    let run_dir = std::fs::read_dir(dir.path().join("cv"))
        .unwrap()
        .next()
        .unwrap()
        .unwrap()
        .path();
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(run_dir.join("report.json")).unwrap())
            .unwrap();
    assert_eq!(report["folds"].as_array().unwrap().len(), 2);
    assert_eq!(report["pooled"]["n"].as_u64().unwrap(), 6);
    assert!(run_dir.join("config.json").exists());
}

#[test]
fn non_finite_loss_exits_two() {
    let dir = TempDir::new().unwrap();
    let manifest = gensynth(dir.path(), "data", &["--n", "4", "--size", "48", "--seed", "5"]);
    let mut args = vec![
        "train",
        "--manifest",
        &manifest,
        "--crop-size",
        "40",
        "--epochs",
        "4",
        "--batch-size",
        "4",
        "--seed",
        "5",
        "--learning-rate",
        "1e18",
        "--out-dir",
        "runs",
    ];
    args.extend_from_slice(&TINY_MODEL);
    let out = bocf(dir.path(), &args);
    assert_code(&out, 2);
    assert!(stderr_str(&out).contains("non-finite"));
}
