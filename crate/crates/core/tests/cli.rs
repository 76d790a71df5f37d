use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use histrecon::corpus::{history_path, read_history_file};
use histrecon::history::UserHistory;
use histrecon::reconstruct::{MostRecentClassifier, Reconstructor, ThresholdPredictor};
use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_histrecon"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn simulate(dir: &Path, users: u32, seed: u32) -> PathBuf {
    let data = dir.join(format!("data{users}_{seed}"));
    let (users, seed) = (users.to_string(), seed.to_string());
    ok(&[
        "simulate",
        "--users",
        &users,
        "--seed",
        &seed,
        "--days",
        "3",
        "--out",
        s(&data),
    ]);
    data
}

fn train(data: &Path, out: &Path) {
    ok(&[
        "train",
        "--data",
        s(data),
        "--out",
        s(out),
        "--seed",
        "3",
        "--trees",
        "5",
        "--max-rows",
        "20000",
    ]);
}

fn files(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_owned()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push((
                    path.strip_prefix(dir).unwrap().to_owned(),
                    fs::read(&path).unwrap(),
                ));
            }
        }
    }
    out.sort();
    out
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn simulate_writes_a_reproducible_corpus() {
    let tmp = tempfile::tempdir().unwrap();
    let data = simulate(tmp.path(), 4, 1);
    let written = files(&data);
    let names: Vec<String> = written
        .iter()
        .map(|(p, _)| p.display().to_string())
        .collect();
    for id in ["user000", "user001", "user002", "user003"] {
        assert!(names.contains(&format!("history/{id}.jsonl")));
        assert!(names.contains(&format!("activity/{id}.jsonl")));
    }
    let manifest = json(&data.join("manifest.json"));
    assert_eq!(manifest["train"].as_array().unwrap().len(), 2);
    assert_eq!(manifest["test"].as_array().unwrap().len(), 2);

    let again = tmp.path().join("again");
    ok(&[
        "simulate",
        "--users",
        "4",
        "--seed",
        "1",
        "--days",
        "3",
        "--out",
        s(&again),
    ]);
    assert_eq!(files(&again), written);
}

#[test]
fn usage_errors_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    let out = s(tmp.path());
    assert_eq!(
        run(&["simulate", "--users", "0", "--out", out])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(run(&[]).status.code(), Some(1));
    assert_eq!(
        run(&["reconstruct", "--method", "magic"]).status.code(),
        Some(1)
    );
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn bad_profile_is_a_data_error() {
    let tmp = tempfile::tempdir().unwrap();
    let profile = tmp.path().join("p.toml");
    fs::write(&profile, "days = 'many'\n").unwrap();
    let out = run(&[
        "simulate",
        "--users",
        "2",
        "--profile",
        s(&profile),
        "--out",
        s(tmp.path()),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());
}

#[test]
fn train_writes_deterministic_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let data = simulate(tmp.path(), 4, 2);
    let (a, b) = (tmp.path().join("m1"), tmp.path().join("m2"));
    train(&data, &a);
    train(&data, &b);
    let model = files(&a);
    let names: Vec<String> = model.iter().map(|(p, _)| p.display().to_string()).collect();
    for f in [
        "vocabulary.json",
        "active_forest.json",
        "domain_forest.json",
        "threshold.json",
        "productivity.csv",
        "training_summary.json",
    ] {
        assert!(names.contains(&f.to_owned()), "{f} missing from {names:?}");
    }
    assert_eq!(files(&b), model);
}

#[test]
fn single_training_user_still_trains() {
    let tmp = tempfile::tempdir().unwrap();
    let data = simulate(tmp.path(), 1, 3);
    let model = tmp.path().join("m");
    let out = ok(&[
        "train",
        "--data",
        s(&data),
        "--out",
        s(&model),
        "--trees",
        "3",
        "--max-rows",
        "5000",
    ]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("single user"));
    assert!(model.join("active_forest.json").exists());
}

#[test]
fn missing_manifest_is_an_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&[
        "train",
        "--data",
        s(tmp.path()),
        "--out",
        s(&tmp.path().join("m")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("manifest"));
}

#[test]
fn reconstruct_and_evaluate() {
    let tmp = tempfile::tempdir().unwrap();
    let data = simulate(tmp.path(), 4, 4);
    let model = tmp.path().join("m");
    train(&data, &model);

    // Empty history: nothing predicted.
    let empty = tmp.path().join("empty.jsonl");
    fs::write(&empty, "").unwrap();
    let out = tmp.path().join("r0");
    ok(&[
        "reconstruct",
        "--model",
        s(&model),
        "--history",
        s(&empty),
        "--out",
        s(&out),
    ]);
    assert_eq!(
        fs::read_to_string(out.join("predictions.csv")).unwrap(),
        "user_id,second,domain\n"
    );
    assert_eq!(json(&out.join("times.json")), Value::Array(vec![]));

    // Forest: per-domain totals add up to the online total.
    let history = history_path(&data, "user001");
    let out = tmp.path().join("r1");
    ok(&[
        "reconstruct",
        "--model",
        s(&model),
        "--history",
        s(&history),
        "--out",
        s(&out),
    ]);
    let times = json(&out.join("times.json"));
    let user = &times[0];
    let online = user["online_s"].as_u64().unwrap();
    let summed: u64 = user["domains"]
        .as_object()
        .unwrap()
        .values()
        .map(|v| v.as_u64().unwrap())
        .sum();
    assert!(online > 0);
    assert_eq!(summed, online);
    let rows = fs::read_to_string(out.join("predictions.csv"))
        .unwrap()
        .lines()
        .count() as u64;
    assert_eq!(rows, online + 1);

    // Heuristic: exactly the threshold and most-recent baselines.
    let out = tmp.path().join("r2");
    ok(&[
        "reconstruct",
        "--model",
        s(&model),
        "--history",
        s(&history),
        "--out",
        s(&out),
        "--method",
        "heuristic",
    ]);
    let visits = read_history_file(&history, "user001").unwrap();
    let grid = Reconstructor {
        activity: &ThresholdPredictor { minutes: 5 },
        domains: &MostRecentClassifier,
    }
    .reconstruct(&UserHistory::new("user001", visits))
    .unwrap();
    let mut expected = String::from("user_id,second,domain\n");
    for (sec, d) in grid.active() {
        expected.push_str(&format!("user001,{sec},{d}\n"));
    }
    assert_eq!(
        fs::read_to_string(out.join("predictions.csv")).unwrap(),
        expected
    );

    // Evaluation on the training split is labelled as such.
    let eval = tmp.path().join("e");
    ok(&[
        "evaluate",
        "--model",
        s(&model),
        "--data",
        s(&data),
        "--out",
        s(&eval),
        "--split",
        "train",
    ]);
    assert_eq!(json(&eval.join("report.json"))["split"], "train");
    for f in [
        "active_metrics.csv",
        "online_time.csv",
        "domain_time.csv",
        "domain_totals.csv",
        "confusion.csv",
    ] {
        assert!(eval.join(f).exists(), "{f}");
    }

    // Missing ground truth for a listed user.
    fs::remove_file(data.join("activity/user001.jsonl")).unwrap();
    let out = run(&[
        "evaluate",
        "--model",
        s(&model),
        "--data",
        s(&data),
        "--out",
        s(&eval),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn vocabulary_mismatch_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let data = simulate(tmp.path(), 2, 5);
    let model = tmp.path().join("m");
    train(&data, &model);
    let history = history_path(&data, "user000");
    let out_dir = tmp.path().join("r");
    let reconstruct = || {
        run(&[
            "reconstruct",
            "--model",
            s(&model),
            "--history",
            s(&history),
            "--out",
            s(&out_dir),
        ])
    };

    // A forest tagged with another vocabulary.
    let forest_path = model.join("domain_forest.json");
    let original = fs::read_to_string(&forest_path).unwrap();
    let mut forest: Value = serde_json::from_str(&original).unwrap();
    forest["vocabulary_fingerprint"] = Value::String("0".repeat(64));
    fs::write(&forest_path, serde_json::to_string(&forest).unwrap()).unwrap();
    let out = reconstruct();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("vocabulary"));
    fs::write(&forest_path, original).unwrap();
    assert!(reconstruct().status.success());

    // A vocabulary edited without its fingerprint.
    let vocab_path = model.join("vocabulary.json");
    let mut vocab = json(&vocab_path);
    vocab["domains"].as_array_mut().unwrap().swap(0, 1);
    fs::write(&vocab_path, serde_json::to_string(&vocab).unwrap()).unwrap();
    let out = reconstruct();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("fingerprint"));
}
