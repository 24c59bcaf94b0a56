// Copyright 2026 The dpboost Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dpboost_cli::RunResult;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dpboost"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn dpboost")
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth(dir: &TempDir, task: &str, n: usize, seed: u64) -> PathBuf {
    let out = dir.path().join(format!("{task}_{n}_{seed}.svm"));
    let o = run(&["synth", "--task", task, "--n", &n.to_string(), "--d", "6", "--seed", &seed.to_string(), "--out", path_str(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    out
}

fn last_result(o: &Output) -> RunResult {
    let stdout = String::from_utf8(o.stdout.clone()).unwrap();
    RunResult::from_json_line(stdout.lines().last().expect("a result line")).unwrap()
}

#[test]
fn same_seed_gives_identical_model_files() {
    let dir = TempDir::new().unwrap();
    let data = synth(&dir, "cls", 300, 1);
    let models: Vec<Vec<u8>> = (0..2)
        .map(|i| {
            let model = dir.path().join(format!("m{i}.json"));
            let o = run(&[
                "train", "--data", path_str(&data), "--task", "cls", "--mode", "dpboost", "--eps", "2",
                "--trees", "12", "--ensemble-size", "6", "--seed", "7", "--model", path_str(&model),
            ]);
            assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
            fs::read(&model).unwrap()
        })
        .collect();
    assert_eq!(models[0], models[1]);
}

#[test]
fn missing_eps_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let data = synth(&dir, "cls", 50, 2);
    let model = dir.path().join("m.json");
    for mode in ["dpboost", "seq", "para"] {
        let o = run(&["train", "--data", path_str(&data), "--task", "cls", "--mode", mode, "--model", path_str(&model)]);
        assert_eq!(o.status.code(), Some(2), "mode {mode}");
    }
    assert!(!model.exists());
}

#[test]
fn ensemble_larger_than_trees_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let data = synth(&dir, "cls", 50, 3);
    let o = run(&[
        "cv", "--data", path_str(&data), "--task", "cls", "--eps", "1", "--trees", "5", "--ensemble-size", "6",
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn np_with_eps_warns_and_ignores_it() {
    let dir = TempDir::new().unwrap();
    let data = synth(&dir, "reg", 80, 4);
    let model = dir.path().join("m.json");
    let o = run(&[
        "train", "--data", path_str(&data), "--task", "reg", "--mode", "np", "--eps", "3", "--trees", "3",
        "--model", path_str(&model),
    ]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("warning"));
    let r = last_result(&o);
    assert_eq!(r.eps, None);
    assert_eq!(r.ledger[0].total, 0.0);
}

#[test]
fn cv_reports_five_folds_and_round_trips() {
    let dir = TempDir::new().unwrap();
    let data = synth(&dir, "cls", 100, 5);
    let csv = dir.path().join("curve.csv");
    for eps in ["1", "4"] {
        let o = run(&[
            "cv", "--data", path_str(&data), "--task", "cls", "--mode", "para", "--eps", eps, "--trees", "5",
            "--folds", "5", "--csv", path_str(&csv),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let r = last_result(&o);
        assert_eq!(r.folds.len(), 5);
        assert_eq!(r.seeds.folds.len(), 5);
        let line = r.to_json_line().unwrap();
        assert_eq!(RunResult::from_json_line(&line).unwrap(), r);
        for audit in &r.ledger {
            assert_eq!(audit.total, eps.parse::<f64>().unwrap());
        }
    }
    let text = fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    assert_eq!(lines[0], RunResult::CSV_HEADER);
    assert!(lines[1].starts_with("para,cls,1,5,,"));
}

#[test]
fn np_cv_on_separable_data_is_nearly_perfect() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("sep.svm");
    let mut text = String::new();
    for i in 0..400 {
        let x0 = (i as f64 * 0.618_033_988_7) % 1.0;
        let x1 = (i as f64 * 0.414_213_562_3) % 1.0;
        let y = if x0 > 0.4 { 1 } else { 0 };
        text.push_str(&format!("{y} 1:{x0} 2:{x1}\n"));
    }
    fs::write(&path, text).unwrap();
    let o = run(&["cv", "--data", path_str(&path), "--task", "cls", "--mode", "np", "--trees", "10", "--depth", "3"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(last_result(&o).mean.unwrap() < 0.05);
}

#[test]
fn regression_rmse_is_in_raw_units() {
    let dir = TempDir::new().unwrap();
    let scale = |src: &Path, name: &str| {
        let out = dir.path().join(name);
        let text: String = fs::read_to_string(src)
            .unwrap()
            .lines()
            .map(|l| {
                let (y, rest) = l.split_once(' ').unwrap();
                format!("{} {rest}\n", y.parse::<f64>().unwrap() * 1000.0 + 5000.0)
            })
            .collect();
        fs::write(&out, text).unwrap();
        out
    };
    let train = scale(&synth(&dir, "reg", 300, 6), "train.svm");
    let valid = scale(&synth(&dir, "reg", 100, 7), "valid.svm");
    let model = dir.path().join("m.json");
    let o = run(&[
        "train", "--data", path_str(&train), "--task", "reg", "--mode", "np", "--trees", "10",
        "--model", path_str(&model), "--valid", path_str(&valid),
    ]);
    assert!(o.status.success());
    let reported = last_result(&o).folds[0];
    let o = run(&["predict", "--model", path_str(&model), "--data", path_str(&valid)]);
    assert!(o.status.success());
    let preds: Vec<f64> = String::from_utf8(o.stdout).unwrap().lines().map(|l| l.parse().unwrap()).collect();
    let labels: Vec<f64> = fs::read_to_string(&valid)
        .unwrap()
        .lines()
        .map(|l| l.split(' ').next().unwrap().parse().unwrap())
        .collect();
    let mse = preds.iter().zip(&labels).map(|(p, y)| (p - y).powi(2)).sum::<f64>() / labels.len() as f64;
    assert!((mse.sqrt() - reported).abs() <= 1e-9 * reported, "{} vs {reported}", mse.sqrt());
    let mean = preds.iter().sum::<f64>() / preds.len() as f64;
    assert!((mean - 5000.0).abs() < 2000.0, "mean prediction {mean}");
}

#[test]
fn train_predict_and_validate() {
    let dir = TempDir::new().unwrap();
    let train = synth(&dir, "cls", 300, 8);
    let valid = synth(&dir, "cls", 120, 9);
    let model = dir.path().join("m.json");
    let o = run(&[
        "train", "--data", path_str(&train), "--task", "cls", "--mode", "np", "--trees", "10",
        "--model", path_str(&model), "--valid", path_str(&valid),
    ]);
    assert!(o.status.success());
    let r = last_result(&o);
    assert_eq!(r.folds.len(), 1);
    let preds = dir.path().join("p.txt");
    let o = run(&["predict", "--model", path_str(&model), "--data", path_str(&valid), "--out", path_str(&preds)]);
    assert!(o.status.success());
    let labels: Vec<f64> = fs::read_to_string(&preds).unwrap().lines().map(|l| l.parse().unwrap()).collect();
    assert_eq!(labels.len(), 120);
    assert!(labels.iter().all(|&y| y == 1.0 || y == -1.0));
    let wrong = fs::read_to_string(&valid)
        .unwrap()
        .lines()
        .zip(&labels)
        .filter(|(l, &p)| {
            let y: f64 = l.split(' ').next().unwrap().parse().unwrap();
            (y == 1.0) != (p == 1.0)
        })
        .count();
    assert!((wrong as f64 / 120.0 - r.folds[0]).abs() < 1e-12);
}

#[test]
fn verify_ledger_passes() {
    let o = run(&["verify", "ledger"]);
    assert!(o.status.success());
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["passed"], true);
    assert_eq!(report["violations"], 0);
}

#[test]
fn verify_reports_each_check_on_its_own_line() {
    let o = run(&["verify", "all", "--trials", "2000"]);
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert_eq!(stdout.lines().count(), 6);
    for line in stdout.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(v["check"].is_string());
    }
}

#[test]
fn unknown_flags_fail() {
    let o = run(&["train", "--bogus"]);
    assert_eq!(o.status.code(), Some(2));
}
