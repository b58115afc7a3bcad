use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn curate(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_curate")).args(args).output().expect("binary runs")
}

fn scenarios() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn json_out(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&o.stderr)))
}

/// Event lines with the timestamp and the session directory blanked out.
fn normalized_log(dir: &Path) -> Vec<String> {
    let text = std::fs::read_to_string(dir.join("events.ndjson")).unwrap();
    let dir = dir.display().to_string();
    text.lines()
        .map(|l| {
            let mut v: Value = serde_json::from_str(l).unwrap();
            v["ts"] = Value::Null;
            v.to_string().replace(&dir, "<dir>")
        })
        .collect()
}

#[test]
fn tools_list_and_describe() {
    let o = curate(&["tools", "list"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    for name in ["knn_shapley", "drop_columns", "merge_files", "train_evaluate"] {
        assert!(text.contains(name), "{name} missing from\n{text}");
    }
    let o = curate(&["tools", "describe", "impute"]);
    assert_eq!(json_out(&o)["name"], "impute");
    assert_eq!(curate(&["tools", "describe", "no_such_tool"]).status.code(), Some(2));
}

#[test]
fn scenarios_replay_deterministically() {
    let tmp = tempfile::tempdir().unwrap();
    for name in ["pbc-analog", "lung-analog", "prostate-analog"] {
        let path = scenarios().join(format!("{name}.json"));
        let mut logs = Vec::new();
        for run in ["a", "b"] {
            let wd = tmp.path().join(format!("{name}-{run}"));
            let o = curate(&["harness", "run", path.to_str().unwrap(), "--workdir", wd.to_str().unwrap()]);
            assert!(o.status.success(), "{name}: {}", String::from_utf8_lossy(&o.stderr));
            let report = json_out(&o);
            assert_eq!(report["session"]["status"], "converged");
            logs.push(normalized_log(&wd));

            let r = curate(&["replay", wd.to_str().unwrap()]);
            let replayed = json_out(&r);
            assert_eq!(replayed["step"], report["session"]["step"], "{name}");
            assert_eq!(replayed["dataset_ref"], report["session"]["fingerprint"], "{name}");
        }
        assert_eq!(logs[0], logs[1], "{name} logs differ between runs");
    }
}

#[test]
fn corrupt_score_and_headless_run() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("lung");
    let o = curate(&["harness", "corrupt", scenarios().join("lung-analog.json").to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["clean.csv", "train.csv", "key.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let s = |p: &str| out.join(p).to_str().unwrap().to_string();

    let o = curate(&["harness", "score", "--clean", &s("clean.csv"), "--key", &s("key.json"), "--curated", &s("train.csv")]);
    let score = json_out(&o);
    assert!(score["issue_resolution"].as_array().unwrap().iter().all(|r| r["fixed"] == false));

    let wd = tmp.path().join("session");
    let fixture = tmp.path().join("fixture.json");
    let script = tmp.path().join("script.json");
    std::fs::write(&script, r#"{"rules":[{"match":".*","answer":"approve","times":50}]}"#).unwrap();
    let o = curate(&[
        "run", "--data", &s("train.csv"), "--task", "survival", "--target", "event", "--time-col", "time",
        "--policy", "llm", "--provider", "mock", "--record", fixture.to_str().unwrap(),
        "--expert-script", script.to_str().unwrap(), "--workdir", wd.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(json_out(&o)["status"], "converged");
    assert!(std::fs::read_to_string(&fixture).unwrap().len() > 2);

    let o = curate(&["harness", "score", "--clean", &s("clean.csv"), "--key", &s("key.json"), "--curated", wd.join("curated.csv").to_str().unwrap()]);
    let score = json_out(&o);
    assert!(score["issue_resolution"].as_array().unwrap().iter().all(|r| r["fixed"] == true), "{score}");

    // the recorded fixture drives an identical replay
    let wd2 = tmp.path().join("session2");
    let o = curate(&[
        "run", "--data", &s("train.csv"), "--task", "survival", "--target", "event", "--time-col", "time",
        "--policy", "llm", "--provider", "replay", "--fixture", fixture.to_str().unwrap(),
        "--expert-script", script.to_str().unwrap(), "--workdir", wd2.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let a: Vec<String> = normalized_log(&wd).into_iter().map(|l| l.replace("session2", "session")).collect();
    let b: Vec<String> = normalized_log(&wd2).into_iter().map(|l| l.replace("session2", "session")).collect();
    assert_eq!(a, b);
}

#[test]
fn bad_arguments_fail() {
    assert!(!curate(&["run", "--data", "x.csv", "--task", "clustering", "--target", "y"]).status.success());
    assert_eq!(curate(&["run", "--data", "/nonexistent.csv", "--task", "regression", "--target", "y"]).status.code(), Some(2));
    assert_eq!(curate(&["replay", "/nonexistent"]).status.code(), Some(2));
}
