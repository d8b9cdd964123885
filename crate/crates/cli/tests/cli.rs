use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn eagle(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_eagle"))
        .args(args)
        .output()
        .expect("run eagle")
}

fn stdout(out: &Output) -> String {
    assert!(
        out.status.success(),
        "eagle failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

/// The last stderr line of a failed run, parsed.
fn error_line(out: &Output) -> Value {
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    let last = stderr.lines().last().expect("an error line");
    serde_json::from_str(last).expect("error line is JSON")
}

fn example_dump() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../docs/example.eagle.jsonl")
}

fn planted(dir: &Path, name: &str, extra: &[&str]) -> PathBuf {
    let path = dir.join(name);
    let mut args = vec!["gen-toy", "--planted", "--n", "400", "--seed", "5", "--out"];
    args.push(path.to_str().unwrap());
    args.extend_from_slice(extra);
    stdout(&eagle(&args));
    path
}

#[test]
fn gen_toy_is_deterministic_and_goes_to_stdout_by_default() {
    let a = stdout(&eagle(&["gen-toy", "--n", "20", "--seed", "9"]));
    let b = stdout(&eagle(&["gen-toy", "--n", "20", "--seed", "9"]));
    assert_eq!(a, b);
    assert_eq!(a.lines().count(), 21);
    let header: Value = serde_json::from_str(a.lines().next().unwrap()).unwrap();
    assert_eq!(header["format"], "eagle-dump");
    assert_eq!(header["num_layers"], 8);
    let c = stdout(&eagle(&["gen-toy", "--n", "20", "--seed", "10"]));
    assert_ne!(a, c);
}

#[test]
fn score_formats_agree() {
    let dump = example_dump();
    let dump = dump.to_str().unwrap();
    let csv = stdout(&eagle(&["score", dump, "--format", "csv"]));
    let json = stdout(&eagle(&["score", dump, "--format", "json"]));
    let table = stdout(&eagle(&["score", dump]));
    let csv_rows: Vec<&str> = csv.lines().skip(1).collect();
    let json_rows: Vec<Value> = json.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(csv_rows.len(), 4);
    assert_eq!(json_rows.len(), 4);
    assert_eq!(table.lines().count(), 5);
    for (c, j) in csv_rows.iter().zip(&json_rows) {
        let fields: Vec<&str> = c.split(',').collect();
        assert_eq!(fields[0], j["id"].as_str().unwrap());
        assert_eq!(fields[1].parse::<f64>().unwrap(), j["raw"].as_f64().unwrap());
        let norm = j["normalized"].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&norm));
    }
    assert!(json_rows[3]["correct"].is_null());
}

#[test]
fn tune_then_ablate_with_tuned_file() {
    let dir = tempfile::tempdir().unwrap();
    let dump = planted(
        dir.path(),
        "tune.eagle.jsonl",
        &["--sigma", "2", "--signal-layers", "4", "--early", "noisy", "--early-sigma", "3"],
    );
    let tuned = dir.path().join("tuned.json");
    let printed: Value = serde_json::from_str(&stdout(&eagle(&[
        "tune",
        dump.to_str().unwrap(),
        "--out",
        tuned.to_str().unwrap(),
    ])))
    .unwrap();
    let saved: Value = serde_json::from_str(&std::fs::read_to_string(&tuned).unwrap()).unwrap();
    assert_eq!(printed, saved);
    let k = saved["k"].as_u64().unwrap();
    assert!((1..=8).contains(&k));

    let rows: Vec<Value> = stdout(&eagle(&[
        "ablate",
        dump.to_str().unwrap(),
        "--tuned",
        tuned.to_str().unwrap(),
        "--format",
        "json",
    ]))
    .lines()
    .map(|l| serde_json::from_str(l).unwrap())
    .collect();
    assert_eq!(rows.len(), 6);
    assert_eq!(rows[0]["method"], "last layer / max");
    assert_eq!(rows[5]["config"], format!("last-{k}/logits/exp"));
}

#[test]
fn evaluate_range_matches_sweep_cell() {
    let dir = tempfile::tempdir().unwrap();
    let dump = planted(dir.path(), "d.eagle.jsonl", &[]);
    let d = dump.to_str().unwrap();
    let eval: Value = serde_json::from_str(&stdout(&eagle(&[
        "evaluate", d, "--range", "2:5", "--combine", "prob", "--decision", "max", "--format", "json",
    ])))
    .unwrap();
    let csv = stdout(&eagle(&["sweep", d, "--combine", "prob", "--decision", "max"]));
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("start,end,ece,auroc"));
    let cells: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|f| f.parse().unwrap()).collect())
        .collect();
    assert_eq!(cells.len(), 36);
    let cell = cells.iter().find(|c| c[0] == 2.0 && c[1] == 5.0).unwrap();
    assert_eq!(cell[2], eval["ece"].as_f64().unwrap());
    assert_eq!(cell[3], eval["auroc"].as_f64().unwrap());
}

#[test]
fn reliability_bins_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let dump = planted(dir.path(), "d.eagle.jsonl", &[]);
    let v: Value = serde_json::from_str(&stdout(&eagle(&[
        "evaluate",
        dump.to_str().unwrap(),
        "--reliability",
        "--bins",
        "5",
        "--format",
        "json",
    ])))
    .unwrap();
    let bins = v["bins"].as_array().unwrap();
    assert_eq!(bins.len(), 5);
    let total: u64 = bins.iter().map(|b| b["count"].as_u64().unwrap()).sum();
    assert_eq!(total, 400);
}

#[test]
fn select_uses_answer_groups() {
    let dump = example_dump();
    let v: Value = serde_json::from_str(&stdout(&eagle(&[
        "select",
        dump.to_str().unwrap(),
        "--format",
        "json",
    ])))
    .unwrap();
    let choices = v["choices"].as_array().unwrap();
    let groups: Vec<&str> = choices.iter().map(|c| c["group"].as_str().unwrap()).collect();
    assert_eq!(groups, ["q1", "q2", "q3-a"]);
    assert_eq!(choices[0]["candidates"], 2);
    // One record is unlabeled, so no accuracy is reported.
    assert!(v["selected_accuracy"].is_null());
}

#[test]
fn study_range_orders_by_range_size() {
    let dir = tempfile::tempdir().unwrap();
    let small = planted(dir.path(), "s.eagle.jsonl", &["--scores", "0-1"]);
    let large = planted(dir.path(), "l.eagle.jsonl", &["--scores", "0-9"]);
    let mid = planted(dir.path(), "m.eagle.jsonl", &["--scores", "0-4"]);
    let out = stdout(&eagle(&[
        "study-range",
        small.to_str().unwrap(),
        large.to_str().unwrap(),
        mid.to_str().unwrap(),
        "--format",
        "csv",
    ]));
    let labels: Vec<&str> = out.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(labels, ["scores 0-9", "scores 0-4", "scores 0-1"]);
}

#[test]
fn transformer_dumps_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.eagle.jsonl");
    stdout(&eagle(&[
        "gen-toy",
        "--transformer",
        "--n",
        "60",
        "--layers",
        "4",
        "--out",
        path.to_str().unwrap(),
    ]));
    let v: Value = serde_json::from_str(&stdout(&eagle(&[
        "evaluate",
        path.to_str().unwrap(),
        "--k",
        "4",
        "--format",
        "json",
    ])))
    .unwrap();
    assert_eq!(v["count"], 60);
    assert_eq!(v["config"], "last-4/logits/exp");
}

#[test]
fn errors_are_single_json_lines() {
    let dir = tempfile::tempdir().unwrap();
    let dump = planted(dir.path(), "d.eagle.jsonl", &[]);
    let d = dump.to_str().unwrap();

    let out = eagle(&["evaluate", d, "--k", "9"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_line(&out)["error"], "invalid_selection");

    let out = eagle(&["evaluate", d, "--range", "3:9"]);
    assert_eq!(error_line(&out)["error"], "layer_out_of_range");

    let out = eagle(&["score", dir.path().join("missing").to_str().unwrap()]);
    assert_eq!(error_line(&out)["error"], "io");

    // Unlabeled records cannot be evaluated.
    let out = eagle(&["evaluate", example_dump().to_str().unwrap()]);
    assert_eq!(error_line(&out)["error"], "unlabeled");

    let bad = dir.path().join("bad.eagle.jsonl");
    let text = std::fs::read_to_string(&dump).unwrap();
    let mut lines: Vec<&str> = text.lines().take(3).collect();
    lines[2] = "{not json";
    std::fs::write(&bad, lines.join("\n") + "\n").unwrap();
    let out = eagle(&["score", bad.to_str().unwrap()]);
    let err = error_line(&out);
    assert_eq!(err["error"], "parse");
    assert!(err["message"].as_str().unwrap().contains("line 3"), "{err}");

    let out = eagle(&["evaluate", d, "--k", "2", "--range", "1:2"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_line(&out)["error"], "usage");

    let out = eagle(&["gen-toy", "--scores", "3-1"]);
    assert_eq!(error_line(&out)["error"], "invalid_score_set");
}

#[test]
fn help_lists_every_subcommand() {
    let help = stdout(&eagle(&["--help"]));
    for cmd in ["score", "evaluate", "ablate", "sweep", "tune", "select", "gen-toy", "study-range"] {
        assert!(help.contains(cmd), "missing {cmd}");
    }
}
