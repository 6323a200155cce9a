mod common;

use std::fs;

use common::*;
use serde_json::{json, Value};

#[test]
fn optimize_with_scripted_backend_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    landscape_dataset(dir.path(), 2);
    let cfg = config_all(dir.path(), "run.json", landscape_role(), json!({}));
    let o = run(&["optimize", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let out = dir.path().join("out");
    assert!(!fs::read_to_string(out.join("best_prompt.txt")).unwrap().trim().is_empty());
    let report = fs::read_to_string(out.join("report.md")).unwrap();
    assert!(report.contains("| base |") && report.contains("| epoch |"), "{report}");
    let tree: Value = serde_json::from_str(&fs::read_to_string(out.join("tree.json")).unwrap()).unwrap();
    assert_eq!(tree["epochs_completed"], 3);
    assert_eq!(tree["seed"], 11);
}

#[test]
fn seed_and_out_flags_override_the_file() {
    let dir = tempfile::tempdir().unwrap();
    landscape_dataset(dir.path(), 1);
    let cfg = config_all(dir.path(), "run.json", landscape_role(), json!({}));
    let out = dir.path().join("elsewhere");
    let o = run(&["optimize", "--config", cfg.to_str().unwrap(), "--seed", "99", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let tree: Value = serde_json::from_str(&fs::read_to_string(out.join("tree.json")).unwrap()).unwrap();
    assert_eq!(tree["seed"], 99);
    assert!(!dir.path().join("out").exists());
}

#[test]
fn zero_validation_fraction_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    landscape_dataset(dir.path(), 1);
    let cfg = config_all(dir.path(), "run.json", landscape_role(), json!({"search": {"validation_fraction": 0.0}}));
    let o = run(&["optimize", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("validation_fraction"), "{}", stderr(&o));
}

#[test]
fn malformed_config_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.json", "{ not json");
    assert_eq!(code(&run(&["optimize", "--config", cfg.to_str().unwrap()])), 2);
    let missing = dir.path().join("nope.json");
    assert_eq!(code(&run(&["optimize", "--config", missing.to_str().unwrap()])), 2);
}

#[test]
fn backend_failure_exits_3_and_keeps_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    landscape_dataset(dir.path(), 1);
    // Fixtures recorded for one epoch cannot answer a longer run.
    let rec = config_all(
        dir.path(),
        "record.json",
        landscape_role(),
        json!({"search": {"epochs": 1}, "gateway": {"record_path": "fx.jsonl"}, "output_dir": "rec"}),
    );
    assert_eq!(code(&run(&["optimize", "--config", rec.to_str().unwrap()])), 0);
    let cfg = config_all(dir.path(), "replay.json", replay_role("fx.jsonl"), json!({"search": {"epochs": 3}}));
    let o = run(&["optimize", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    assert!(stderr(&o).contains("no replay fixture"), "{}", stderr(&o));
    let tree: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("out/tree.json")).unwrap()).unwrap();
    assert_eq!(tree["epochs_completed"], 1);
    assert!(!dir.path().join("out/best_prompt.txt").exists());
    // The saved checkpoint is consistent enough to report on.
    let tree_path = dir.path().join("out/tree.json");
    assert_eq!(code(&run(&["report", "--tree", tree_path.to_str().unwrap()])), 0);
}

fn eval_setup(labels: &[&str]) -> (tempfile::TempDir, Vec<String>) {
    let dir = tempfile::tempdir().unwrap();
    let data = dataset_with_labels(dir.path(), "d.jsonl", labels);
    let prompt = write(dir.path(), "p.txt", "Judge the message.");
    let cfg = config_all(
        dir.path(),
        "c.json",
        scripted_role(json!({"kind": "constant", "text": "<answer>A</answer>"})),
        json!({}),
    );
    let args = vec![
        "eval".to_string(),
        "--prompt".into(),
        prompt.display().to_string(),
        "--dataset".into(),
        data.display().to_string(),
        "--config".into(),
        cfg.display().to_string(),
    ];
    (dir, args)
}

fn eval_json(args: &[String]) -> Value {
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    let o = run(&refs);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    serde_json::from_str(stdout(&o).trim()).unwrap()
}

#[test]
fn constant_answer_scores_all_real_and_all_fake() {
    let (_d, args) = eval_setup(&["real", "real", "real"]);
    assert_eq!(eval_json(&args), json!({"accuracy": 1.0, "correct": 3, "total": 3, "malformed": 0}));
    let (_d, args) = eval_setup(&["fake", "fake"]);
    assert_eq!(eval_json(&args), json!({"accuracy": 0.0, "correct": 0, "total": 2, "malformed": 0}));
}

#[test]
fn sampled_eval_is_repeatable() {
    let labels: Vec<&str> = (0..20).map(|i| if i % 3 == 0 { "fake" } else { "real" }).collect();
    let (_d, mut args) = eval_setup(&labels);
    args.extend(["--fraction", "0.3", "--seed", "7"].map(String::from));
    let a = eval_json(&args);
    assert_eq!(a, eval_json(&args));
    assert_eq!(a["total"], 6);
}

#[test]
fn eval_input_errors_exit_2() {
    let (dir, mut args) = eval_setup(&["real"]);
    let empty = write(dir.path(), "empty.txt", "  \n");
    args[2] = empty.display().to_string();
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    assert_eq!(code(&run(&refs)), 2);
    assert_eq!(code(&run(&["eval", "--prompt", "/nonexistent", "--dataset", "/nonexistent"])), 2);
}

fn comment_args(dir: &std::path::Path, data: &std::path::Path, cfg: &std::path::Path) -> Vec<String> {
    let prompt = write(dir, "p.txt", "Judge the message.");
    [
        "comment",
        "--prompt",
        prompt.to_str().unwrap(),
        "--dataset",
        data.to_str().unwrap(),
        "--out",
        dir.join("comments.jsonl").to_str().unwrap(),
        "--config",
        cfg.to_str().unwrap(),
    ]
    .map(String::from)
    .to_vec()
}

#[test]
fn comments_replay_from_fixtures() {
    let dir = tempfile::tempdir().unwrap();
    let data = dataset_with_labels(dir.path(), "d.jsonl", &["real", "fake"]);
    let reply = "For Text 1: [Result: True. Reason: named officials.]\nFor Text 2: [Result: False. Reason: no source.]";
    let rec = config_all(
        dir.path(),
        "rec.json",
        scripted_role(json!({"kind": "constant", "text": reply})),
        json!({"gateway": {"record_path": "fx.jsonl"}}),
    );
    let o = run(&comment_args(dir.path(), &data, &rec).iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(code(&o), 0, "{}", stderr(&o));

    let cfg = config_all(dir.path(), "replay.json", replay_role("fx.jsonl"), json!({}));
    let o = run(&comment_args(dir.path(), &data, &cfg).iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let lines: Vec<Value> = fs::read_to_string(dir.path().join("comments.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(
        lines,
        vec![
            json!({"id": "n0", "result": "real", "reason": "named officials."}),
            json!({"id": "n1", "result": "fake", "reason": "no source."}),
        ]
    );
}

#[test]
fn unparseable_comment_is_marked() {
    let dir = tempfile::tempdir().unwrap();
    let data = dataset_with_labels(dir.path(), "d.jsonl", &["real", "fake"]);
    let cfg = config_all(
        dir.path(),
        "c.json",
        scripted_role(json!({"kind": "constant", "text": "For Text 1: [Result: True. Reason: fine.]"})),
        json!({}),
    );
    let o = run(&comment_args(dir.path(), &data, &cfg).iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = fs::read_to_string(dir.path().join("comments.jsonl")).unwrap();
    let second: Value = serde_json::from_str(text.lines().nth(1).unwrap()).unwrap();
    assert_eq!(second["result"], "unparsed");
}

#[test]
fn comment_failures() {
    let dir = tempfile::tempdir().unwrap();
    let empty = write(dir.path(), "empty.jsonl", "");
    let cfg = config_all(dir.path(), "c.json", scripted_role(json!({"kind": "constant", "text": "x"})), json!({}));
    let o = run(&comment_args(dir.path(), &empty, &cfg).iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(code(&o), 2);

    let data = dataset_with_labels(dir.path(), "d.jsonl", &["real"]);
    write(dir.path(), "none.jsonl", "");
    let replay = config_all(dir.path(), "r.json", replay_role("none.jsonl"), json!({}));
    let o = run(&comment_args(dir.path(), &data, &replay).iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    assert!(!dir.path().join("comments.jsonl").exists());
}

#[test]
fn report_is_stable_and_checks_integrity() {
    let dir = tempfile::tempdir().unwrap();
    landscape_dataset(dir.path(), 1);
    let cfg = config_all(dir.path(), "run.json", landscape_role(), json!({}));
    assert_eq!(code(&run(&["optimize", "--config", cfg.to_str().unwrap()])), 0);
    let tree = dir.path().join("out/tree.json");
    let a = run(&["report", "--tree", tree.to_str().unwrap()]);
    let b = run(&["report", "--tree", tree.to_str().unwrap()]);
    assert_eq!(code(&a), 0);
    assert_eq!(stdout(&a), stdout(&b));
    assert!(stdout(&a).starts_with("best path ("));

    let mut v: Value = serde_json::from_str(&fs::read_to_string(&tree).unwrap()).unwrap();
    v["edges"][0]["child_state_id"] = json!(999);
    let bad = write(dir.path(), "bad.json", &v.to_string());
    let o = run(&["report", "--tree", bad.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("a0") && stderr(&o).contains("s999"), "{}", stderr(&o));
}

#[test]
fn report_on_single_node_tree() {
    let dir = tempfile::tempdir().unwrap();
    let tree = json!({
        "format_version": 1, "seed": 0, "config": {}, "epochs_completed": 0,
        "nodes": [{"state_id": 0, "text": "lonely", "depth": 0, "cached_reward": 0.25,
                   "parent_action": null, "visit_count": 0, "terminal": false}],
        "edges": [], "trajectories": [],
        "memory": {"entries": [], "summary": "", "summarized_through": 0}
    });
    let p = write(dir.path(), "t.json", &tree.to_string());
    let o = run(&["report", "--tree", p.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(stdout(&o), "best path (1 states)\ns0  depth 0  reward 0.2500  N=0\n\nglobal best: s0  reward 0.2500  depth 0\n    lonely\n");
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(code(&run(&["optimize"])), 2);
    assert_eq!(code(&run(&["frobnicate"])), 2);
    assert_eq!(code(&run(&["--help"])), 0);
}
