use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn eduloop(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_eduloop"))
        .args(args)
        .env_remove("EDULOOP_LLM_TOKEN")
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> Value {
    let out = eduloop(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).unwrap()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// synth → ingest → train, small enough to run in a couple of seconds.
fn prepared(root: &Path) -> (PathBuf, PathBuf) {
    let raw = root.join("raw");
    let data = root.join("data");
    let model = root.join("model");
    ok(&[
        "synth",
        "--out",
        p(&raw),
        "--students",
        "200",
        "--items",
        "150",
        "--skills",
        "15",
    ]);
    ok(&[
        "ingest",
        "--log",
        p(&raw.join("skill_builder.csv")),
        "--item-texts",
        p(&raw.join("problem_texts.csv")),
        "--graph",
        p(&raw.join("skill_graph.csv")),
        "--out",
        p(&data),
    ]);
    ok(&[
        "train",
        "--data",
        p(&data),
        "--out",
        p(&model),
        "--epochs",
        "3",
        "--lr",
        "0.01",
        "--emit-plot-data",
    ]);
    (data, model)
}

#[test]
fn the_offline_workflow_runs_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let (data, model) = prepared(dir.path());

    for f in [
        "responses.csv",
        "q_matrix.csv",
        "knowledge_graph.csv",
        "run_manifest.json",
        "ingest_report.json",
    ] {
        assert!(data.join(f).exists(), "{f}");
    }
    let report = read_json(&data.join("ingest_report.json"));
    assert_eq!(report["graph_edges_dropped"], 1);
    assert!(report["dropped_total"].as_u64().unwrap() > 0);

    let history = read_json(&model.join("history.json"));
    assert_eq!(history["epochs"].as_array().unwrap().len(), 3);
    let plot = std::fs::read_to_string(model.join("plot_train_loss.csv")).unwrap();
    assert_eq!(plot.lines().count(), 4);
    let mastery = std::fs::read_to_string(model.join("mastery.csv")).unwrap();
    assert_eq!(mastery.lines().count(), 1 + 200 * 15);
    let manifest = read_json(&model.join("run_manifest.json"));
    assert_eq!(manifest["command"], "train");
    assert_eq!(manifest["inputs"].as_array().unwrap().len(), 5);
    assert_eq!(manifest["inputs"][0]["sha256"].as_str().unwrap().len(), 64);

    let model_file = model.join("model.json");
    let eval = ok(&["evaluate", "--data", p(&data), "--model", p(&model_file)]);
    assert!(eval["metrics"]["auc"].as_f64().unwrap() > 0.5);
    assert_eq!(read_json(&model.join("evaluation.json")), eval);

    let sim = dir.path().join("sim");
    let summary = ok(&[
        "simulate",
        "--data",
        p(&data),
        "--model",
        p(&model_file),
        "--policy",
        "becat,random,emc,gain",
        "--students",
        "20",
        "--budget",
        "4",
        "--out",
        p(&sim),
    ]);
    assert_eq!(summary["policies"].as_array().unwrap().len(), 4);
    assert_eq!(summary["comparisons"].as_array().unwrap().len(), 3);
    let becat = read_json(&sim.join("simulation_becat.json"));
    assert_eq!(becat["mean_error_curve"].as_array().unwrap().len(), 4);
    assert_eq!(becat["students"].as_array().unwrap().len(), 20);

    let student = mastery
        .lines()
        .nth(1)
        .unwrap()
        .split(',')
        .next()
        .unwrap()
        .to_owned();
    let fb_dir = dir.path().join("fb");
    let fb = ok(&[
        "feedback",
        "--data",
        p(&data),
        "--model",
        p(&model_file),
        "--student",
        &student,
        "--budget",
        "3",
        "--out",
        p(&fb_dir),
    ]);
    assert_eq!(fb["provider"], "fallback");
    assert_eq!(fb["student_id"], student.as_str());
    assert_eq!(fb["recommended_items"].as_array().unwrap().len(), 3);
    assert_eq!(read_json(&fb_dir.join("feedback_report.json")), fb);
}

#[test]
fn same_seed_same_model() {
    let dir = tempfile::tempdir().unwrap();
    let (data, model) = prepared(dir.path());
    let again = dir.path().join("again");
    ok(&[
        "train",
        "--data",
        p(&data),
        "--out",
        p(&again),
        "--epochs",
        "3",
        "--lr",
        "0.01",
    ]);
    assert_eq!(
        std::fs::read(model.join("model.json")).unwrap(),
        std::fs::read(again.join("model.json")).unwrap()
    );
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(eduloop(&["--help"]).status.code(), Some(0));
    assert_eq!(eduloop(&["train"]).status.code(), Some(2));
    assert_eq!(eduloop(&["frobnicate"]).status.code(), Some(2));
    let missing = dir.path().join("nope.csv");
    let out = eduloop(&[
        "ingest",
        "--log",
        p(&missing),
        "--out",
        p(&dir.path().join("o")),
    ]);
    assert_eq!(out.status.code(), Some(3));

    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[train]\nepochs = \"many\"\n").unwrap();
    let out = eduloop(&[
        "--config",
        p(&cfg),
        "synth",
        "--out",
        p(&dir.path().join("s")),
    ]);
    assert_eq!(out.status.code(), Some(2));

    let (data, _) = prepared(dir.path());
    let out = eduloop(&[
        "train",
        "--data",
        p(&data),
        "--out",
        p(&dir.path().join("boom")),
        "--optimizer",
        "sgd",
        "--lr",
        "1e300",
    ]);
    assert_eq!(
        out.status.code(),
        Some(4),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(String::from_utf8_lossy(&out.stderr).contains("non-finite loss"));

    let out = eduloop(&[
        "train",
        "--data",
        p(&data),
        "--out",
        p(&dir.path().join("z")),
        "--test-fraction",
        "1.5",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn config_file_values_are_used_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(
        &cfg,
        "[synth]\nn_students = 30\nn_items = 40\nn_skills = 5\n",
    )
    .unwrap();
    let a = ok(&[
        "--config",
        p(&cfg),
        "synth",
        "--out",
        p(&dir.path().join("a")),
    ]);
    assert_eq!(a["students"], 30);
    let b = ok(&[
        "--config",
        p(&cfg),
        "synth",
        "--out",
        p(&dir.path().join("b")),
        "--students",
        "12",
    ]);
    assert_eq!(b["students"], 12);
    assert_eq!(b["items"], 40);
}
