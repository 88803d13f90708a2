use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::Context;
use serde::Serialize;
use serde_json::json;

use eduloop_core::becat::{recommend, SelectionConfig};
use eduloop_core::data::{
    parse_logs, read_canonical, read_item_texts, read_knowledge_graph, split_dataset,
    write_canonical, CanonicalData, CanonicalFiles, KnowledgeGraph, QMatrix,
};
use eduloop_core::feedback::{Evidence, FeedbackClient, FeedbackRecord, Provider};
use eduloop_core::ncd::{evaluate, fit, mastery_table, sigmoid, EpochRecord, NcdModel};
use eduloop_core::simulate::{sign_test, simulate, Policy, SignTest, SimConfig, SimReport};
use eduloop_core::synth::write_synthetic;
use eduloop_service::ServiceConfig;

use crate::config::CliConfig;
use crate::manifest::RunManifest;
use crate::{
    write_json, Cli, Command, EvaluateArgs, FeedbackArgs, IngestArgs, ServeArgs, SimulateArgs,
    SynthArgs, TrainArgs,
};

pub fn run(cli: Cli) -> anyhow::Result<()> {
    let mut cfg = CliConfig::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.set_seed(seed);
    }
    match cli.command {
        Command::Ingest(a) => ingest(cfg, a),
        Command::Train(a) => train(cfg, a),
        Command::Evaluate(a) => evaluate_cmd(cfg, a),
        Command::Simulate(a) => simulate_cmd(cfg, a),
        Command::Serve(a) => serve(cfg, a),
        Command::Feedback(a) => feedback(cfg, a),
        Command::Synth(a) => synth(cfg, a),
    }
}

fn create_dir(dir: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn print_json<T: Serialize>(value: &T) -> anyhow::Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn canonical_inputs(m: &mut RunManifest<'_>, dir: &Path) -> anyhow::Result<()> {
    for f in CanonicalFiles::in_dir(dir).all() {
        m.input(f)?;
    }
    Ok(())
}

fn ingest(cfg: CliConfig, a: IngestArgs) -> anyhow::Result<()> {
    let mut parsed = parse_logs(&a.log, &cfg.schema)?;
    let mut report = parsed.report.clone();
    if let Some(path) = &a.item_texts {
        report.item_texts_loaded = read_item_texts(path, &mut parsed.maps)?;
    }
    let n_knowledge = parsed.maps.knowledge.len();
    let graph = match &a.graph {
        Some(path) => {
            let (graph, dropped) = read_knowledge_graph(path, &parsed.maps, a.strict_graph)?;
            report.graph_edges_dropped = dropped;
            graph
        }
        None => KnowledgeGraph::new([], n_knowledge)?,
    };
    report.graph_edges = graph.edges().len();
    let q_matrix = QMatrix::from_pairs(
        parsed.maps.items.len(),
        n_knowledge,
        parsed.item_skills.iter().copied(),
    )?;
    let data = CanonicalData {
        dataset: parsed.dataset,
        q_matrix,
        graph,
        maps: parsed.maps,
    };
    create_dir(&a.out)?;
    let files = write_canonical(&a.out, &data)?;
    write_json(&a.out.join("ingest_report.json"), &report)?;

    let mut m = RunManifest::new(
        "ingest",
        &cfg,
        json!({"log": a.log, "item_texts": a.item_texts, "graph": a.graph,
               "strict_graph": a.strict_graph, "out": a.out}),
    );
    m.input(&a.log)?;
    for p in a.item_texts.iter().chain(&a.graph) {
        m.input(p)?;
    }
    m.outputs = files.all().iter().map(|p| p.to_path_buf()).collect();
    m.outputs.push(a.out.join("ingest_report.json"));
    m.write(&a.out)?;
    print_json(&report)
}

#[derive(Serialize)]
struct History<'a> {
    epochs: &'a [EpochRecord],
    final_train_loss: f64,
    final_valid_auc: Option<f64>,
    n_train: usize,
    n_valid: usize,
}

fn write_plot_data(out: &Path, history: &[EpochRecord]) -> anyhow::Result<Vec<PathBuf>> {
    type Getter = fn(&EpochRecord) -> Option<f64>;
    let series: [(&str, Getter); 6] = [
        ("train_loss", |e| Some(e.train_loss)),
        ("valid_auc", |e| e.valid.as_ref().and_then(|v| v.auc)),
        ("valid_acc", |e| e.valid.as_ref().map(|v| v.acc)),
        ("valid_rmse", |e| e.valid.as_ref().map(|v| v.rmse)),
        ("valid_mse", |e| e.valid.as_ref().map(|v| v.mse)),
        ("valid_loss", |e| e.valid.as_ref().map(|v| v.loss)),
    ];
    let mut paths = Vec::new();
    for (name, get) in series {
        let path = out.join(format!("plot_{name}.csv"));
        let mut text = format!("epoch,{name}\n");
        for e in history {
            if let Some(v) = get(e) {
                text.push_str(&format!("{},{v}\n", e.epoch));
            }
        }
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        paths.push(path);
    }
    Ok(paths)
}

fn train(mut cfg: CliConfig, a: TrainArgs) -> anyhow::Result<()> {
    let t = &mut cfg.train;
    if let Some(v) = a.epochs {
        t.epochs = v;
    }
    if let Some(v) = a.lr {
        t.learning_rate = v;
    }
    if let Some(v) = a.batch_size {
        t.batch_size = v;
    }
    if let Some(v) = a.optimizer {
        t.optimizer = v;
    }
    if let Some(v) = &a.hidden {
        t.hidden_sizes = v.clone();
    }
    if let Some(v) = a.test_fraction {
        cfg.split.test_fraction = v;
    }
    let data = read_canonical(&a.data)?;
    let (train_set, valid_set) = split_dataset(&data.dataset, cfg.split.test_fraction)?;
    let started = Instant::now();
    let (model, history) = fit(&train_set, Some(&valid_set), &data.q_matrix, &cfg.train)?;
    log::info!(
        "trained {} epochs in {:.1}s",
        history.len(),
        started.elapsed().as_secs_f64()
    );

    create_dir(&a.out)?;
    let model_path = a.out.join("model.json");
    model.save(&model_path)?;
    let mastery_path = a.out.join("mastery.csv");
    mastery_table(&model).write_csv(&mastery_path, &data.maps)?;
    let last = history.last();
    let summary = History {
        epochs: &history,
        final_train_loss: last.map_or(f64::NAN, |e| e.train_loss),
        final_valid_auc: last.and_then(|e| e.valid.as_ref()).and_then(|v| v.auc),
        n_train: train_set.len(),
        n_valid: valid_set.len(),
    };
    let history_path = a.out.join("history.json");
    write_json(&history_path, &summary)?;

    let mut m = RunManifest::new(
        "train",
        &cfg,
        json!({"data": a.data, "out": a.out, "emit_plot_data": a.emit_plot_data}),
    );
    canonical_inputs(&mut m, &a.data)?;
    m.outputs = vec![model_path, mastery_path, history_path];
    if a.emit_plot_data {
        m.outputs.extend(write_plot_data(&a.out, &history)?);
    }
    m.write(&a.out)?;
    print_json(&json!({
        "epochs": history.len(),
        "final_train_loss": summary.final_train_loss,
        "final_valid": last.and_then(|e| e.valid.as_ref()),
    }))
}

fn evaluate_cmd(mut cfg: CliConfig, a: EvaluateArgs) -> anyhow::Result<()> {
    if let Some(v) = a.test_fraction {
        cfg.split.test_fraction = v;
    }
    let data = read_canonical(&a.data)?;
    let model = NcdModel::load(&a.model)?;
    let (_, test) = split_dataset(&data.dataset, cfg.split.test_fraction)?;
    let metrics = evaluate(&model, &test, &data.q_matrix)?;
    let out = a
        .out
        .clone()
        .unwrap_or_else(|| a.model.parent().map(Path::to_path_buf).unwrap_or_default());
    create_dir(&out)?;
    let result = json!({
        "split": "test",
        "test_fraction": cfg.split.test_fraction,
        "n_records": test.len(),
        "metrics": metrics,
    });
    let path = out.join("evaluation.json");
    write_json(&path, &result)?;
    let mut m = RunManifest::new("evaluate", &cfg, json!({"data": a.data, "model": a.model}));
    canonical_inputs(&mut m, &a.data)?;
    m.input(&a.model)?;
    m.outputs = vec![path];
    m.write(&out)?;
    print_json(&result)
}

#[derive(Serialize)]
struct Comparison {
    policy: Policy,
    baseline: Policy,
    mean_final_error: f64,
    baseline_mean_final_error: f64,
    sign_test: SignTest,
}

fn simulate_cmd(mut cfg: CliConfig, a: SimulateArgs) -> anyhow::Result<()> {
    if let Some(v) = a.students {
        cfg.simulation.n_students = v;
    }
    if let Some(v) = a.budget {
        cfg.simulation.budget = v;
    }
    if let Some(v) = a.test_fraction {
        cfg.split.test_fraction = v;
    }
    let data = read_canonical(&a.data)?;
    let model = NcdModel::load(&a.model)?;
    let sim = SimConfig {
        n_students: cfg.simulation.n_students,
        budget: cfg.simulation.budget,
        seed: cfg.selection.seed,
        test_fraction: cfg.split.test_fraction,
        selection: cfg.selection.clone(),
    };
    create_dir(&a.out)?;
    let mut policies = a.policy.clone();
    policies.dedup();
    let mut reports: Vec<SimReport> = Vec::new();
    let mut outputs = Vec::new();
    for &p in &policies {
        let started = Instant::now();
        let report = simulate(&model, &data.q_matrix, &data.dataset, p, &sim)?;
        log::info!(
            "{p}: {} students, mean final error {:.4} ({:.1}s)",
            report.n_students,
            report.mean_final_error,
            started.elapsed().as_secs_f64()
        );
        let path = a.out.join(format!("simulation_{p}.json"));
        write_json(&path, &report)?;
        outputs.push(path);
        reports.push(report);
    }
    let mut comparisons = Vec::new();
    if let Some(base) = reports.iter().find(|r| r.policy == Policy::Random) {
        let base_final: Vec<f64> = base.students.iter().map(|s| s.final_error()).collect();
        for r in reports.iter().filter(|r| r.policy != Policy::Random) {
            let finals: Vec<f64> = r.students.iter().map(|s| s.final_error()).collect();
            comparisons.push(Comparison {
                policy: r.policy,
                baseline: Policy::Random,
                mean_final_error: r.mean_final_error,
                baseline_mean_final_error: base.mean_final_error,
                sign_test: sign_test(&finals, &base_final)?,
            });
        }
        let path = a.out.join("comparison.json");
        write_json(&path, &comparisons)?;
        outputs.push(path);
    }
    let mut m = RunManifest::new(
        "simulate",
        &cfg,
        json!({"data": a.data, "model": a.model, "policies": policies, "out": a.out}),
    );
    canonical_inputs(&mut m, &a.data)?;
    m.input(&a.model)?;
    m.outputs = outputs;
    m.write(&a.out)?;
    let summary: Vec<_> = reports
        .iter()
        .map(|r| {
            json!({"policy": r.policy, "n_students": r.n_students,
                   "mean_initial_error": r.mean_initial_error,
                   "mean_final_error": r.mean_final_error})
        })
        .collect();
    print_json(&json!({"policies": summary, "comparisons": comparisons}))
}

fn serve(mut cfg: CliConfig, a: ServeArgs) -> anyhow::Result<()> {
    if let Some(p) = a.port {
        cfg.serve.port = p;
    }
    if let Some(h) = &a.host {
        cfg.serve.host = h.clone();
    }
    if !a.cors_origin.is_empty() {
        cfg.serve.cors_origins = a.cors_origin.clone();
    }
    let service = ServiceConfig {
        host: cfg.serve.host.clone(),
        port: cfg.serve.port,
        model: a.model.clone(),
        data_dir: a.data_dir.clone(),
        sessions_dir: a.sessions_dir.clone(),
        cors_origins: cfg.serve.cors_origins.clone(),
        selection: cfg.selection.clone(),
        provider: cfg.provider.clone(),
    };
    create_dir(&a.sessions_dir)?;
    let mut m = RunManifest::new("serve", &cfg, serde_json::to_value(&service)?);
    canonical_inputs(&mut m, &a.data_dir)?;
    if a.model.exists() {
        m.input(&a.model)?;
    }
    m.write(&a.sessions_dir)?;
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(eduloop_service::serve(&service))?;
    Ok(())
}

fn feedback(mut cfg: CliConfig, a: FeedbackArgs) -> anyhow::Result<()> {
    if let Some(b) = a.budget {
        cfg.selection.budget = b;
    }
    if let Some(e) = &a.endpoint {
        cfg.provider.endpoint = Some(e.clone());
    }
    let data = read_canonical(&a.data)?;
    let model = NcdModel::load(&a.model)?;
    model.check_compatible(&data.q_matrix)?;
    let student = data.maps.student(&a.student)?;
    let ability = model.theta.row(student).to_vec();
    let selection = SelectionConfig {
        ..cfg.selection.clone()
    };
    let recommended = recommend(&model, &data.q_matrix, &data.graph, &ability, &selection)?;
    let mastery: Vec<f64> = ability.iter().map(|&t| sigmoid(t)).collect();
    let maps = &data.maps;
    let evidence = Evidence {
        mastery: &mastery,
        knowledge_names: &maps.knowledge_names,
        recommended: &recommended,
        item_labels: maps.items.raw_ids(),
        item_texts: &maps.item_texts,
        q: &data.q_matrix,
    };
    let client = FeedbackClient::new(cfg.provider.clone());
    let rt = tokio::runtime::Runtime::new()?;
    let report = rt.block_on(client.generate_feedback(&evidence));
    let record = FeedbackRecord::new(
        Some(a.student.clone()),
        &report,
        recommended
            .iter()
            .map(|&i| maps.raw_item(i).to_owned())
            .collect(),
        chrono::Utc::now(),
    );
    create_dir(&a.out)?;
    let path = a.out.join("feedback_report.json");
    write_json(&path, &record)?;
    let mut m = RunManifest::new(
        "feedback",
        &cfg,
        json!({"data": a.data, "model": a.model, "student": a.student, "out": a.out}),
    );
    canonical_inputs(&mut m, &a.data)?;
    m.input(&a.model)?;
    m.outputs = vec![path];
    m.write(&a.out)?;
    if report.provider == Provider::Fallback {
        eprintln!(
            "note: offline fallback report ({})",
            report
                .fallback_reason
                .as_deref()
                .unwrap_or("provider unavailable")
        );
    }
    print_json(&record)
}

fn synth(mut cfg: CliConfig, a: SynthArgs) -> anyhow::Result<()> {
    let s = &mut cfg.synth;
    if let Some(v) = a.students {
        s.n_students = v;
    }
    if let Some(v) = a.items {
        s.n_items = v;
    }
    if let Some(v) = a.skills {
        s.n_skills = v;
    }
    if let Some(v) = a.attempts {
        s.mean_attempts = v;
    }
    let (files, report) = write_synthetic(&a.out, &cfg.synth)?;
    let mut m = RunManifest::new("synth", &cfg, json!({"out": a.out}));
    m.outputs = vec![files.log, files.item_texts, files.graph];
    m.write(&a.out)?;
    print_json(&report)
}
