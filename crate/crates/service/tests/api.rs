use std::path::Path;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use tower::ServiceExt;

use eduloop_core::becat::SelectionConfig;
use eduloop_core::data::{
    parse_logs, read_canonical, read_item_texts, read_knowledge_graph, split_dataset,
    write_canonical, CanonicalData, LogSchema, QMatrix,
};
use eduloop_core::feedback::ProviderConfig;
use eduloop_core::ncd::{fit, NcdModel, TrainConfig};
use eduloop_core::synth::{write_synthetic, SynthConfig};
use eduloop_service::{router, AppState};

struct World {
    dir: tempfile::TempDir,
    model: NcdModel,
    students: Vec<String>,
    items: Vec<String>,
}

impl World {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let cfg = SynthConfig {
            n_students: 60,
            n_skills: 8,
            n_items: 60,
            mean_attempts: 15,
            seed: 2,
            ..SynthConfig::default()
        };
        let (files, _) = write_synthetic(&dir.path().join("raw"), &cfg).unwrap();
        let mut parsed = parse_logs(&files.log, &LogSchema::default()).unwrap();
        read_item_texts(&files.item_texts, &mut parsed.maps).unwrap();
        let (graph, _) = read_knowledge_graph(&files.graph, &parsed.maps, false).unwrap();
        let q_matrix = QMatrix::from_pairs(
            parsed.maps.items.len(),
            parsed.maps.knowledge.len(),
            parsed.item_skills.iter().copied(),
        )
        .unwrap();
        let data = CanonicalData {
            dataset: parsed.dataset,
            q_matrix,
            graph,
            maps: parsed.maps,
        };
        write_canonical(&dir.path().join("data"), &data).unwrap();
        let (train, _) = split_dataset(&data.dataset, 0.2).unwrap();
        let tc = TrainConfig {
            epochs: 3,
            learning_rate: 0.01,
            ..TrainConfig::default()
        };
        let (model, _) = fit(&train, None, &data.q_matrix, &tc).unwrap();
        World {
            dir,
            model,
            students: data.maps.students.raw_ids()[..4].to_vec(),
            items: data.maps.items.raw_ids()[..2].to_vec(),
        }
    }

    fn sessions(&self) -> std::path::PathBuf {
        self.dir.path().join("sessions")
    }

    /// A fresh process: everything is reloaded from disk.
    fn app(&self, with_model: bool) -> Router {
        self.app_in(&self.sessions(), with_model)
    }

    fn app_in(&self, sessions: &Path, with_model: bool) -> Router {
        let data = read_canonical(&self.dir.path().join("data")).unwrap();
        let model = with_model.then(|| self.model.clone());
        let state = AppState::new(
            model,
            data,
            sessions,
            SelectionConfig::default(),
            ProviderConfig::default(),
        )
        .unwrap();
        router(state, &["*".to_owned()])
    }
}

async fn call(app: &Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let mut req = Request::builder().method(method).uri(uri);
    let body = match body {
        Some(v) => {
            req = req.header("content-type", "application/json");
            Body::from(v.to_string())
        }
        None => Body::empty(),
    };
    let resp = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap_or_else(|_| json!(String::from_utf8_lossy(&bytes)))
    };
    (status, value)
}

async fn create(app: &Router, body: Value) -> String {
    let (status, v) = call(app, Method::POST, "/api/sessions", Some(body)).await;
    assert_eq!(status, StatusCode::CREATED, "{v}");
    v["session_id"].as_str().unwrap().to_owned()
}

async fn next(app: &Router, id: &str) -> (StatusCode, Value) {
    call(app, Method::POST, &format!("/api/sessions/{id}/next"), None).await
}

async fn answer(app: &Router, id: &str, item: &str, correct: bool) -> (StatusCode, Value) {
    call(
        app,
        Method::POST,
        &format!("/api/sessions/{id}/responses"),
        Some(json!({"item_id": item, "correct": correct})),
    )
    .await
}

#[tokio::test]
async fn full_session_flow() {
    let w = World::new();
    let app = w.app(true);
    let id = create(&app, json!({"student_id": w.students[2], "budget": 4})).await;
    let mut items = Vec::new();
    for step in 1..=4 {
        let (s, item) = next(&app, &id).await;
        assert_eq!(s, StatusCode::OK, "{item}");
        assert_eq!(item["step"], json!(step));
        assert!(!item["text"].as_str().unwrap().is_empty());
        let item_id = item["item_id"].as_str().unwrap().to_owned();
        let (s, out) = answer(&app, &id, &item_id, step % 2 == 0).await;
        assert_eq!(s, StatusCode::OK, "{out}");
        assert_eq!(out["steps_remaining"], json!(4 - step));
        for d in out["deltas"].as_array().unwrap() {
            let delta = d["delta"].as_f64().unwrap();
            if step % 2 == 0 {
                assert!(delta >= 0.0, "{d}");
            } else {
                assert!(delta <= 0.0, "{d}");
            }
        }
        items.push(item_id);
    }
    let (s, summary) = call(&app, Method::GET, &format!("/api/sessions/{id}"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(summary["status"], json!("finished"));
    assert_eq!(summary["selected_items"], json!(items));

    let (s, v) = next(&app, &id).await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(v["code"], json!("session_finished"));

    let (s, mastery) = call(
        &app,
        Method::GET,
        &format!("/api/sessions/{id}/mastery"),
        None,
    )
    .await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(mastery["mastery"], summary["mastery"]);

    let (s, fb) = call(
        &app,
        Method::POST,
        &format!("/api/sessions/{id}/feedback"),
        None,
    )
    .await;
    assert_eq!(s, StatusCode::OK, "{fb}");
    assert_eq!(fb["provider"], json!("fallback"));
    assert_eq!(fb["recommended_items"], json!(items));
    let sections = &fb["sections"];
    assert!(!sections["mastery_analysis"].as_str().unwrap().is_empty());
    assert!(!sections["recommendation_evaluation"]
        .as_str()
        .unwrap()
        .is_empty());
    assert!(!sections["learning_suggestions"]
        .as_array()
        .unwrap()
        .is_empty());
    let (_, again) = call(
        &app,
        Method::POST,
        &format!("/api/sessions/{id}/feedback"),
        None,
    )
    .await;
    assert_eq!(again, fb);
}

#[tokio::test]
async fn fresh_student_and_default_body() {
    let w = World::new();
    let app = w.app(true);
    let (s, v) = call(&app, Method::POST, "/api/sessions", None).await;
    assert_eq!(s, StatusCode::CREATED, "{v}");
    assert_eq!(v["student_id"], Value::Null);
    assert_eq!(v["budget"], json!(10));
    assert!(v["mastery"]
        .as_array()
        .unwrap()
        .iter()
        .all(|m| m["mastery"] == json!(0.5)));
}

#[tokio::test]
async fn zero_budget_is_finished_at_once() {
    let w = World::new();
    let app = w.app(true);
    let (s, v) = call(
        &app,
        Method::POST,
        "/api/sessions",
        Some(json!({"budget": 0})),
    )
    .await;
    assert_eq!(s, StatusCode::CREATED, "{v}");
    assert_eq!(v["status"], json!("finished"));
    let id = v["session_id"].as_str().unwrap();
    let (s, _) = next(&app, id).await;
    assert_eq!(s, StatusCode::CONFLICT);
    let (s, fb) = call(
        &app,
        Method::POST,
        &format!("/api/sessions/{id}/feedback"),
        None,
    )
    .await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(fb["provider"], json!("fallback"));
}

#[tokio::test]
async fn protocol_errors() {
    let w = World::new();
    let app = w.app(true);
    let id = create(&app, json!({"budget": 3})).await;

    let (s, v) = answer(&app, &id, &w.items[0], true).await;
    assert_eq!(
        (s, v["code"].clone()),
        (StatusCode::CONFLICT, json!("no_outstanding_item"))
    );

    let (_, item) = next(&app, &id).await;
    let item_id = item["item_id"].as_str().unwrap().to_owned();
    let (s, v) = next(&app, &id).await;
    assert_eq!(
        (s, v["code"].clone()),
        (StatusCode::CONFLICT, json!("outstanding_item"))
    );

    let other = if item_id == w.items[0] {
        &w.items[1]
    } else {
        &w.items[0]
    };
    let (s, v) = answer(&app, &id, other, true).await;
    assert_eq!(
        (s, v["code"].clone()),
        (StatusCode::CONFLICT, json!("item_mismatch"))
    );

    let (s, _) = call(
        &app,
        Method::POST,
        &format!("/api/sessions/{id}/responses"),
        Some(json!({"item_id": item_id, "correct": "yes"})),
    )
    .await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    let (s, _) = call(
        &app,
        Method::POST,
        &format!("/api/sessions/{id}/responses"),
        Some(json!({"item_id": item_id, "correct": 2})),
    )
    .await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);

    let (s, _) = answer(&app, &id, &item_id, true).await;
    assert_eq!(s, StatusCode::OK);
}

#[tokio::test]
async fn unknown_things_are_404() {
    let w = World::new();
    let app = w.app(true);
    for uri in [
        "/api/sessions/0c6f6f3e-0000-4000-8000-000000000000",
        "/api/sessions/0c6f6f3e-0000-4000-8000-000000000000/mastery",
        "/api/items/no-such-item",
    ] {
        let (s, v) = call(&app, Method::GET, uri, None).await;
        assert_eq!(s, StatusCode::NOT_FOUND, "{uri}: {v}");
        assert!(v["message"].is_string());
    }
    let (s, _) = call(&app, Method::GET, "/api/sessions/..%2Fetc", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, _) = call(
        &app,
        Method::POST,
        "/api/sessions",
        Some(json!({"student_id": "nobody"})),
    )
    .await;
    assert_eq!(s, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn invalid_settings_are_422() {
    let w = World::new();
    let app = w.app(true);
    for body in [json!({"lambda_mix": 1.5}), json!({"threshold": -0.1})] {
        let (s, v) = call(&app, Method::POST, "/api/sessions", Some(body.clone())).await;
        assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY, "{body}: {v}");
    }
}

#[tokio::test]
async fn missing_model_is_503() {
    let w = World::new();
    let app = w.app(false);
    let (s, v) = call(&app, Method::POST, "/api/sessions", Some(json!({}))).await;
    assert_eq!(s, StatusCode::SERVICE_UNAVAILABLE);
    assert_eq!(v["code"], json!("model_not_loaded"));
    let (s, item) = call(
        &app,
        Method::GET,
        &format!("/api/items/{}", w.items[0]),
        None,
    )
    .await;
    assert_eq!(s, StatusCode::OK, "{item}");
}

#[tokio::test]
async fn reloaded_sessions_replay_identically() {
    let w = World::new();
    let mut students = vec!["fresh".to_owned()];
    students.extend(w.students[..3].iter().cloned());
    for trial in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(trial);
        let budget = rng.random_range(3..=8);
        let cut = rng.random_range(1..budget);
        let answers: Vec<bool> = (0..budget).map(|_| rng.random()).collect();
        let body = json!({
            "student_id": students[trial as usize % students.len()],
            "budget": budget,
            "lambda_mix": rng.random_range(0.0..=1.0),
        });

        let app = w.app(true);
        let id = create(&app, body.clone()).await;
        let mut straight = Vec::new();
        for &a in &answers {
            let (_, item) = next(&app, &id).await;
            let item = item["item_id"].as_str().unwrap().to_owned();
            answer(&app, &id, &item, a).await;
            straight.push(item);
        }

        let id = create(&app, body).await;
        let mut resumed = Vec::new();
        let mut app = app;
        for (step, &a) in answers.iter().enumerate() {
            if step == cut {
                drop(app);
                app = w.app(true);
            }
            let (s, item) = next(&app, &id).await;
            assert_eq!(s, StatusCode::OK, "{item}");
            let item = item["item_id"].as_str().unwrap().to_owned();
            answer(&app, &id, &item, a).await;
            resumed.push(item);
        }
        assert_eq!(resumed, straight, "trial {trial}");
    }
}

#[tokio::test]
async fn concurrent_answers_are_serialized() {
    let w = World::new();
    let app = w.app(true);
    let id = create(&app, json!({"budget": 2})).await;
    let (_, item) = next(&app, &id).await;
    let item = item["item_id"].as_str().unwrap().to_owned();
    let (a, b) = tokio::join!(
        answer(&app, &id, &item, true),
        answer(&app, &id, &item, true)
    );
    let mut codes = [a.0, b.0];
    codes.sort();
    assert_eq!(codes, [StatusCode::OK, StatusCode::CONFLICT]);
    let (_, summary) = call(&app, Method::GET, &format!("/api/sessions/{id}"), None).await;
    assert_eq!(summary["steps_taken"], json!(1));
}
