use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use axum::extract::State;
use axum::http::StatusCode;
use axum::routing::post;
use axum::{Json, Router};
use serde_json::{json, Value};

use eduloop_core::data::QMatrix;
use eduloop_core::feedback::{parse_feedback, Evidence, FeedbackClient, Provider, ProviderConfig};

const GOOD_REPLY: &str = "## Mastery Analysis\n- Fractions are weak at 0.21.\n\
## Recommendation Evaluation\n- Item 7 targets fractions directly.\n\
## Learning Suggestions\n- Redo item 7 and explain each step.\n";

#[derive(Clone)]
struct Mock {
    hits: Arc<AtomicUsize>,
    last_body: Arc<std::sync::Mutex<Option<Value>>>,
    reply: Arc<dyn Fn(usize) -> (StatusCode, Value) + Send + Sync>,
}

async fn chat(State(m): State<Mock>, Json(body): Json<Value>) -> (StatusCode, Json<Value>) {
    let n = m.hits.fetch_add(1, Ordering::SeqCst);
    *m.last_body.lock().unwrap() = Some(body);
    let (status, v) = (m.reply)(n);
    (status, Json(v))
}

fn content(text: &str) -> Value {
    json!({"choices": [{"message": {"role": "assistant", "content": text}}]})
}

async fn spawn(
    reply: impl Fn(usize) -> (StatusCode, Value) + Send + Sync + 'static,
) -> (String, Mock) {
    let mock = Mock {
        hits: Arc::new(AtomicUsize::new(0)),
        last_body: Arc::new(std::sync::Mutex::new(None)),
        reply: Arc::new(reply),
    };
    let app = Router::new()
        .route("/v1/chat/completions", post(chat))
        .with_state(mock.clone());
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });
    (format!("http://{addr}/v1/chat/completions"), mock)
}

struct Fixture {
    mastery: Vec<f64>,
    names: Vec<String>,
    labels: Vec<String>,
    texts: Vec<String>,
    recommended: Vec<usize>,
    q: QMatrix,
}

impl Fixture {
    fn new() -> Self {
        Fixture {
            mastery: vec![0.21, 0.55, 0.93],
            names: vec!["Fractions".into(), "Decimals".into(), "Counting".into()],
            labels: (0..8).map(|i| i.to_string()).collect(),
            texts: (0..8).map(|i| format!("Problem number {i}.")).collect(),
            recommended: vec![7, 3],
            q: QMatrix::from_rows((0..8).map(|i| vec![i % 3]).collect(), 3).unwrap(),
        }
    }

    fn evidence(&self) -> Evidence<'_> {
        Evidence {
            mastery: &self.mastery,
            knowledge_names: &self.names,
            recommended: &self.recommended,
            item_labels: &self.labels,
            item_texts: &self.texts,
            q: &self.q,
        }
    }
}

fn config(endpoint: Option<String>, token_env: &str) -> ProviderConfig {
    ProviderConfig {
        endpoint,
        token_env: token_env.into(),
        timeout_secs: 5.0,
        ..ProviderConfig::default()
    }
}

#[tokio::test]
async fn well_formed_reply_is_used() {
    std::env::set_var("EDULOOP_TEST_TOKEN_GOOD", "t0ken");
    let (url, mock) = spawn(|_| (StatusCode::OK, content(GOOD_REPLY))).await;
    let fx = Fixture::new();
    let client = FeedbackClient::new(config(Some(url), "EDULOOP_TEST_TOKEN_GOOD"));
    let report = client.generate_feedback(&fx.evidence()).await;
    assert_eq!(report.provider, Provider::Llm);
    assert_eq!(mock.hits.load(Ordering::SeqCst), 1);
    assert_eq!(report.sections, parse_feedback(GOOD_REPLY).unwrap());
    assert!(report.fallback_reason.is_none());

    let body = mock.last_body.lock().unwrap().clone().unwrap();
    let messages = body["messages"].as_array().unwrap();
    assert_eq!(messages.len(), 2);
    let user = messages[1]["content"].as_str().unwrap();
    assert!(user.contains("Fractions: 0.21"), "{user}");
    assert!(user.contains("Problem number 7."), "{user}");
}

#[tokio::test]
async fn garbage_is_retried_once_then_falls_back() {
    std::env::set_var("EDULOOP_TEST_TOKEN_GARBAGE", "t0ken");
    let (url, mock) = spawn(|_| (StatusCode::OK, content("I cannot help with that."))).await;
    let fx = Fixture::new();
    let client = FeedbackClient::new(config(Some(url), "EDULOOP_TEST_TOKEN_GARBAGE"));
    let report = client.generate_feedback(&fx.evidence()).await;
    assert_eq!(mock.hits.load(Ordering::SeqCst), 2);
    assert_eq!(report.provider, Provider::Fallback);
    assert!(report.sections.is_well_formed());
    assert!(report.fallback_reason.unwrap().contains("unparseable"));
}

#[tokio::test]
async fn second_attempt_can_succeed() {
    std::env::set_var("EDULOOP_TEST_TOKEN_RETRY", "t0ken");
    let (url, mock) = spawn(|n| {
        if n == 0 {
            (StatusCode::INTERNAL_SERVER_ERROR, json!({"error": "boom"}))
        } else {
            (StatusCode::OK, content(GOOD_REPLY))
        }
    })
    .await;
    let fx = Fixture::new();
    let client = FeedbackClient::new(config(Some(url), "EDULOOP_TEST_TOKEN_RETRY"));
    let report = client.generate_feedback(&fx.evidence()).await;
    assert_eq!(mock.hits.load(Ordering::SeqCst), 2);
    assert_eq!(report.provider, Provider::Llm);
}

#[tokio::test]
async fn non_json_and_missing_choices_fall_back() {
    std::env::set_var("EDULOOP_TEST_TOKEN_SHAPE", "t0ken");
    let (url, mock) = spawn(|_| (StatusCode::OK, json!({"unexpected": true}))).await;
    let fx = Fixture::new();
    let client = FeedbackClient::new(config(Some(url), "EDULOOP_TEST_TOKEN_SHAPE"));
    let report = client.generate_feedback(&fx.evidence()).await;
    assert_eq!(mock.hits.load(Ordering::SeqCst), 2);
    assert_eq!(report.provider, Provider::Fallback);
    assert!(report.sections.is_well_formed());
}

#[tokio::test]
async fn missing_token_never_calls_the_provider() {
    let (url, mock) = spawn(|_| (StatusCode::OK, content(GOOD_REPLY))).await;
    let fx = Fixture::new();
    let client = FeedbackClient::new(config(Some(url), "EDULOOP_TEST_TOKEN_UNSET"));
    let report = client.generate_feedback(&fx.evidence()).await;
    assert_eq!(mock.hits.load(Ordering::SeqCst), 0);
    assert_eq!(report.provider, Provider::Fallback);
    assert!(report
        .fallback_reason
        .unwrap()
        .contains("EDULOOP_TEST_TOKEN_UNSET"));
}

#[tokio::test]
async fn unreachable_endpoint_falls_back() {
    std::env::set_var("EDULOOP_TEST_TOKEN_DOWN", "t0ken");
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    drop(listener);
    let fx = Fixture::new();
    let client = FeedbackClient::new(config(
        Some(format!("http://{addr}/v1/chat/completions")),
        "EDULOOP_TEST_TOKEN_DOWN",
    ));
    let report = client.generate_feedback(&fx.evidence()).await;
    assert_eq!(report.provider, Provider::Fallback);
    assert!(report.sections.is_well_formed());
}

#[tokio::test]
async fn no_endpoint_is_offline_fallback() {
    let fx = Fixture::new();
    let client = FeedbackClient::new(config(None, "EDULOOP_TEST_TOKEN_GOOD"));
    let a = client.generate_feedback(&fx.evidence()).await;
    let b = client.generate_feedback(&fx.evidence()).await;
    assert_eq!(a.provider, Provider::Fallback);
    assert_eq!(a.raw_response, b.raw_response);
    assert_eq!(parse_feedback(&a.raw_response).unwrap(), a.sections);
}
