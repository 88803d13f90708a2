use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::Json;
use chrono::Utc;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use eduloop_core::becat::{filter_candidates, SelectionConfig, SelectionState};
use eduloop_core::feedback::{Evidence, FeedbackRecord};
use eduloop_core::ncd::NcdModel;

use crate::error::{ApiError, ApiResult};
use crate::session::{CachedFeedback, Session, Status};
use crate::{AppState, Inner};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CreateSession {
    /// Raw student id; absent or `"fresh"` starts from zero ability.
    pub student_id: Option<String>,
    pub budget: Option<usize>,
    pub lambda_mix: Option<f64>,
    pub threshold: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeRef {
    pub knowledge_id: String,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MasteryEntry {
    pub knowledge_id: String,
    pub name: String,
    pub mastery: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub session_id: String,
    pub student_id: Option<String>,
    pub status: Status,
    pub budget: usize,
    pub steps_taken: usize,
    pub remaining: usize,
    pub outstanding_item: Option<String>,
    pub selected_items: Vec<String>,
    pub mastery: Vec<MasteryEntry>,
    pub created_at: chrono::DateTime<Utc>,
    pub updated_at: chrono::DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemPayload {
    pub item_id: String,
    pub text: String,
    pub knowledge: Vec<KnowledgeRef>,
    /// 1-based position in the session; absent for plain item lookups.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MasteryDelta {
    pub knowledge_id: String,
    pub name: String,
    pub before: f64,
    pub after: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseOutcome {
    pub deltas: Vec<MasteryDelta>,
    pub mastery: Vec<MasteryEntry>,
    pub steps_remaining: usize,
    pub status: Status,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MasteryReport {
    pub session_id: String,
    pub mastery: Vec<MasteryEntry>,
}

fn model(inner: &Inner) -> ApiResult<&NcdModel> {
    inner.model.as_ref().ok_or_else(|| {
        ApiError::new(
            StatusCode::SERVICE_UNAVAILABLE,
            "model_not_loaded",
            "no trained model is loaded",
        )
    })
}

fn mastery_entries(inner: &Inner, mastery: &[f64]) -> Vec<MasteryEntry> {
    let maps = &inner.data.maps;
    mastery
        .iter()
        .enumerate()
        .map(|(k, &m)| MasteryEntry {
            knowledge_id: maps.raw_knowledge(k).to_owned(),
            name: maps.knowledge_names[k].clone(),
            mastery: m,
        })
        .collect()
}

fn item_payload(inner: &Inner, item: usize) -> ItemPayload {
    let maps = &inner.data.maps;
    ItemPayload {
        item_id: maps.raw_item(item).to_owned(),
        text: maps.item_texts[item].clone(),
        knowledge: inner
            .data
            .q_matrix
            .row(item)
            .iter()
            .map(|&k| KnowledgeRef {
                knowledge_id: maps.raw_knowledge(k).to_owned(),
                name: maps.knowledge_names[k].clone(),
            })
            .collect(),
        step: None,
        budget: None,
    }
}

fn summary(inner: &Inner, s: &Session) -> SessionSummary {
    let maps = &inner.data.maps;
    let sel = &s.selection;
    SessionSummary {
        session_id: s.session_id.clone(),
        student_id: s.student_id.clone(),
        status: s.status,
        budget: sel.budget,
        steps_taken: sel.responses.len(),
        remaining: sel.remaining(),
        outstanding_item: sel.outstanding().map(|i| maps.raw_item(i).to_owned()),
        selected_items: sel
            .selected
            .iter()
            .map(|&i| maps.raw_item(i).to_owned())
            .collect(),
        mastery: mastery_entries(inner, &sel.mastery()),
        created_at: s.created_at,
        updated_at: s.updated_at,
    }
}

pub async fn create_session(
    State(state): State<AppState>,
    body: Option<Json<CreateSession>>,
) -> ApiResult<(StatusCode, Json<SessionSummary>)> {
    let req = body.map(|Json(b)| b).unwrap_or_default();
    let inner = &state.inner;
    let model = model(inner)?;
    let data = &inner.data;
    let student_id = req.student_id.filter(|s| s != "fresh");
    let ability = match &student_id {
        Some(raw) => model.theta.row(data.maps.student(raw)?).to_vec(),
        None => vec![0.0; model.n_knowledge()],
    };
    let cfg = SelectionConfig {
        budget: req.budget.unwrap_or(inner.selection.budget),
        lambda_mix: req.lambda_mix.unwrap_or(inner.selection.lambda_mix),
        threshold: req.threshold.unwrap_or(inner.selection.threshold),
        ..inner.selection.clone()
    };
    cfg.validate()?;
    let mastery: Vec<f64> = ability
        .iter()
        .map(|&t| eduloop_core::ncd::sigmoid(t))
        .collect();
    let all: Vec<usize> = (0..data.q_matrix.n_items()).collect();
    let pool = filter_candidates(&data.q_matrix, &data.graph, &mastery, cfg.threshold, &all);
    let selection = SelectionState::new(model, &data.q_matrix, ability, &pool, &cfg)?;
    let now = Utc::now();
    let mut session = Session {
        session_id: uuid::Uuid::new_v4().to_string(),
        student_id,
        selection,
        status: Status::Active,
        created_at: now,
        updated_at: now,
        feedback: None,
    };
    session.refresh_status();
    inner.store.save(&session).await?;
    Ok((StatusCode::CREATED, Json(summary(inner, &session))))
}

pub async fn get_session(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> ApiResult<Json<SessionSummary>> {
    let session = state.inner.store.load(&id).await?;
    Ok(Json(summary(&state.inner, &session)))
}

pub async fn get_mastery(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> ApiResult<Json<MasteryReport>> {
    let session = state.inner.store.load(&id).await?;
    Ok(Json(MasteryReport {
        session_id: session.session_id.clone(),
        mastery: mastery_entries(&state.inner, &session.selection.mastery()),
    }))
}

pub async fn next_item(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> ApiResult<Json<ItemPayload>> {
    let lock = state.lock_for(&id);
    let _guard = lock.lock().await;
    let inner = &state.inner;
    let mut session = inner.store.load(&id).await?;
    if session.status == Status::Finished {
        return Err(ApiError::conflict(
            "session_finished",
            "the session is finished",
        ));
    }
    if let Some(item) = session.selection.outstanding() {
        return Err(ApiError::conflict(
            "outstanding_item",
            format!(
                "item {} must be answered first",
                inner.data.maps.raw_item(item)
            ),
        ));
    }
    let model = model(inner)?;
    let step = session.selection.select_next(model, &inner.data.q_matrix)?;
    session.updated_at = Utc::now();
    inner.store.save(&session).await?;
    Ok(Json(ItemPayload {
        step: Some(session.selection.selected.len()),
        budget: Some(session.selection.budget),
        ..item_payload(inner, step.item)
    }))
}

fn parse_answer(body: &Value) -> ApiResult<(String, bool)> {
    let item = match body.get("item_id") {
        Some(Value::String(s)) => s.clone(),
        Some(Value::Number(n)) => n.to_string(),
        _ => return Err(ApiError::invalid("item_id must be a string or number")),
    };
    let correct = match body.get("correct") {
        Some(Value::Bool(b)) => *b,
        Some(Value::Number(n)) if n.as_u64() == Some(1) => true,
        Some(Value::Number(n)) if n.as_u64() == Some(0) => false,
        _ => return Err(ApiError::invalid("correct must be true, false, 0 or 1")),
    };
    Ok((item, correct))
}

pub async fn submit_response(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Json(body): Json<Value>,
) -> ApiResult<Json<ResponseOutcome>> {
    let (raw_item, correct) = parse_answer(&body)?;
    let lock = state.lock_for(&id);
    let _guard = lock.lock().await;
    let inner = &state.inner;
    let mut session = inner.store.load(&id).await?;
    let maps = &inner.data.maps;
    let Some(outstanding) = session.selection.outstanding() else {
        return Err(ApiError::conflict(
            "no_outstanding_item",
            "no item is waiting for an answer",
        ));
    };
    if maps.items.get(&raw_item) != Some(outstanding) {
        return Err(ApiError::conflict(
            "item_mismatch",
            format!(
                "expected an answer to item {}, got {raw_item}",
                maps.raw_item(outstanding)
            ),
        ));
    }
    let model = model(inner)?;
    let before = session.selection.mastery();
    session
        .selection
        .observe(model, &inner.data.q_matrix, outstanding, correct)?;
    let after = session.selection.mastery();
    session.feedback = None;
    session.updated_at = Utc::now();
    session.refresh_status();
    inner.store.save(&session).await?;

    let deltas = inner
        .data
        .q_matrix
        .row(outstanding)
        .iter()
        .map(|&k| MasteryDelta {
            knowledge_id: maps.raw_knowledge(k).to_owned(),
            name: maps.knowledge_names[k].clone(),
            before: before[k],
            after: after[k],
            delta: after[k] - before[k],
        })
        .collect();
    Ok(Json(ResponseOutcome {
        deltas,
        mastery: mastery_entries(inner, &after),
        steps_remaining: session.selection.remaining(),
        status: session.status,
    }))
}

pub async fn get_feedback(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> ApiResult<Json<FeedbackRecord>> {
    let lock = state.lock_for(&id);
    let _guard = lock.lock().await;
    let inner = &state.inner;
    let mut session = inner.store.load(&id).await?;
    let maps = &inner.data.maps;
    let recommended_items: Vec<String> = session
        .selection
        .selected
        .iter()
        .map(|&i| maps.raw_item(i).to_owned())
        .collect();
    let answered = session.selection.responses.len();
    if let Some(cached) = session
        .feedback
        .as_ref()
        .filter(|c| c.responses == answered)
    {
        return Ok(Json(FeedbackRecord::new(
            session.student_id.clone(),
            &cached.report,
            recommended_items,
            cached.created_at,
        )));
    }
    let mastery = session.selection.mastery();
    let evidence = Evidence {
        mastery: &mastery,
        knowledge_names: &maps.knowledge_names,
        recommended: &session.selection.selected,
        item_labels: maps.items.raw_ids(),
        item_texts: &maps.item_texts,
        q: &inner.data.q_matrix,
    };
    let report = inner.feedback.generate_feedback(&evidence).await;
    let created_at = Utc::now();
    let record = FeedbackRecord::new(
        session.student_id.clone(),
        &report,
        recommended_items,
        created_at,
    );
    session.feedback = Some(CachedFeedback {
        responses: answered,
        report,
        created_at,
    });
    inner.store.save(&session).await?;
    Ok(Json(record))
}

pub async fn get_item(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> ApiResult<Json<ItemPayload>> {
    let item = state.inner.data.maps.item(&id)?;
    Ok(Json(item_payload(&state.inner, item)))
}
