//! JSON API over live adaptive sessions.
//!
//! The trained model and the canonical data are loaded once and shared
//! read-only. Each session owns a private ability row and is stored as one
//! JSON file; requests on the same session are serialized by a per-session
//! lock, while different sessions proceed concurrently.

mod api;
mod error;
mod session;

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use axum::http::{HeaderValue, Method};
use axum::routing::{get, post};
use axum::Router;
use serde::{Deserialize, Serialize};
use tower_http::cors::{AllowOrigin, Any, CorsLayer};

use eduloop_core::becat::SelectionConfig;
use eduloop_core::data::{read_canonical, CanonicalData};
use eduloop_core::feedback::{FeedbackClient, ProviderConfig};
use eduloop_core::ncd::NcdModel;

pub use api::{
    CreateSession, ItemPayload, KnowledgeRef, MasteryEntry, MasteryReport, ResponseOutcome,
    SessionSummary,
};
pub use error::{ApiError, ErrorBody};
pub use session::{Session, SessionStore, Status};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceConfig {
    pub host: String,
    pub port: u16,
    pub model: PathBuf,
    pub data_dir: PathBuf,
    pub sessions_dir: PathBuf,
    /// Allowed browser origins; `*` allows any.
    pub cors_origins: Vec<String>,
    pub selection: SelectionConfig,
    pub provider: ProviderConfig,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            host: "127.0.0.1".into(),
            port: 8080,
            model: PathBuf::from("model.json"),
            data_dir: PathBuf::from("data"),
            sessions_dir: PathBuf::from("sessions"),
            cors_origins: vec!["http://localhost:5173".into()],
            selection: SelectionConfig::default(),
            provider: ProviderConfig::default(),
        }
    }
}

pub(crate) struct Inner {
    pub model: Option<NcdModel>,
    pub data: CanonicalData,
    pub store: SessionStore,
    pub selection: SelectionConfig,
    pub feedback: FeedbackClient,
    locks: Mutex<HashMap<String, Arc<tokio::sync::Mutex<()>>>>,
}

/// Shared, cheaply clonable handle used by every request.
#[derive(Clone)]
pub struct AppState {
    pub(crate) inner: Arc<Inner>,
}

impl AppState {
    /// `model` may be absent, in which case session creation answers 503.
    pub fn new(
        model: Option<NcdModel>,
        data: CanonicalData,
        sessions_dir: &Path,
        selection: SelectionConfig,
        provider: ProviderConfig,
    ) -> eduloop_core::Result<Self> {
        if let Some(m) = &model {
            m.check_compatible(&data.q_matrix)?;
        }
        let store = SessionStore::new(sessions_dir)
            .map_err(|e| eduloop_core::Error::InvalidConfig(format!("sessions dir: {e}")))?;
        Ok(AppState {
            inner: Arc::new(Inner {
                model,
                data,
                store,
                selection,
                feedback: FeedbackClient::new(provider),
                locks: Mutex::new(HashMap::new()),
            }),
        })
    }

    /// Reads the data directory and the model file named in `cfg`. A model
    /// that cannot be read is logged and left out.
    pub fn load(cfg: &ServiceConfig) -> eduloop_core::Result<Self> {
        let data = read_canonical(&cfg.data_dir)?;
        let model = match NcdModel::load(&cfg.model) {
            Ok(m) => Some(m),
            Err(e) => {
                log::warn!("serving without a model: {e}");
                None
            }
        };
        Self::new(
            model,
            data,
            &cfg.sessions_dir,
            cfg.selection.clone(),
            cfg.provider.clone(),
        )
    }

    pub(crate) fn lock_for(&self, id: &str) -> Arc<tokio::sync::Mutex<()>> {
        let mut locks = self.inner.locks.lock().unwrap_or_else(|e| e.into_inner());
        locks.entry(id.to_owned()).or_default().clone()
    }
}

fn cors(origins: &[String]) -> CorsLayer {
    let layer = CorsLayer::new()
        .allow_methods([Method::GET, Method::POST])
        .allow_headers(Any);
    if origins.iter().any(|o| o == "*") {
        return layer.allow_origin(Any);
    }
    let list: Vec<HeaderValue> = origins.iter().filter_map(|o| o.parse().ok()).collect();
    layer.allow_origin(AllowOrigin::list(list))
}

pub fn router(state: AppState, cors_origins: &[String]) -> Router {
    Router::new()
        .route("/api/sessions", post(api::create_session))
        .route("/api/sessions/{id}", get(api::get_session))
        .route("/api/sessions/{id}/next", post(api::next_item))
        .route("/api/sessions/{id}/responses", post(api::submit_response))
        .route("/api/sessions/{id}/mastery", get(api::get_mastery))
        .route("/api/sessions/{id}/feedback", post(api::get_feedback))
        .route("/api/items/{id}", get(api::get_item))
        .layer(cors(cors_origins))
        .with_state(state)
}

/// Binds and serves until the process is stopped.
pub async fn serve(cfg: &ServiceConfig) -> std::io::Result<()> {
    let state = AppState::load(cfg).map_err(std::io::Error::other)?;
    let addr: SocketAddr = format!("{}:{}", cfg.host, cfg.port)
        .parse()
        .map_err(std::io::Error::other)?;
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state, &cfg.cors_origins)).await
}
