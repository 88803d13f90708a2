use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use eduloop_core::becat::SelectionState;
use eduloop_core::feedback::FeedbackReport;

use crate::error::{ApiError, ApiResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Active,
    Finished,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CachedFeedback {
    /// Number of responses the report was built from.
    pub responses: usize,
    pub report: FeedbackReport,
    pub created_at: DateTime<Utc>,
}

/// One adaptive dialogue, persisted as `<sessions_dir>/<id>.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub session_id: String,
    /// Raw student id, or `None` for a fresh learner.
    pub student_id: Option<String>,
    pub selection: SelectionState,
    pub status: Status,
    pub created_at: DateTime<Utc>,
    pub updated_at: DateTime<Utc>,
    #[serde(default)]
    pub feedback: Option<CachedFeedback>,
}

impl Session {
    pub fn refresh_status(&mut self) {
        if self.selection.is_exhausted() && self.selection.outstanding().is_none() {
            self.status = Status::Finished;
        }
    }
}

pub fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 64 && id.chars().all(|c| c.is_ascii_hexdigit() || c == '-')
}

#[derive(Debug, Clone)]
pub struct SessionStore {
    dir: PathBuf,
}

impl SessionStore {
    pub fn new(dir: impl Into<PathBuf>) -> std::io::Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        Ok(SessionStore { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, id: &str) -> PathBuf {
        self.dir.join(format!("{id}.json"))
    }

    pub async fn load(&self, id: &str) -> ApiResult<Session> {
        if !valid_id(id) {
            return Err(ApiError::not_found(
                "unknown_session",
                format!("no session `{id}`"),
            ));
        }
        let bytes = match tokio::fs::read(self.path(id)).await {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(ApiError::not_found(
                    "unknown_session",
                    format!("no session `{id}`"),
                ))
            }
            Err(e) => return Err(ApiError::internal(format!("reading session {id}: {e}"))),
        };
        serde_json::from_slice(&bytes)
            .map_err(|e| ApiError::internal(format!("corrupt session file {id}: {e}")))
    }

    /// Write to a temporary file, then rename over the old one.
    pub async fn save(&self, session: &Session) -> ApiResult<()> {
        let bytes = serde_json::to_vec(session)
            .map_err(|e| ApiError::internal(format!("serializing session: {e}")))?;
        let path = self.path(&session.session_id);
        let tmp = self.dir.join(format!(".{}.json.tmp", session.session_id));
        let io = |e: std::io::Error| ApiError::internal(format!("writing session: {e}"));
        tokio::fs::write(&tmp, bytes).await.map_err(io)?;
        tokio::fs::rename(&tmp, &path).await.map_err(io)
    }
}
