//! Sessions keyed by id, backed by one snapshot file each.
//!
//! The in-memory map is a cache over the directory: a session missing from
//! the map is loaded from disk on first access, so a restarted service picks
//! up where it left off.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use glad_core::snapshot::SessionSnapshot;
use tokio::sync::RwLock;

use crate::error::{ApiError, ApiResult};

pub type SessionHandle = Arc<RwLock<SessionSnapshot>>;

#[derive(Debug)]
pub struct SessionStore {
    dir: PathBuf,
    sessions: RwLock<HashMap<String, SessionHandle>>,
}

fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 64 && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-')
}

impl SessionStore {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self {
            dir: dir.into(),
            sessions: RwLock::new(HashMap::new()),
        }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_for(&self, id: &str) -> PathBuf {
        self.dir.join(format!("{id}.json"))
    }

    /// Persist a new snapshot and register it.
    pub async fn insert(&self, snap: SessionSnapshot) -> ApiResult<SessionHandle> {
        let id = snap.id.clone();
        let path = self.path_for(&id);
        let snap = tokio::task::spawn_blocking(move || snap.save(&path).map(|_| snap))
            .await
            .map_err(|e| ApiError::internal(e.to_string()))??;
        let handle = Arc::new(RwLock::new(snap));
        self.sessions.write().await.insert(id, handle.clone());
        Ok(handle)
    }

    pub async fn get(&self, id: &str) -> ApiResult<SessionHandle> {
        if !valid_id(id) {
            return Err(ApiError::unknown_session(id));
        }
        if let Some(h) = self.sessions.read().await.get(id) {
            return Ok(h.clone());
        }
        let path = self.path_for(id);
        if !path.is_file() {
            return Err(ApiError::unknown_session(id));
        }
        let snap = tokio::task::spawn_blocking(move || SessionSnapshot::load(&path))
            .await
            .map_err(|e| ApiError::internal(e.to_string()))??;
        tracing::info!(id, "session restored from snapshot");
        let mut map = self.sessions.write().await;
        Ok(map
            .entry(id.to_string())
            .or_insert_with(|| Arc::new(RwLock::new(snap)))
            .clone())
    }
}
