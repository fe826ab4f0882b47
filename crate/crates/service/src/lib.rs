//! HTTP session API for labeling with a GLAD model in the loop.
//!
//! Endpoints:
//! - `GET  /api/datasets`
//! - `POST /api/sessions`
//! - `GET  /api/sessions/{id}`
//! - `POST /api/sessions/{id}/label`
//! - `GET  /api/sessions/{id}/explain/{idx}`
//!
//! Errors are JSON `{code, message}`. Every label is persisted before the
//! response is sent.

pub mod api;
pub mod datasets;
pub mod error;
pub mod store;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

pub use api::{router, AppState, SharedState};
pub use datasets::DatasetCatalog;
pub use error::{ApiError, ErrorBody};
pub use store::SessionStore;

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub addr: SocketAddr,
    pub snapshot_dir: PathBuf,
    pub dataset_dir: Option<PathBuf>,
}

pub fn app(snapshot_dir: impl Into<PathBuf>, dataset_dir: Option<PathBuf>) -> axum::Router {
    router(Arc::new(AppState::new(
        SessionStore::new(snapshot_dir),
        DatasetCatalog::new(dataset_dir),
    )))
}

pub async fn serve(cfg: ServiceConfig) -> std::io::Result<()> {
    std::fs::create_dir_all(&cfg.snapshot_dir)?;
    let listener = tokio::net::TcpListener::bind(cfg.addr).await?;
    tracing::info!(addr = %listener.local_addr()?, snapshots = %cfg.snapshot_dir.display(), "serving");
    axum::serve(listener, app(cfg.snapshot_dir, cfg.dataset_dir)).await
}
