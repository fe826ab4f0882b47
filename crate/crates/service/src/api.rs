use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::routing::{get, post};
use axum::{Json, Router};
use glad_core::active::{Session, SessionConfig, StepOutcome, TraceRecord};
use glad_core::data::{standardize, CsvOptions, Label};
use glad_core::explain::{explain_instance, ExplainContext, InstanceExplanation, SurrogateConfig, TreeConfig};
use glad_core::grid::{bounding_box, Grid, DEFAULT_RESOLUTION};
use glad_core::objective::{ranking, LossConfig};
use glad_core::snapshot::SessionSnapshot;
use serde::{Deserialize, Serialize};

use crate::datasets::{parse_upload, DatasetCatalog, DatasetInfo};
use crate::error::{ApiError, ApiResult};
use crate::store::SessionStore;

pub const TOP_K: usize = 20;

pub struct AppState {
    pub store: SessionStore,
    pub catalog: DatasetCatalog,
    pub grid_resolution: usize,
}

pub type SharedState = Arc<AppState>;

pub fn router(state: SharedState) -> Router {
    Router::new()
        .route("/api/datasets", get(list_datasets))
        .route("/api/sessions", post(create_session))
        .route("/api/sessions/{id}", get(get_state))
        .route("/api/sessions/{id}/label", post(submit_label))
        .route("/api/sessions/{id}/explain/{idx}", get(get_explanation))
        .with_state(state)
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSession {
    /// Catalog id; ignored when `csv` is given.
    #[serde(default)]
    pub dataset: Option<String>,
    /// Uploaded CSV text.
    #[serde(default)]
    pub csv: Option<String>,
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub label_column: Option<String>,
    #[serde(default = "default_members")]
    pub members: usize,
    #[serde(default = "default_budget")]
    pub budget: usize,
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default = "default_bias")]
    pub bias: f64,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_true")]
    pub standardize: bool,
}

fn default_members() -> usize {
    15
}
fn default_budget() -> usize {
    60
}
fn default_tau() -> f64 {
    LossConfig::default().tau
}
fn default_bias() -> f64 {
    LossConfig::default().b
}
fn default_lambda() -> f64 {
    LossConfig::default().lambda
}
fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryPayload {
    pub index: usize,
    /// 1-based position in the current ranking of all instances.
    pub rank: usize,
    pub score: f64,
    /// Raw feature values.
    pub features: Vec<f64>,
    pub member_scores: Vec<f64>,
    pub relevance: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreateResponse {
    pub id: String,
    pub dataset: String,
    pub feature_names: Vec<String>,
    pub budget: usize,
    pub query: Option<QueryPayload>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRequest {
    pub index: usize,
    pub label: Label,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelResponse {
    pub t: usize,
    pub budget: usize,
    pub anomalies_found: usize,
    pub exhausted: bool,
    pub query: Option<QueryPayload>,
    /// Full trace, sent once the budget is used up.
    pub trace: Option<Vec<TraceRecord>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedInstance {
    pub index: usize,
    pub score: f64,
    pub label: Option<Label>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateResponse {
    pub id: String,
    pub dataset: String,
    pub feature_names: Vec<String>,
    pub n: usize,
    pub members: usize,
    pub t: usize,
    pub budget: usize,
    pub anomalies_found: usize,
    pub exhausted: bool,
    pub query: Option<QueryPayload>,
    pub loss_history: Vec<Option<f64>>,
    pub trace: Vec<TraceRecord>,
    pub top: Vec<RankedInstance>,
    /// Only for two-dimensional data.
    pub grid: Option<Grid>,
    pub created_at: String,
    pub updated_at: String,
}

fn raw_row(snap: &SessionSnapshot, i: usize) -> Vec<f64> {
    let row = snap.session.features().row(i).to_vec();
    match &snap.stats {
        Some(s) => s.invert_row(&row),
        None => row,
    }
}

fn query_payload(snap: &SessionSnapshot, scores: &[f64], order: &[usize]) -> ApiResult<Option<QueryPayload>> {
    let Some(index) = snap.session.pending() else { return Ok(None) };
    let s = &snap.session;
    let x = s.features().row(index).to_vec();
    Ok(Some(QueryPayload {
        index,
        rank: order.iter().position(|&i| i == index).map_or(0, |p| p + 1),
        score: scores[index],
        features: raw_row(snap, index),
        member_scores: s.member_scores().row(index).to_vec(),
        relevance: s.params().forward(&x)?,
    }))
}

fn current_query(snap: &SessionSnapshot) -> ApiResult<Option<QueryPayload>> {
    let scores = snap.session.scores()?;
    query_payload(snap, &scores, &ranking(&scores))
}

fn state_of(snap: &SessionSnapshot, resolution: usize) -> ApiResult<StateResponse> {
    let s = &snap.session;
    let scores = s.scores()?;
    let order = ranking(&scores);
    let label_of = |i: usize| s.labeled().entries().iter().find(|e| e.index == i).map(|e| e.label);
    let top = order
        .iter()
        .take(TOP_K)
        .map(|&i| RankedInstance {
            index: i,
            score: scores[i],
            label: label_of(i),
        })
        .collect();
    let grid = if s.features().ncols() == 2 {
        let raw = match &snap.stats {
            Some(st) => st.invert(s.features()),
            None => s.features().clone(),
        };
        Some(Grid::compute(s.ensemble(), s.params(), snap.stats.as_ref(), bounding_box(&raw)?, resolution)?)
    } else {
        None
    };
    Ok(StateResponse {
        id: snap.id.clone(),
        dataset: snap.dataset.clone(),
        feature_names: snap.feature_names.clone(),
        n: s.n(),
        members: s.ensemble().len(),
        t: s.iterations(),
        budget: s.budget(),
        anomalies_found: s.anomalies_found(),
        exhausted: s.is_exhausted(),
        query: query_payload(snap, &scores, &order)?,
        loss_history: s.trace().iter().map(|r| r.loss).collect(),
        trace: s.trace().to_vec(),
        top,
        grid,
        created_at: snap.created_at.to_rfc3339(),
        updated_at: snap.updated_at.to_rfc3339(),
    })
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(e.to_string()))?
}

fn json_body<T>(body: Result<Json<T>, JsonRejection>) -> ApiResult<T> {
    body.map(|Json(v)| v).map_err(|e| ApiError::bad_request(e.body_text()))
}

async fn list_datasets(State(state): State<SharedState>) -> ApiResult<Json<Vec<DatasetInfo>>> {
    let catalog = state.catalog.clone();
    Ok(Json(blocking(move || Ok(catalog.list())).await?))
}

async fn create_session(
    State(state): State<SharedState>,
    body: Result<Json<CreateSession>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<CreateResponse>)> {
    let req = json_body(body)?;
    if req.budget == 0 {
        return Err(ApiError::new(StatusCode::BAD_REQUEST, "invalid_config", "budget must be positive"));
    }
    let catalog = state.catalog.clone();
    let snap = blocking(move || {
        let mut opts = CsvOptions::default();
        if let Some(c) = &req.label_column {
            opts = opts.with_label_column(c.clone());
        }
        let ds = match (&req.csv, &req.dataset) {
            (Some(text), _) => parse_upload(req.name.as_deref().unwrap_or("upload"), text, &opts)?,
            (None, Some(id)) => catalog.load(id, &opts)?,
            (None, None) => return Err(ApiError::bad_request("either `dataset` or `csv` is required")),
        };
        let config = SessionConfig {
            ensemble_size: req.members,
            budget: req.budget,
            loss: LossConfig {
                lambda: req.lambda,
                tau: req.tau,
                b: req.bias,
            },
            seed: req.seed,
            ..SessionConfig::default()
        };
        let (features, stats) = if req.standardize {
            let (z, st) = standardize(&ds);
            (z.features, Some(st))
        } else {
            (ds.features.clone(), None)
        };
        let session = Session::new(features, config)?;
        let id = uuid::Uuid::new_v4().simple().to_string();
        Ok(SessionSnapshot::new(id, ds.name.clone(), ds.feature_names.clone(), stats, session))
    })
    .await?;
    let handle = state.store.insert(snap).await?;
    let guard = handle.read_owned().await;
    let resp = blocking(move || {
        Ok(CreateResponse {
            id: guard.id.clone(),
            dataset: guard.dataset.clone(),
            feature_names: guard.feature_names.clone(),
            budget: guard.session.budget(),
            query: current_query(&guard)?,
        })
    })
    .await?;
    tracing::info!(id = %resp.id, dataset = %resp.dataset, "session created");
    Ok((StatusCode::CREATED, Json(resp)))
}

async fn get_state(State(state): State<SharedState>, Path(id): Path<String>) -> ApiResult<Json<StateResponse>> {
    let guard = state.store.get(&id).await?.read_owned().await;
    let res = state.grid_resolution;
    Ok(Json(blocking(move || state_of(&guard, res)).await?))
}

async fn submit_label(
    State(state): State<SharedState>,
    Path(id): Path<String>,
    body: Result<Json<LabelRequest>, JsonRejection>,
) -> ApiResult<Json<LabelResponse>> {
    let req = json_body(body)?;
    let mut guard = state.store.get(&id).await?.write_owned().await;
    let path = state.store.path_for(&id);
    let resp = blocking(move || {
        let outcome = guard.session.submit(req.index, req.label)?;
        guard.touch();
        guard.save(&path)?;
        let s = &guard.session;
        let exhausted = matches!(outcome, StepOutcome::Exhausted);
        Ok(LabelResponse {
            t: s.iterations(),
            budget: s.budget(),
            anomalies_found: s.anomalies_found(),
            exhausted,
            query: current_query(&guard)?,
            trace: exhausted.then(|| s.trace().to_vec()),
        })
    })
    .await?;
    Ok(Json(resp))
}

async fn get_explanation(
    State(state): State<SharedState>,
    Path((id, idx)): Path<(String, String)>,
) -> ApiResult<Json<InstanceExplanation>> {
    let guard = state.store.get(&id).await?.read_owned().await;
    let index: usize = idx
        .parse()
        .map_err(|_| ApiError::new(StatusCode::NOT_FOUND, "unknown_instance", format!("bad instance index `{idx}`")))?;
    Ok(Json(
        blocking(move || {
            let s = &guard.session;
            let ctx = ExplainContext {
                ensemble: s.ensemble(),
                params: s.params(),
                features: s.features(),
                feature_names: &guard.feature_names,
                stats: guard.stats.as_ref(),
            };
            let surrogate = SurrogateConfig {
                seed: s.config().seed,
                ..SurrogateConfig::default()
            };
            Ok(explain_instance(&ctx, index, &TreeConfig::default(), &surrogate)?)
        })
        .await?,
    ))
}

impl AppState {
    pub fn new(store: SessionStore, catalog: DatasetCatalog) -> Self {
        Self {
            store,
            catalog,
            grid_resolution: DEFAULT_RESOLUTION,
        }
    }
}
