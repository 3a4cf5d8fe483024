//! HTTP front end for scoring responses, computing GRPO learning signals and
//! building datasets, so trainers can obtain rewards over the network.
//!
//! All endpoints speak JSON. `/health` is always open; the `/v1` routes
//! require `Authorization: Bearer <token>` when a token is configured.

pub mod catalog;
pub mod wire;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, RwLock};

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Path, Request, State};
use axum::http::{header, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use jigsaw_core::grpo::{learning_signal, GrpoConfig, RolloutGroup};
use jigsaw_core::harness::dataset::{build_dataset, item_keys, Corpus};
use jigsaw_core::scoring::score_response;
use jigsaw_core::{GroundTruth, Mode};
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use tower_http::trace::TraceLayer;

use catalog::{sha256_hex, Catalog};
use wire::*;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const DEFAULT_BATCH_CAP: usize = 1024;
const BODY_LIMIT: usize = 64 << 20;

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    /// Manifest whose questions can be scored by id.
    pub manifest: Option<PathBuf>,
    /// Maximum items per score request.
    pub batch_cap: usize,
    pub token: Option<String>,
    /// Where `POST /v1/datasets` writes datasets.
    pub data_dir: PathBuf,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            manifest: None,
            batch_cap: DEFAULT_BATCH_CAP,
            token: None,
            data_dir: PathBuf::from("jigsaw-data"),
        }
    }
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(ErrorBody { error: self.message })).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

struct Inner {
    config: ServiceConfig,
    catalog: RwLock<Arc<Catalog>>,
    /// Serializes dataset builds so id checks and inserts cannot race.
    build_lock: tokio::sync::Mutex<()>,
}

impl AppState {
    pub fn new(config: ServiceConfig) -> jigsaw_core::Result<Self> {
        let catalog = match &config.manifest {
            Some(path) => Catalog::from_manifest_file(path)?,
            None => Catalog::default(),
        };
        Ok(Self {
            inner: Arc::new(Inner {
                config,
                catalog: RwLock::new(Arc::new(catalog)),
                build_lock: tokio::sync::Mutex::new(()),
            }),
        })
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.inner.config
    }

    pub fn catalog(&self) -> Arc<Catalog> {
        self.inner.catalog.read().expect("catalog lock").clone()
    }

    fn swap_catalog(&self, catalog: Catalog) {
        *self.inner.catalog.write().expect("catalog lock") = Arc::new(catalog);
    }
}

pub fn router(state: AppState) -> Router {
    let api = Router::new()
        .route("/v1/score", post(score))
        .route("/v1/learning-signal", post(learning_signal_handler))
        .route("/v1/datasets", post(create_dataset))
        .route("/v1/instances/{id}", get(instance))
        .route_layer(middleware::from_fn_with_state(state.clone(), require_token));
    Router::new()
        .route("/health", get(health))
        .merge(api)
        .layer(DefaultBodyLimit::max(BODY_LIMIT))
        .layer(TraceLayer::new_for_http())
        .with_state(state)
}

/// Binds `addr` and serves in a background task.
pub async fn spawn(state: AppState, addr: SocketAddr) -> std::io::Result<(SocketAddr, tokio::task::JoinHandle<()>)> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    let local = listener.local_addr()?;
    let app = router(state);
    let handle = tokio::spawn(async move {
        if let Err(e) = axum::serve(listener, app).await {
            tracing::error!("server stopped: {e}");
        }
    });
    Ok((local, handle))
}

/// Serves until interrupted.
pub async fn run(state: AppState, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

async fn require_token(State(state): State<AppState>, req: Request, next: Next) -> Response {
    if let Some(token) = &state.config().token {
        let supplied = req
            .headers()
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "));
        if supplied != Some(token.as_str()) {
            return ApiError::new(StatusCode::UNAUTHORIZED, "missing or invalid bearer token").into_response();
        }
    }
    next.run(req).await
}

fn parse_body<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("malformed body: {e}")))
}

async fn health(State(state): State<AppState>) -> Json<HealthResponse> {
    let catalog = state.catalog();
    Json(HealthResponse {
        status: "ok".to_owned(),
        version: VERSION.to_owned(),
        manifest_digest: catalog.manifest_digest.clone(),
        records: catalog.entries.len(),
        datasets: catalog.datasets.iter().cloned().collect(),
    })
}

fn resolve(item: &ScoreItem, catalog: &Catalog, index: usize) -> Result<(Mode, GroundTruth), ApiError> {
    match (&item.question_id, &item.inline) {
        (Some(id), None) => match catalog.entries.get(id) {
            Some(entry) => Ok((entry.record.mode, entry.record.ground_truth.clone())),
            None => Err(ApiError::new(StatusCode::NOT_FOUND, format!("item {index}: unknown question id `{id}`"))),
        },
        (None, Some(q)) => {
            q.ground_truth
                .validate()
                .map_err(|e| ApiError::bad_request(format!("item {index}: {e}")))?;
            if q.kind.is_some_and(|k| k != q.ground_truth.kind()) {
                return Err(ApiError::bad_request(format!("item {index}: kind does not match ground truth")));
            }
            if let (Some(grid), GroundTruth::Grid { grid: truth_grid, .. }) = (q.grid, &q.ground_truth) {
                if grid != *truth_grid {
                    return Err(ApiError::bad_request(format!("item {index}: grid does not match ground truth")));
                }
            }
            Ok((q.mode, q.ground_truth.clone()))
        }
        _ => Err(ApiError::bad_request(format!(
            "item {index}: exactly one of `question_id` and `inline` is required"
        ))),
    }
}

async fn score(State(state): State<AppState>, body: Bytes) -> ApiResult<ScoreResponse> {
    let req: ScoreRequest = parse_body(&body)?;
    let cap = state.config().batch_cap;
    if req.items.len() > cap {
        return Err(ApiError::new(
            StatusCode::PAYLOAD_TOO_LARGE,
            format!("{} items exceed the batch cap of {cap}", req.items.len()),
        ));
    }
    let catalog = state.catalog();
    let jobs = req
        .items
        .iter()
        .enumerate()
        .map(|(i, item)| resolve(item, &catalog, i))
        .collect::<Result<Vec<_>, _>>()?;
    let items = req.items;
    let results = tokio::task::spawn_blocking(move || {
        items
            .par_iter()
            .zip(jobs.par_iter())
            .map(|(item, (mode, truth))| ScoreResult::from(score_response(&item.raw_text, *mode, truth)))
            .collect::<Vec<_>>()
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
    tracing::debug!(items = results.len(), "scored batch");
    Ok(Json(ScoreResponse { results }))
}

async fn learning_signal_handler(body: Bytes) -> ApiResult<LearningSignalResponse> {
    let req: LearningSignalRequest = parse_body(&body)?;
    if req.groups.is_empty() {
        return Err(ApiError::bad_request("no groups"));
    }
    let group_size = match (req.group_size, &req.config) {
        (Some(g), Some(c)) if g != c.group_size => {
            return Err(ApiError::bad_request(format!(
                "group_size {g} disagrees with config.group_size {}",
                c.group_size
            )))
        }
        (Some(g), _) => g,
        (None, Some(c)) => c.group_size,
        (None, None) => req.groups[0].rewards.len(),
    };
    let config = GrpoConfig {
        group_size,
        ..req.config.unwrap_or_default()
    };
    config.validate().map_err(|e| ApiError::bad_request(e.to_string()))?;
    let mut results = Vec::with_capacity(req.groups.len());
    for (i, g) in req.groups.into_iter().enumerate() {
        if g.rewards.len() != group_size {
            return Err(ApiError::bad_request(format!(
                "group {i}: group-size mismatch, expected {group_size} rewards, got {}",
                g.rewards.len()
            )));
        }
        if !g.samples.is_empty() && g.samples.len() != group_size {
            return Err(ApiError::bad_request(format!(
                "group {i}: group-size mismatch, expected {group_size} samples, got {}",
                g.samples.len()
            )));
        }
        let group = RolloutGroup {
            rewards: g.rewards,
            samples: g.samples,
        };
        let (advantages, objective) =
            learning_signal(&group, &config).map_err(|e| ApiError::bad_request(format!("group {i}: {e}")))?;
        results.push(GroupSignal { advantages, objective });
    }
    Ok(Json(LearningSignalResponse { config, results }))
}

fn valid_dataset_id(id: &str) -> bool {
    !id.is_empty()
        && id != "."
        && id != ".."
        && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
}

async fn create_dataset(State(state): State<AppState>, body: Bytes) -> Result<(StatusCode, Json<DatasetResponse>), ApiError> {
    let req: DatasetRequest = parse_body(&body)?;
    if !valid_dataset_id(&req.dataset_id) {
        return Err(ApiError::bad_request("dataset_id must be non-empty and use only [A-Za-z0-9._-]"));
    }
    req.config.validate().map_err(|e| ApiError::bad_request(e.to_string()))?;

    let _guard = state.inner.build_lock.lock().await;
    let out_dir = state.config().data_dir.join(&req.dataset_id);
    if state.catalog().datasets.contains(&req.dataset_id) || out_dir.exists() {
        return Err(ApiError::new(
            StatusCode::CONFLICT,
            format!("dataset `{}` already exists", req.dataset_id),
        ));
    }
    // Ids are a function of the config alone, so collisions are detected
    // before any file is written.
    let keys = item_keys(&req.config).map_err(|e| ApiError::bad_request(e.to_string()))?;
    let catalog = state.catalog();
    if let Some(id) = keys
        .iter()
        .map(|k| k.id(&req.config.id_prefix))
        .find(|id| catalog.entries.contains_key(id))
    {
        return Err(ApiError::new(
            StatusCode::CONFLICT,
            format!("question id `{id}` is already loaded"),
        ));
    }

    let (corpus_dir, cfg, out) = (req.corpus.clone(), req.config.clone(), out_dir);
    let built = tokio::task::spawn_blocking(move || {
        let corpus = Corpus::scan(&corpus_dir).map_err(|e| ApiError::bad_request(e.to_string()))?;
        build_dataset(&corpus, &cfg, &out).map_err(|e| {
            let _ = std::fs::remove_dir_all(&out);
            let status = if e.is_config_error() {
                StatusCode::BAD_REQUEST
            } else {
                StatusCode::INTERNAL_SERVER_ERROR
            };
            ApiError::new(status, e.to_string())
        })
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;

    let mut next = (*catalog).clone();
    next.insert_all(&built.manifest, Some(&req.dataset_id))
        .map_err(|id| ApiError::new(StatusCode::CONFLICT, format!("question id `{id}` is already loaded")))?;
    let bytes = std::fs::read(&built.manifest_path)
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
    state.swap_catalog(next);
    tracing::info!(dataset = %req.dataset_id, records = built.manifest.len(), "dataset built");
    Ok((
        StatusCode::CREATED,
        Json(DatasetResponse {
            dataset_id: req.dataset_id,
            manifest_path: built.manifest_path,
            manifest_digest: sha256_hex(&bytes),
            ids: built.manifest.records.iter().map(|r| r.id.clone()).collect(),
            skipped: built.skipped,
        }),
    ))
}

async fn instance(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<InstanceResponse> {
    let catalog = state.catalog();
    let entry = catalog
        .entries
        .get(&id)
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("unknown instance `{id}`")))?;
    Ok(Json(InstanceResponse {
        dataset_id: entry.dataset_id.clone(),
        prompt: entry.record.prompt.clone(),
        record: (*entry.record).clone(),
    }))
}
