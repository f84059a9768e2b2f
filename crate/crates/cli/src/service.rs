//! Local HTTP service: predictions with favorites reranking, and durable
//! insertion events.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, RwLock};

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use dashmap::DashMap;
use serde::{Deserialize, Serialize};

use emoji_predict::classifier::{model_version, ClassifierModel, ModelError, Prediction};
use emoji_predict::corpus::EmojiId;
use emoji_predict::personalization::{
    load_store, rerank, user_log_path, EventLog, FavoritesStore, InsertionEvent, InsertionSource, RerankConfig,
    RerankError,
};
use emoji_predict::Model;

pub const MAX_TEXT_CHARS: usize = 2000;

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub model_path: PathBuf,
    pub data_dir: PathBuf,
    pub bind: SocketAddr,
    pub default_k: usize,
    pub rerank: RerankConfig,
}

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("{}: {source}", path.display())]
    Model {
        path: PathBuf,
        #[source]
        source: ModelError,
    },
    #[error("invalid service config: {0}")]
    Config(String),
}

/// Favorites of one user. Writers are serialized by the log mutex; readers
/// take a cheap snapshot.
struct UserState {
    log_path: PathBuf,
    log: Mutex<Option<EventLog>>,
    snapshot: RwLock<Arc<FavoritesStore>>,
}

pub struct AppState {
    model: Model,
    model_version: String,
    data_dir: PathBuf,
    default_k: usize,
    rerank: RerankConfig,
    users: DashMap<String, Arc<UserState>>,
}

impl AppState {
    pub fn new(model: Model, model_version: String, data_dir: impl Into<PathBuf>, default_k: usize, rerank: RerankConfig) -> Result<Self, ServiceError> {
        if default_k == 0 {
            return Err(ServiceError::Config("default_k must be at least 1".into()));
        }
        rerank.validate().map_err(|e| ServiceError::Config(e.to_string()))?;
        Ok(AppState { model, model_version, data_dir: data_dir.into(), default_k, rerank, users: DashMap::new() })
    }

    pub fn load(cfg: &ServiceConfig) -> Result<Self, ServiceError> {
        let model_err = |source| ServiceError::Model { path: cfg.model_path.clone(), source };
        let bytes = std::fs::read(&cfg.model_path).map_err(|e| model_err(ModelError::Io(e)))?;
        let model = ClassifierModel::from_bytes(&bytes).map_err(model_err)?;
        Self::new(model, model_version(&bytes), &cfg.data_dir, cfg.default_k, cfg.rerank)
    }

    pub fn model_version(&self) -> &str {
        &self.model_version
    }

    fn user(&self, id: &str) -> Result<Arc<UserState>, ApiError> {
        if let Some(u) = self.users.get(id) {
            return Ok(Arc::clone(&u));
        }
        let log_path = user_log_path(&self.data_dir, id);
        let store = load_store(&log_path).map_err(|e| ApiError::internal(e.to_string()))?;
        let fresh = Arc::new(UserState { log_path, log: Mutex::new(None), snapshot: RwLock::new(Arc::new(store)) });
        Ok(Arc::clone(&self.users.entry(id.to_string()).or_insert(fresh)))
    }
}

#[derive(Debug, Serialize)]
struct ErrorBody {
    error: String,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn bad_request(message: impl Into<String>) -> Self {
        ApiError { status: StatusCode::BAD_REQUEST, message: message.into() }
    }

    fn internal(message: impl Into<String>) -> Self {
        ApiError { status: StatusCode::INTERNAL_SERVER_ERROR, message: message.into() }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(ErrorBody { error: self.message })).into_response()
    }
}

fn parse_body<T: for<'de> Deserialize<'de>>(body: &Bytes) -> Result<T, ApiError> {
    let de = &mut serde_json::Deserializer::from_slice(body);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        if path == "." {
            ApiError::bad_request(format!("invalid request body: {}", e.inner()))
        } else {
            ApiError::bad_request(format!("{path}: {}", e.inner()))
        }
    })
}

/// User ids name a directory, so they are restricted to a safe alphabet.
fn check_user_id(id: &str) -> Result<(), ApiError> {
    let ok = (1..=64).contains(&id.len()) && id.bytes().all(|c| c.is_ascii_alphanumeric() || c == b'-' || c == b'_');
    if ok {
        Ok(())
    } else {
        Err(ApiError::bad_request("user_id: use 1-64 characters from [A-Za-z0-9_-]"))
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictRequest {
    pub user_id: String,
    pub text: String,
    pub k: Option<usize>,
    pub alpha: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedEmoji {
    pub emoji: String,
    pub final_score: f64,
    pub model_prob: f64,
    pub favorites_prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictResponse {
    pub ranked: Vec<RankedEmoji>,
    pub model_version: String,
    pub alpha: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventRequest {
    pub user_id: String,
    pub emoji: String,
    pub source: InsertionSource,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct FavoritesResponse {
    pub user_id: String,
    pub counts: std::collections::BTreeMap<String, u64>,
    pub total: u64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub model_version: String,
}

async fn predict(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Response, ApiError> {
    let req: PredictRequest = parse_body(&body)?;
    check_user_id(&req.user_id)?;
    if req.text.chars().count() > MAX_TEXT_CHARS {
        return Err(ApiError {
            status: StatusCode::PAYLOAD_TOO_LARGE,
            message: format!("text: longer than {MAX_TEXT_CHARS} characters"),
        });
    }
    let k = req.k.unwrap_or(state.default_k);
    if k == 0 {
        return Err(ApiError::bad_request("k: must be at least 1"));
    }
    let cfg = RerankConfig { alpha: req.alpha.unwrap_or(state.rerank.alpha), ..state.rerank };
    cfg.validate().map_err(|e| ApiError::bad_request(format!("alpha: {e}")))?;

    let store = Arc::clone(&state.user(&req.user_id)?.snapshot.read().expect("snapshot lock"));
    let ranked = rank_for_user(&state.model, &req.text, k, &store, &cfg).map_err(|e| ApiError::bad_request(e.to_string()))?;
    Ok(Json(PredictResponse { ranked, model_version: state.model_version.clone(), alpha: cfg.alpha }).into_response())
}

/// Top `k` of the full model distribution reranked against `store`.
pub fn rank_for_user(model: &Model, text: &str, k: usize, store: &FavoritesStore, cfg: &RerankConfig) -> Result<Vec<RankedEmoji>, RerankError> {
    let full: Prediction<f64> = model.predict(text, model.n_classes()).cast();
    let out = rerank(&full, store, cfg)?;
    Ok(out
        .ranked
        .into_iter()
        .take(k)
        .map(|r| RankedEmoji {
            emoji: r.emoji.to_string(),
            final_score: r.final_score,
            model_prob: r.model_prob,
            favorites_prob: r.favorites_prob,
        })
        .collect())
}

fn append_event(user: &UserState, event: InsertionEvent) -> Result<(), ApiError> {
    let mut log = user.log.lock().expect("log lock");
    if log.is_none() {
        *log = Some(EventLog::open(&user.log_path).map_err(|e| ApiError::internal(e.to_string()))?);
    }
    log.as_mut().expect("opened").append(&event).map_err(|e| ApiError::internal(e.to_string()))?;
    let mut snapshot = user.snapshot.write().expect("snapshot lock");
    let mut next = FavoritesStore::clone(&snapshot);
    next.record_insertion(event.emoji);
    *snapshot = Arc::new(next);
    Ok(())
}

async fn record_event(State(state): State<Arc<AppState>>, body: Bytes) -> Result<StatusCode, ApiError> {
    let req: EventRequest = parse_body(&body)?;
    check_user_id(&req.user_id)?;
    let emoji = EmojiId::new(&req.emoji).map_err(|e| ApiError::bad_request(format!("emoji: {e}")))?;
    let user = state.user(&req.user_id)?;
    let event = InsertionEvent::now(emoji, req.source);
    tokio::task::spawn_blocking(move || append_event(&user, event))
        .await
        .map_err(|e| ApiError::internal(e.to_string()))??;
    Ok(StatusCode::NO_CONTENT)
}

async fn favorites(State(state): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> Result<Json<FavoritesResponse>, ApiError> {
    check_user_id(&id)?;
    let store = Arc::clone(&state.user(&id)?.snapshot.read().expect("snapshot lock"));
    Ok(Json(FavoritesResponse {
        user_id: id,
        counts: store.counts().iter().map(|(e, c)| (e.to_string(), *c)).collect(),
        total: store.total(),
    }))
}

async fn healthz(State(state): State<Arc<AppState>>) -> Json<Health> {
    Json(Health { status: "ok".into(), model_version: state.model_version.clone() })
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/v1/predict", post(predict))
        .route("/v1/events", post(record_event))
        .route("/v1/users/{id}/favorites", get(favorites))
        .route("/v1/healthz", get(healthz))
        .with_state(state)
}

pub async fn serve(cfg: ServiceConfig) -> Result<(), Box<dyn std::error::Error + Send + Sync>> {
    let state = Arc::new(AppState::load(&cfg)?);
    let listener = tokio::net::TcpListener::bind(cfg.bind).await?;
    log::info!("serving model {} on {}", state.model_version(), listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
