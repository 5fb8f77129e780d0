//! JSON HTTP API. Handlers are thin adapters over the dialogue engine, the
//! knowledge store and [`run_backtest_files`]; model calls run on the
//! blocking pool.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::{Component, Path, PathBuf};
use std::sync::{Arc, Mutex};

use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use super::{run_backtest_files, BacktestFilesError};
use crate::backtest::{BacktestConfig, Window};
use crate::dialogue::{validate_session_id, DialogueEngine, DialogueError, SessionStore};
use crate::gateway::digest;
use crate::store::{Granularity, GranularityFilter, RetrievalHit, StoreError};

#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

struct Inner {
    engine: DialogueEngine,
    sessions: SessionStore,
    scenarios: Option<PathBuf>,
    rf: f64,
    runs: Mutex<BTreeMap<String, String>>,
}

impl AppState {
    pub fn new(engine: DialogueEngine, sessions: SessionStore, scenarios: Option<PathBuf>, rf: f64) -> Self {
        Self {
            inner: Arc::new(Inner {
                engine,
                sessions,
                scenarios,
                rf,
                runs: Mutex::new(BTreeMap::new()),
            }),
        }
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    kind: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, kind: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            kind,
            message: message.into(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = serde_json::json!({"error": {"kind": self.kind, "message": self.message}});
        (self.status, Json(body)).into_response()
    }
}

impl From<DialogueError> for ApiError {
    fn from(e: DialogueError) -> Self {
        let (status, kind) = match &e {
            DialogueError::EmptyQuery | DialogueError::InvalidSessionId(_) => (StatusCode::BAD_REQUEST, "input"),
            DialogueError::NotFound(_) => (StatusCode::NOT_FOUND, "not_found"),
            DialogueError::Retrieval(_) => (StatusCode::INTERNAL_SERVER_ERROR, "store"),
            DialogueError::Backend(_) => (StatusCode::BAD_GATEWAY, "backend"),
            DialogueError::Transcript { .. } => (StatusCode::INTERNAL_SERVER_ERROR, "io"),
        };
        ApiError::new(status, kind, e.to_string())
    }
}

impl From<BacktestFilesError> for ApiError {
    fn from(e: BacktestFilesError) -> Self {
        match e {
            BacktestFilesError::Input { .. } => ApiError::new(StatusCode::BAD_REQUEST, "input", e.to_string()),
            BacktestFilesError::Backtest(b) => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "backtest", b.to_string()),
        }
    }
}

fn join_error(e: tokio::task::JoinError) -> ApiError {
    ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Evidence {
    pub doc_id: String,
    pub granularity: Granularity,
    pub score: f64,
    pub key_text: String,
    pub payload_text: String,
}

impl From<&RetrievalHit> for Evidence {
    fn from(h: &RetrievalHit) -> Self {
        Self {
            doc_id: h.record.unit.doc_id.clone(),
            granularity: h.record.unit.granularity,
            score: h.score,
            key_text: h.record.unit.key_text.clone(),
            payload_text: h.record.unit.payload_text.clone(),
        }
    }
}

#[derive(Deserialize)]
struct ChatRequest {
    session_id: String,
    query: String,
}

#[derive(Serialize)]
struct ChatResponse {
    response: String,
    evidence: Vec<Evidence>,
    turn: usize,
}

async fn chat(State(state): State<AppState>, Json(req): Json<ChatRequest>) -> Result<Json<ChatResponse>, ApiError> {
    let reply = tokio::task::spawn_blocking(move || {
        state
            .inner
            .sessions
            .respond(&state.inner.engine, &req.session_id, &req.query)
    })
    .await
    .map_err(join_error)??;
    Ok(Json(ChatResponse {
        evidence: reply.evidence.iter().map(Evidence::from).collect(),
        response: reply.response,
        turn: reply.turn,
    }))
}

#[derive(Deserialize)]
struct ResetRequest {
    session_id: String,
}

async fn reset(State(state): State<AppState>, Json(req): Json<ResetRequest>) -> Result<Json<serde_json::Value>, ApiError> {
    state.inner.sessions.reset(&req.session_id)?;
    Ok(Json(serde_json::json!({"session_id": req.session_id, "turns": 0})))
}

async fn session(
    State(state): State<AppState>,
    UrlPath(id): UrlPath<String>,
) -> Result<Json<crate::dialogue::DialogueSession>, ApiError> {
    Ok(Json(state.inner.sessions.get(&id)?))
}

#[derive(Deserialize)]
struct RetrieveQuery {
    q: String,
    k: Option<usize>,
    #[serde(default)]
    granularity: GranularityFilter,
}

async fn retrieve(
    State(state): State<AppState>,
    Query(params): Query<RetrieveQuery>,
) -> Result<Json<serde_json::Value>, ApiError> {
    let k = params.k.unwrap_or(state.inner.engine.k);
    if k == 0 {
        return Err(ApiError::new(StatusCode::BAD_REQUEST, "input", "k must be at least 1"));
    }
    let hits = tokio::task::spawn_blocking(move || {
        let e = &state.inner.engine;
        e.store.retrieve(&params.q, k, e.embedder.as_ref(), params.granularity)
    })
    .await
    .map_err(join_error)?;
    let hits = match hits {
        Ok(h) => h,
        Err(StoreError::EmptyIndex) => Vec::new(),
        Err(StoreError::Gateway(g)) if matches!(g, crate::gateway::GatewayError::Input(_)) => {
            return Err(ApiError::new(StatusCode::BAD_REQUEST, "input", g.to_string()))
        }
        Err(e) => return Err(ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "store", e.to_string())),
    };
    let hits: Vec<Evidence> = hits.iter().map(Evidence::from).collect();
    Ok(Json(serde_json::json!({ "hits": hits })))
}

#[derive(Deserialize)]
struct BacktestRequest {
    scenario: Option<String>,
    predictions: Option<String>,
    prices: Option<String>,
    benchmark: Option<String>,
    rf: Option<f64>,
    window: Option<Window>,
}

/// Relative path inside `root` with no parent or absolute components.
fn confined(root: &Path, rel: &str) -> Result<PathBuf, ApiError> {
    let p = Path::new(rel);
    if rel.is_empty() || p.components().any(|c| !matches!(c, Component::Normal(_))) {
        return Err(ApiError::new(StatusCode::BAD_REQUEST, "input", format!("invalid file reference `{rel}`")));
    }
    Ok(root.join(p))
}

async fn backtest(State(state): State<AppState>, Json(req): Json<BacktestRequest>) -> Result<Response, ApiError> {
    let root = state
        .inner
        .scenarios
        .clone()
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "not_found", "no scenario directory configured"))?;
    let (predictions, prices, benchmark) = match (&req.scenario, &req.predictions, &req.prices) {
        (Some(name), None, None) => {
            validate_session_id(name)
                .map_err(|_| ApiError::new(StatusCode::BAD_REQUEST, "input", format!("invalid scenario `{name}`")))?;
            let dir = root.join(name);
            if !dir.is_dir() {
                return Err(ApiError::new(StatusCode::NOT_FOUND, "not_found", format!("unknown scenario `{name}`")));
            }
            let bench = dir.join("benchmark.csv");
            (dir.join("predictions.jsonl"), dir.join("prices.jsonl"), bench.exists().then_some(bench))
        }
        (None, Some(p), Some(px)) => (
            confined(&root, p)?,
            confined(&root, px)?,
            req.benchmark.as_deref().map(|b| confined(&root, b)).transpose()?,
        ),
        _ => {
            return Err(ApiError::new(
                StatusCode::BAD_REQUEST,
                "input",
                "give either `scenario` or both `predictions` and `prices`",
            ))
        }
    };
    let config = BacktestConfig {
        rf: req.rf.unwrap_or(state.inner.rf),
        window: req.window.map(|w| (w.start, w.end)),
        ..BacktestConfig::default()
    };
    let artifacts = tokio::task::spawn_blocking(move || {
        run_backtest_files(&predictions, &prices, benchmark.as_deref(), &config)
    })
    .await
    .map_err(join_error)??;
    let run_id = digest(&artifacts.report_json)[..16].to_string();
    state.inner.runs.lock().unwrap().insert(run_id.clone(), artifacts.curve_csv);
    let mut resp = (
        [(header::CONTENT_TYPE, HeaderValue::from_static("application/json"))],
        artifacts.report_json,
    )
        .into_response();
    resp.headers_mut()
        .insert("x-run-id", HeaderValue::from_str(&run_id).expect("hex header"));
    Ok(resp)
}

#[derive(Deserialize)]
struct CurveQuery {
    run: String,
}

async fn equity_curve(State(state): State<AppState>, Query(q): Query<CurveQuery>) -> Result<Response, ApiError> {
    let csv = state
        .inner
        .runs
        .lock()
        .unwrap()
        .get(&q.run)
        .cloned()
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "not_found", format!("unknown run `{}`", q.run)))?;
    Ok(([(header::CONTENT_TYPE, HeaderValue::from_static("text/csv"))], csv).into_response())
}

async fn health(State(state): State<AppState>) -> Result<Json<serde_json::Value>, ApiError> {
    let (model, embedder) = tokio::task::spawn_blocking(move || {
        let e = &state.inner.engine;
        (e.backend.healthy(), e.embedder.healthy())
    })
    .await
    .map_err(join_error)?;
    let status = if model && embedder { "ok" } else { "degraded" };
    Ok(Json(serde_json::json!({
        "status": status,
        "backends": {"model": model, "embedder": embedder},
    })))
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/chat", post(chat))
        .route("/api/session/reset", post(reset))
        .route("/api/session/:id", get(session))
        .route("/api/retrieve", get(retrieve))
        .route("/api/backtest", post(backtest))
        .route("/api/equity-curve", get(equity_curve))
        .route("/api/health", get(health))
        .with_state(state)
}

/// Binds `addr` and serves until Ctrl-C. Session transcripts are written
/// per turn, so nothing is pending at shutdown.
pub async fn serve(state: AppState, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

