//! Review API and static UI.
//!
//! Reads load the current [`QueueState`] snapshot without locking. Every
//! mutation goes through one writer mutex: validate, append to the log,
//! fsync, then publish a new snapshot.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::Arc;

use arc_swap::ArcSwap;
use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{DateTime, Utc};
use relabel_core::active_loop::{ReviewDecision, Verdict};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::sync::Mutex;
use tower_http::services::{ServeDir, ServeFile};

use crate::store::{self, DataDir, DecisionError, DecisionLog, MergeSummary, Outcome, QueueState, ReviewItem, Stats, Status};

const DEFAULT_PER_PAGE: usize = 50;
const MAX_PER_PAGE: usize = 500;

pub struct AppState {
    dir: DataDir,
    snapshot: ArcSwap<QueueState>,
    writer: Mutex<DecisionLog>,
}

impl AppState {
    pub fn new(dir: DataDir, state: QueueState, log: DecisionLog) -> Arc<Self> {
        Arc::new(AppState { dir, snapshot: ArcSwap::from_pointee(state), writer: Mutex::new(log) })
    }

    /// Loads the queue from `dir` and replays its decision log.
    pub fn open(dir: DataDir) -> store::Result<Arc<Self>> {
        let (state, log) = store::open_queue(&dir)?;
        Ok(Self::new(dir, state, log))
    }

    pub fn snapshot(&self) -> Arc<QueueState> {
        self.snapshot.load_full()
    }
}

#[derive(Debug)]
pub enum ApiError {
    BadRequest(String),
    NotFound(String),
    Unprocessable(String),
    Internal(String),
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (code, msg) = match self {
            ApiError::BadRequest(m) => (StatusCode::BAD_REQUEST, m),
            ApiError::NotFound(m) => (StatusCode::NOT_FOUND, m),
            ApiError::Unprocessable(m) => (StatusCode::UNPROCESSABLE_ENTITY, m),
            ApiError::Internal(m) => {
                log::error!("{m}");
                (StatusCode::INTERNAL_SERVER_ERROR, m)
            }
        };
        (code, Json(json!({ "error": msg }))).into_response()
    }
}

impl From<store::StoreError> for ApiError {
    fn from(e: store::StoreError) -> Self {
        match e {
            store::StoreError::Merge(e) => ApiError::Unprocessable(e.to_string()),
            other => ApiError::Internal(other.to_string()),
        }
    }
}

/// Builds the router. `ui_dir`, when it exists, is served at `/` with
/// `index.html` as the fallback for client-side routes.
pub fn router(state: Arc<AppState>, ui_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/api/queue", get(get_queue))
        .route("/api/items/{id}", get(get_item))
        .route("/api/items/{id}/decision", post(post_decision))
        .route("/api/stats", get(get_stats))
        .route("/api/merge", post(post_merge))
        .with_state(state);
    match ui_dir.filter(|d| d.is_dir()) {
        Some(dir) => {
            let index = dir.join("index.html");
            api.fallback_service(ServeDir::new(dir).fallback(ServeFile::new(index)))
        }
        None => api.fallback(get(placeholder)),
    }
}

async fn placeholder() -> Html<&'static str> {
    Html(
        "<!doctype html><title>relabel</title><p>The review UI is not installed. \
         Pass <code>--ui-dir</code> to <code>relabel serve</code>. The API lives under \
         <a href=\"/api/queue\">/api/queue</a>.</p>",
    )
}

/// Queue listing row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueSummary {
    pub utterance_id: String,
    pub tokens: Vec<String>,
    pub status: Status,
    pub max_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueuePage {
    pub items: Vec<QueueSummary>,
    pub page: usize,
    pub per_page: usize,
    pub total: usize,
}

fn parse_param<T: std::str::FromStr>(params: &HashMap<String, String>, key: &str) -> Result<Option<T>, ApiError> {
    params
        .get(key)
        .map(|v| v.parse::<T>().map_err(|_| ApiError::BadRequest(format!("bad value `{v}` for `{key}`"))))
        .transpose()
}

async fn get_queue(State(app): State<Arc<AppState>>, Query(params): Query<HashMap<String, String>>) -> Result<Json<QueuePage>, ApiError> {
    if let Some(k) = params.keys().find(|k| !["status", "page", "per_page"].contains(&k.as_str())) {
        return Err(ApiError::BadRequest(format!("unknown parameter `{k}`")));
    }
    let status: Option<Status> = params
        .get("status")
        .map(|v| v.parse().map_err(ApiError::BadRequest))
        .transpose()?;
    let page: usize = parse_param(&params, "page")?.unwrap_or(1);
    let per_page: usize = parse_param(&params, "per_page")?.unwrap_or(DEFAULT_PER_PAGE);
    if page == 0 {
        return Err(ApiError::BadRequest("`page` starts at 1".into()));
    }
    if !(1..=MAX_PER_PAGE).contains(&per_page) {
        return Err(ApiError::BadRequest(format!("`per_page` must be between 1 and {MAX_PER_PAGE}")));
    }
    let snap = app.snapshot();
    let matching: Vec<QueueSummary> = snap
        .items()
        .iter()
        .enumerate()
        .filter(|(_, it)| status.is_none_or(|s| it.status == s))
        .map(|(i, it)| QueueSummary {
            utterance_id: it.utterance_id.clone(),
            tokens: it.tokens.clone(),
            status: it.status,
            max_gap: snap.max_gap(i),
        })
        .collect();
    let total = matching.len();
    let items = matching.into_iter().skip((page - 1).saturating_mul(per_page)).take(per_page).collect();
    Ok(Json(QueuePage { items, page, per_page, total }))
}

async fn get_item(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<ReviewItem>, ApiError> {
    app.snapshot()
        .get(&id)
        .cloned()
        .map(Json)
        .ok_or_else(|| ApiError::NotFound(format!("no queued item `{id}`")))
}

/// Body of a decision post; the id comes from the path and the timestamp
/// defaults to the server clock.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecisionRequest {
    pub verdict: Verdict,
    #[serde(default)]
    pub new_tags: Option<Vec<String>>,
    pub annotator_id: String,
    #[serde(default)]
    pub timestamp: Option<DateTime<Utc>>,
    #[serde(default)]
    pub utterance_id: Option<String>,
}

async fn post_decision(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Result<Json<DecisionRequest>, JsonRejection>,
) -> Result<Json<ReviewItem>, ApiError> {
    if app.snapshot().get(&id).is_none() {
        return Err(ApiError::NotFound(format!("no queued item `{id}`")));
    }
    let Json(req) = body.map_err(|e| ApiError::Unprocessable(e.body_text()))?;
    if req.utterance_id.as_ref().is_some_and(|u| *u != id) {
        return Err(ApiError::Unprocessable("body utterance_id does not match the path".into()));
    }
    if req.annotator_id.trim().is_empty() {
        return Err(ApiError::Unprocessable("annotator_id must not be empty".into()));
    }
    let decision = ReviewDecision {
        utterance_id: id.clone(),
        verdict: req.verdict,
        new_tags: req.new_tags,
        annotator_id: req.annotator_id,
        timestamp: req.timestamp.unwrap_or_else(Utc::now),
    };

    let mut log = app.writer.lock().await;
    let current = app.snapshot();
    match current.check(&decision) {
        Err(DecisionError::NotQueued(m)) => return Err(ApiError::NotFound(m)),
        Err(DecisionError::Invalid(e)) => return Err(ApiError::Unprocessable(e.to_string())),
        Ok(Outcome::Duplicate) => {}
        Ok(Outcome::Appended) => {
            log.append(&decision)?;
            let mut next = (*current).clone();
            next.apply(decision).map_err(|e| ApiError::Internal(e.to_string()))?;
            app.snapshot.store(Arc::new(next));
        }
    }
    drop(log);
    Ok(Json(app.snapshot().get(&id).cloned().expect("item checked above")))
}

async fn get_stats(State(app): State<Arc<AppState>>) -> Json<Stats> {
    Json(app.snapshot().stats())
}

/// Writes `merged.conll` in the data directory from the corpus and the full log.
async fn post_merge(State(app): State<Arc<AppState>>) -> Result<Json<MergeSummary>, ApiError> {
    // holding the writer keeps the log stable while it is read
    let _guard = app.writer.lock().await;
    let ts = app.dir.load_tag_set()?;
    let summary = store::merge_files(&ts, &app.dir.corpus(), &app.dir.decisions(), &app.dir.merged())?;
    Ok(Json(summary))
}
