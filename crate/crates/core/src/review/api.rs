//! JSON HTTP surface for the review UI:
//!
//! | method | path          | body / query                       | reply            |
//! |--------|---------------|------------------------------------|------------------|
//! | GET    | `/candidates` | `state`, `page`, `per_page`        | [`CandidatePage`]|
//! | POST   | `/reviews`    | [`ReviewSubmission`]               | [`GateDecision`] |
//! | GET    | `/stats`      |                                    | [`ReviewStats`]  |
//!
//! Errors are `{"error": "..."}` with 400 (validation), 404 (unknown record
//! or no reviews yet) or 409 (already reviewed, fatal flag).

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use axum::Router;
use axum::body::Bytes;
use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use parking_lot::Mutex;
use serde::Deserialize;
use serde_json::json;

use super::{CandidatePage, GateDecision, ReviewError, ReviewStats, ReviewSubmission};
use crate::corpus::{ReviewState, Store};

pub type SharedStore = Arc<Mutex<Store>>;

#[derive(Debug, Deserialize)]
struct CandidateQuery {
    state: Option<String>,
    page: Option<usize>,
    per_page: Option<usize>,
}

struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, axum::Json(json!({ "error": self.1 }))).into_response()
    }
}

impl From<ReviewError> for ApiError {
    fn from(e: ReviewError) -> Self {
        let status = match &e {
            ReviewError::ScoreOutOfRange { .. } | ReviewError::EmptyReviewer => StatusCode::BAD_REQUEST,
            ReviewError::UnknownRecord(_) | ReviewError::NoReviews => StatusCode::NOT_FOUND,
            ReviewError::AlreadyReviewed { .. } | ReviewError::FatalFlag(_) => StatusCode::CONFLICT,
            ReviewError::Store(_) | ReviewError::Io(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError(status, e.to_string())
    }
}

async fn candidates(
    State(store): State<SharedStore>,
    Query(q): Query<CandidateQuery>,
) -> Result<axum::Json<CandidatePage>, ApiError> {
    let state = match q.state.as_deref() {
        None | Some("all") => None,
        Some(s) => Some(s.parse::<ReviewState>().map_err(|e| ApiError(StatusCode::BAD_REQUEST, e))?),
    };
    let store = store.lock();
    Ok(axum::Json(super::list_candidates(&store, state, q.page.unwrap_or(1), q.per_page.unwrap_or(20))))
}

async fn reviews(State(store): State<SharedStore>, body: Bytes) -> Result<axum::Json<GateDecision>, ApiError> {
    let sub: ReviewSubmission =
        serde_json::from_slice(&body).map_err(|e| ApiError(StatusCode::BAD_REQUEST, format!("invalid review: {e}")))?;
    let now = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let mut store = store.lock();
    let decision = super::submit_review(&mut store, sub, now)?;
    store.save().map_err(ReviewError::from)?;
    Ok(axum::Json(decision))
}

async fn stats(State(store): State<SharedStore>) -> Result<axum::Json<ReviewStats>, ApiError> {
    let store = store.lock();
    Ok(axum::Json(super::aggregate_reviews(store.reviews())?))
}

/// Routes over a shared store; when `ui_dir` is set, every other path is
/// served from that directory.
pub fn router(store: SharedStore, ui_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/candidates", get(candidates))
        .route("/reviews", post(reviews))
        .route("/stats", get(stats))
        .with_state(store);
    match ui_dir {
        Some(dir) => api.fallback_service(tower_http::services::ServeDir::new(dir)),
        None => api,
    }
}

/// Binds `addr` and serves until the process is stopped.
pub fn serve(store: Store, addr: SocketAddr, ui_dir: Option<PathBuf>) -> std::io::Result<()> {
    serve_listener(store, std::net::TcpListener::bind(addr)?, ui_dir)
}

/// Serves on an already bound listener, so callers can bind port 0 and
/// report the chosen address first.
pub fn serve_listener(store: Store, listener: std::net::TcpListener, ui_dir: Option<PathBuf>) -> std::io::Result<()> {
    let app = router(Arc::new(Mutex::new(store)), ui_dir);
    listener.set_nonblocking(true)?;
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::from_std(listener)?;
        tracing::info!("review API listening on http://{}", listener.local_addr()?);
        axum::serve(listener, app).await
    })
}
