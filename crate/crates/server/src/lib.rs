//! Workstation HTTP service.
//!
//! | Method | Path | Body / response |
//! |---|---|---|
//! | GET | `/assets` | serial list |
//! | GET, PUT | `/assets/{serial}/submodels/{name}` | canonical submodel document / ack |
//! | GET | `/assets/{serial}/mesh` | ASCII PLY of the asset's model |
//! | GET | `/session` | session view |
//! | POST | `/session/scan` | `{serial}` |
//! | POST | `/session/defect/{id}/select` | |
//! | POST | `/session/layers` | `{layer, enabled}` → overlay frame or `null` |
//! | POST | `/session/detail` | `{kind, duration_s}` → `{logged}` |
//! | POST | `/session/document` | `{record}` |
//! | POST | `/session/abort` | |
//! | GET | `/session/overlay` | latest overlay frame, 204 before the first |
//! | GET | `/session/log` | action log CSV |
//! | GET | `/session/events` | server-sent events `state`, `overlay`, `error` |
//!
//! Anything else is served from the static directory, if one is configured.

pub mod actor;

use std::collections::HashMap;
use std::convert::Infallible;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use bladeassist::evaluation::format_action_log;
use bladeassist::session::{DetailKind, ModelRegistry, Notification, OverlayLayer, SessionError};
use bladeassist::twin::{DocumentationRecord, FieldError, TwinError, TwinStore};
use serde::{Deserialize, Serialize};
use tokio_stream::wrappers::BroadcastStream;
use tokio_stream::{Stream, StreamExt};

pub use actor::{replay, spawn, CallError, SessionGone, SessionHandle};

#[derive(Clone)]
pub struct AppState {
    pub store: Arc<TwinStore>,
    /// ASCII PLY text per model id.
    pub meshes: Arc<HashMap<String, String>>,
    pub session: SessionHandle,
}

impl AppState {
    pub fn new(store: Arc<TwinStore>, models: &ModelRegistry, session: SessionHandle) -> Self {
        let meshes = models.iter().map(|(id, m)| (id.clone(), m.mesh.to_ply())).collect();
        AppState { store, meshes: Arc::new(meshes), session }
    }
}

#[derive(Debug, Serialize)]
struct ErrorBody {
    error: String,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    fields: Vec<FieldError>,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: ErrorBody,
}

impl ApiError {
    fn new(status: StatusCode, msg: impl Into<String>) -> Self {
        ApiError { status, body: ErrorBody { error: msg.into(), fields: Vec::new() } }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

impl From<TwinError> for ApiError {
    fn from(e: TwinError) -> Self {
        let msg = e.to_string();
        match e {
            TwinError::NotFound(_) => ApiError::new(StatusCode::NOT_FOUND, msg),
            TwinError::AlreadyExists(_) => ApiError::new(StatusCode::CONFLICT, msg),
            TwinError::Invalid(fields) => {
                ApiError { status: StatusCode::UNPROCESSABLE_ENTITY, body: ErrorBody { error: msg, fields } }
            }
            TwinError::Corrupt { .. } | TwinError::Io(_) => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, msg),
        }
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        let msg = e.to_string();
        match e {
            SessionError::Twin(t) => t.into(),
            SessionError::UnknownSerial(_) | SessionError::NotFound(_) => ApiError::new(StatusCode::NOT_FOUND, msg),
            SessionError::Busy | SessionError::IllegalTransition { .. } => ApiError::new(StatusCode::CONFLICT, msg),
            SessionError::UnknownModel(_) => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, msg),
        }
    }
}

impl From<SessionGone> for ApiError {
    fn from(e: SessionGone) -> Self {
        ApiError::new(StatusCode::SERVICE_UNAVAILABLE, e.to_string())
    }
}

impl From<CallError> for ApiError {
    fn from(e: CallError) -> Self {
        match e {
            CallError::Session(e) => e.into(),
            CallError::Gone(e) => e.into(),
        }
    }
}

type ApiResult<T> = Result<T, ApiError>;

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, TwinError> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
        .map_err(Into::into)
}

fn json_text(text: String) -> Response {
    ([(header::CONTENT_TYPE, "application/json")], text).into_response()
}

async fn list_assets(State(st): State<AppState>) -> Json<Vec<String>> {
    Json(st.store.list_serials())
}

async fn get_submodel(State(st): State<AppState>, Path((serial, name)): Path<(String, String)>) -> ApiResult<Response> {
    Ok(json_text(st.store.get_submodel(&serial, &name)?))
}

async fn put_submodel(
    State(st): State<AppState>,
    Path((serial, name)): Path<(String, String)>,
    body: String,
) -> ApiResult<Response> {
    let store = st.store.clone();
    let ack = blocking(move || store.put_submodel(&serial, &name, &body)).await?;
    Ok(Json(ack).into_response())
}

async fn get_mesh(State(st): State<AppState>, Path(serial): Path<String>) -> ApiResult<Response> {
    let asset = st.store.asset(&serial)?;
    let ply = st
        .meshes
        .get(&asset.model_id)
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("no mesh for model {:?}", asset.model_id)))?;
    Ok(([(header::CONTENT_TYPE, "text/plain; charset=utf-8")], ply.clone()).into_response())
}

async fn session_view(State(st): State<AppState>) -> ApiResult<Response> {
    Ok(Json(st.session.view().await?).into_response())
}

#[derive(Debug, Deserialize)]
pub struct ScanRequest {
    pub serial: String,
}

async fn scan(State(st): State<AppState>, Json(req): Json<ScanRequest>) -> ApiResult<Response> {
    Ok(Json(st.session.scan(req.serial).await?).into_response())
}

async fn select(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    Ok(Json(st.session.select(id).await?).into_response())
}

#[derive(Debug, Deserialize)]
pub struct LayerRequest {
    pub layer: OverlayLayer,
    pub enabled: bool,
}

async fn layers(State(st): State<AppState>, Json(req): Json<LayerRequest>) -> ApiResult<Response> {
    Ok(Json(st.session.toggle_layer(req.layer, req.enabled).await?).into_response())
}

#[derive(Debug, Deserialize)]
pub struct DetailRequest {
    pub kind: DetailKind,
    pub duration_s: f64,
}

async fn detail(State(st): State<AppState>, Json(req): Json<DetailRequest>) -> ApiResult<Response> {
    if !(req.duration_s >= 0.0) || !req.duration_s.is_finite() {
        return Err(ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "duration_s must be a non-negative number"));
    }
    let logged = st.session.detail_viewed(req.kind, req.duration_s).await?;
    Ok(Json(serde_json::json!({ "logged": logged })).into_response())
}

#[derive(Debug, Deserialize)]
pub struct DocumentRequest {
    pub record: DocumentationRecord,
}

async fn document(State(st): State<AppState>, Json(req): Json<DocumentRequest>) -> ApiResult<Response> {
    Ok(Json(st.session.document(req.record).await?).into_response())
}

async fn abort(State(st): State<AppState>) -> ApiResult<Response> {
    Ok(Json(st.session.abort().await?).into_response())
}

async fn overlay(State(st): State<AppState>) -> ApiResult<Response> {
    Ok(match st.session.overlay().await? {
        Some(frame) => Json(frame).into_response(),
        None => StatusCode::NO_CONTENT.into_response(),
    })
}

async fn log(State(st): State<AppState>) -> ApiResult<Response> {
    let rows = st.session.log().await?;
    Ok(([(header::CONTENT_TYPE, "text/csv")], format_action_log(&rows)).into_response())
}

/// SSE rendering of a notification: event name plus JSON payload.
pub fn to_event(n: &Notification) -> Event {
    let ev = match n {
        Notification::State(v) => Event::default().event("state").json_data(v),
        Notification::Overlay(f) => Event::default().event("overlay").json_data(f),
        Notification::Error { message } => {
            Event::default().event("error").json_data(serde_json::json!({ "message": message }))
        }
    };
    ev.expect("notifications serialize")
}

async fn events(State(st): State<AppState>) -> ApiResult<Sse<impl Stream<Item = Result<Event, Infallible>>>> {
    // Subscribe before taking the snapshot so no change falls in between.
    let rx = st.session.subscribe();
    let initial = Notification::State(st.session.view().await?);
    let live = BroadcastStream::new(rx).filter_map(|n| n.ok());
    let stream = tokio_stream::once(initial).chain(live).map(|n| Ok(to_event(&n)));
    Ok(Sse::new(stream).keep_alive(KeepAlive::default()))
}

pub fn router(state: AppState, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/assets", get(list_assets))
        .route("/assets/{serial}/submodels/{name}", get(get_submodel).put(put_submodel))
        .route("/assets/{serial}/mesh", get(get_mesh))
        .route("/session", get(session_view))
        .route("/session/scan", post(scan))
        .route("/session/defect/{id}/select", post(select))
        .route("/session/layers", post(layers))
        .route("/session/detail", post(detail))
        .route("/session/document", post(document))
        .route("/session/abort", post(abort))
        .route("/session/overlay", get(overlay))
        .route("/session/log", get(log))
        .route("/session/events", get(events))
        .with_state(state);
    match static_dir {
        Some(dir) => api.fallback_service(tower_http::services::ServeDir::new(dir)),
        None => api,
    }
}
