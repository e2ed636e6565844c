//! REST management API and channel webhooks.

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::header::{CONTENT_DISPOSITION, CONTENT_TYPE};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use dataclaw_core::memory::MemoryFileKind;
use dataclaw_core::runtime::{RuntimeError, RuntimeStatus};
use dataclaw_core::session::SessionError;
use dataclaw_core::stream::StreamError;
use dataclaw_core::{AgentConfig, Id, Verbosity};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::channels::{ChannelConfig, ChannelError};
use crate::delivery::DeliveryRecord;
use crate::inbound::{parse_update, session_id_for, SECRET_HEADER};
use crate::log::{Level, LogLine};
use crate::{sse, Gateway};

const STATUS_LOG_LINES: usize = 50;

#[derive(Debug, Error)]
pub enum ApiError {
    #[error("{0}")]
    NotFound(String),
    #[error("{0}")]
    BadRequest(String),
    #[error("{0}")]
    Unauthorized(String),
    #[error("{0}")]
    Conflict(String),
    #[error("{0}")]
    TooManyRequests(String),
    #[error("{0}")]
    Unprocessable(String),
    #[error("{0}")]
    Unavailable(String),
    #[error("{0}")]
    Internal(String),
}

impl ApiError {
    fn status(&self) -> StatusCode {
        match self {
            ApiError::NotFound(_) => StatusCode::NOT_FOUND,
            ApiError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ApiError::Unauthorized(_) => StatusCode::UNAUTHORIZED,
            ApiError::Conflict(_) => StatusCode::CONFLICT,
            ApiError::TooManyRequests(_) => StatusCode::TOO_MANY_REQUESTS,
            ApiError::Unprocessable(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ApiError::Unavailable(_) => StatusCode::SERVICE_UNAVAILABLE,
            ApiError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status(), Json(json!({"error": self.to_string()}))).into_response()
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        match e {
            SessionError::CapacityExceeded { .. } => ApiError::Unavailable(e.to_string()),
            SessionError::UnknownSession(_) => ApiError::NotFound(e.to_string()),
            SessionError::Closed(_) => ApiError::Conflict(e.to_string()),
            SessionError::Busy(_) => ApiError::TooManyRequests(e.to_string()),
        }
    }
}

impl From<ChannelError> for ApiError {
    fn from(e: ChannelError) -> Self {
        match e {
            ChannelError::Invalid(_) => ApiError::Unprocessable(e.to_string()),
            ChannelError::NotFound(_) => ApiError::NotFound(e.to_string()),
            ChannelError::Io { .. } | ChannelError::Corrupt { .. } => {
                ApiError::Internal(e.to_string())
            }
        }
    }
}

impl From<RuntimeError> for ApiError {
    fn from(e: RuntimeError) -> Self {
        match e {
            RuntimeError::Session(e) => e.into(),
            RuntimeError::Config(e) => ApiError::Unprocessable(e.to_string()),
            RuntimeError::ConfigWrite(_) => ApiError::Internal(e.to_string()),
        }
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn json_body<T: DeserializeOwned>(body: &[u8]) -> ApiResult<T> {
    serde_json::from_slice(body)
        .map_err(|e| ApiError::BadRequest(format!("invalid JSON body: {e}")))
}

fn session_id(raw: &str) -> ApiResult<Id> {
    Id::parse(raw).ok_or_else(|| ApiError::NotFound(format!("unknown session {raw}")))
}

pub fn router(gw: Arc<Gateway>) -> Router {
    Router::new()
        .route("/api/channels", get(list_channels))
        .route(
            "/api/channels/{id}",
            get(get_channel).put(put_channel).delete(delete_channel),
        )
        .route("/api/channels/{id}/webhook", post(webhook))
        .route("/api/channels/{id}/outbox", get(outbox))
        .route("/api/sessions", get(list_sessions).post(create_session))
        .route("/api/sessions/{id}", get(get_session).delete(close_session))
        .route("/api/sessions/{id}/messages", post(post_message))
        .route("/api/sessions/{id}/events", get(events))
        .route("/api/sessions/{id}/cancel", post(cancel))
        .route("/api/sessions/{id}/artifacts", get(session_artifacts))
        .route("/api/config", get(get_config).put(put_config))
        .route("/api/skills", get(list_skills))
        .route("/api/skills/rescan", post(rescan_skills))
        .route("/api/memory/{kind}", get(get_memory).put(put_memory))
        .route("/api/status", get(status))
        .route("/api/artifacts/{id}", get(artifact))
        .with_state(gw)
}

// ---- channels

async fn list_channels(State(gw): State<Arc<Gateway>>) -> Json<Vec<ChannelConfig>> {
    Json(gw.channels.list())
}

async fn get_channel(
    State(gw): State<Arc<Gateway>>,
    Path(id): Path<String>,
) -> ApiResult<Json<ChannelConfig>> {
    gw.channels
        .get(&id)
        .map(Json)
        .ok_or_else(|| ApiError::NotFound(format!("unknown channel {id}")))
}

async fn put_channel(
    State(gw): State<Arc<Gateway>>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<(StatusCode, Json<ChannelConfig>)> {
    let mut value: Value = json_body(&body)?;
    let Some(obj) = value.as_object_mut() else {
        return Err(ApiError::BadRequest("channel must be a JSON object".into()));
    };
    match obj.get("channel_id") {
        None => {
            obj.insert("channel_id".into(), Value::from(id.clone()));
        }
        Some(v) if v.as_str() == Some(id.as_str()) => {}
        Some(_) => {
            return Err(ApiError::BadRequest(
                "channel_id in body does not match the path".into(),
            ))
        }
    }
    let config: ChannelConfig = serde_json::from_value(value)
        .map_err(|e| ApiError::BadRequest(format!("invalid channel: {e}")))?;
    let created = gw.channels.upsert(config.clone())?;
    gw.log.push(
        Level::Info,
        format!(
            "channel {id} {}",
            if created { "created" } else { "updated" }
        ),
    );
    Ok((
        if created {
            StatusCode::CREATED
        } else {
            StatusCode::OK
        },
        Json(config),
    ))
}

async fn delete_channel(
    State(gw): State<Arc<Gateway>>,
    Path(id): Path<String>,
) -> ApiResult<Json<ChannelConfig>> {
    let removed = gw.channels.remove(&id)?;
    gw.log.push(Level::Info, format!("channel {id} removed"));
    Ok(Json(removed))
}

async fn outbox(State(gw): State<Arc<Gateway>>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    if gw.channels.get(&id).is_none() {
        return Err(ApiError::NotFound(format!("unknown channel {id}")));
    }
    Ok(Json(
        json!({"channel_id": id, "entries": gw.delivery.outbox(&id)}),
    ))
}

async fn webhook(
    State(gw): State<Arc<Gateway>>,
    Path(channel_id): Path<String>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<(StatusCode, Json<Value>)> {
    let channel = gw
        .channels
        .get(&channel_id)
        .filter(|c| c.accepts_webhooks())
        .ok_or_else(|| ApiError::NotFound(format!("unknown or disabled channel {channel_id}")))?;
    if let Some(secret) = &channel.inbound_secret {
        let given = headers.get(SECRET_HEADER).and_then(|v| v.to_str().ok());
        if given != Some(secret.as_str()) {
            gw.log.push(
                Level::Warn,
                format!("webhook for {channel_id} rejected: bad secret"),
            );
            return Err(ApiError::Unauthorized("bad webhook secret".into()));
        }
    }
    let update = parse_update(&body).map_err(|e| ApiError::BadRequest(e.to_string()))?;
    let sid = session_id_for(&channel_id, update.chat_id);
    gw.runtime.session_for(&sid, &channel_id)?;
    let session = gw.runtime.begin_turn(&sid)?;
    gw.chats
        .lock()
        .unwrap()
        .insert(sid.clone(), update.chat_id.to_string());
    let turn = session.turn_count + 1;
    gw.spawn_turn(session, update.text);
    Ok((
        StatusCode::ACCEPTED,
        Json(json!({"session_id": sid, "turn": turn})),
    ))
}

// ---- sessions

async fn list_sessions(State(gw): State<Arc<Gateway>>) -> Json<Value> {
    Json(json!({"sessions": gw.runtime.status().sessions}))
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct CreateSession {
    channel_id: Option<String>,
}

async fn create_session(
    State(gw): State<Arc<Gateway>>,
    body: Bytes,
) -> ApiResult<(StatusCode, Json<Value>)> {
    let req: CreateSession = if body.iter().all(u8::is_ascii_whitespace) {
        CreateSession::default()
    } else {
        json_body(&body)?
    };
    let channel_id = req.channel_id.unwrap_or_else(|| "console".into());
    if gw.channels.get(&channel_id).is_none() {
        return Err(ApiError::NotFound(format!("unknown channel {channel_id}")));
    }
    let session = gw.runtime.open_session(&channel_id)?;
    Ok((StatusCode::CREATED, Json(json!(session))))
}

async fn get_session(
    State(gw): State<Arc<Gateway>>,
    Path(id): Path<String>,
) -> ApiResult<Json<Value>> {
    let id = session_id(&id)?;
    gw.runtime
        .status()
        .sessions
        .into_iter()
        .find(|s| s.id == id)
        .map(|s| Json(json!(s)))
        .ok_or_else(|| ApiError::NotFound(format!("unknown session {id}")))
}

async fn close_session(
    State(gw): State<Arc<Gateway>>,
    Path(id): Path<String>,
) -> ApiResult<Json<Value>> {
    let session = gw.runtime.close_session(&session_id(&id)?)?;
    Ok(Json(json!(session)))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PostMessage {
    text: String,
}

async fn post_message(
    State(gw): State<Arc<Gateway>>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<(StatusCode, Json<Value>)> {
    let id = session_id(&id)?;
    let req: PostMessage = json_body(&body)?;
    if req.text.trim().is_empty() {
        return Err(ApiError::BadRequest("text must not be empty".into()));
    }
    let session = gw.runtime.begin_turn(&id)?;
    let turn = session.turn_count + 1;
    gw.spawn_turn(session, req.text);
    Ok((
        StatusCode::ACCEPTED,
        Json(json!({"session_id": id, "turn": turn})),
    ))
}

#[derive(Deserialize)]
struct EventsQuery {
    verbosity: Option<String>,
    from_seq: Option<u64>,
}

async fn events(
    State(gw): State<Arc<Gateway>>,
    Path(id): Path<String>,
    Query(q): Query<EventsQuery>,
    headers: HeaderMap,
) -> ApiResult<Response> {
    let id = session_id(&id)?;
    let verbosity = match q.verbosity.as_deref() {
        Some(v) => v
            .parse::<Verbosity>()
            .map_err(|e| ApiError::BadRequest(e.to_string()))?,
        None => gw.runtime.config().verbosity,
    };
    let from_seq = match headers.get("last-event-id") {
        Some(v) => v
            .to_str()
            .ok()
            .and_then(|s| s.trim().parse::<u64>().ok())
            .ok_or_else(|| ApiError::BadRequest("Last-Event-ID must be an event seq".into()))?,
        None => q.from_seq.unwrap_or(0),
    };
    let sub = gw
        .runtime
        .bus()
        .subscribe(&id, verbosity, from_seq)
        .map_err(|e| match e {
            StreamError::UnknownSession(_) => ApiError::NotFound(e.to_string()),
            other => ApiError::Internal(other.to_string()),
        })?;
    Ok(sse::response(sub, gw.heartbeat))
}

async fn cancel(State(gw): State<Arc<Gateway>>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let id = session_id(&id)?;
    let cancelled = gw.runtime.cancel(&id)?;
    if cancelled {
        gw.log
            .push(Level::Info, format!("cancel requested for session {id}"));
    }
    Ok(Json(json!({"session_id": id, "cancelled": cancelled})))
}

async fn session_artifacts(
    State(gw): State<Arc<Gateway>>,
    Path(id): Path<String>,
) -> ApiResult<Json<Value>> {
    let id = session_id(&id)?;
    if gw.runtime.sessions().get(&id).is_none() {
        return Err(ApiError::NotFound(format!("unknown session {id}")));
    }
    Ok(Json(json!({"artifacts": gw.runtime.artifacts().list(&id)})))
}

// ---- config, skills, memory

async fn get_config(State(gw): State<Arc<Gateway>>) -> Json<AgentConfig> {
    Json((*gw.runtime.config()).clone())
}

/// Merges the given fields into the current config; takes effect from the next turn.
async fn put_config(State(gw): State<Arc<Gateway>>, body: Bytes) -> ApiResult<Json<AgentConfig>> {
    let patch: Value = json_body(&body)?;
    let Value::Object(patch) = patch else {
        return Err(ApiError::BadRequest("config must be a JSON object".into()));
    };
    let mut merged = serde_json::to_value(&*gw.runtime.config()).expect("config serializes");
    let obj = merged.as_object_mut().expect("config is an object");
    for (k, v) in patch {
        obj.insert(k, v);
    }
    let config: AgentConfig = serde_json::from_value(merged)
        .map_err(|e| ApiError::BadRequest(format!("invalid config: {e}")))?;
    gw.runtime.set_config(config.clone())?;
    gw.log.push(Level::Info, "config updated");
    Ok(Json(config))
}

#[derive(Serialize)]
struct SkillView {
    name: String,
    description: String,
    version: String,
    triggers: Vec<String>,
    origin: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    tool: Option<String>,
    examples: usize,
}

async fn list_skills(State(gw): State<Arc<Gateway>>) -> Json<Value> {
    let set = gw.runtime.skills();
    let ws = gw.runtime.workspace();
    let skills: Vec<SkillView> = set
        .bundles
        .iter()
        .map(|b| SkillView {
            name: b.name.clone(),
            description: b.description.clone(),
            version: b.version.clone(),
            triggers: b.triggers.clone(),
            origin: ws
                .relative(&b.source_dir)
                .unwrap_or_else(|| b.source_dir.display().to_string()),
            tool: b.tool.as_ref().map(|t| t.name.clone()),
            examples: b.examples.len(),
        })
        .collect();
    Json(json!({"version": set.version, "skills": skills}))
}

async fn rescan_skills(State(gw): State<Arc<Gateway>>) -> Json<Value> {
    let rt = gw.runtime.clone();
    let report = tokio::task::spawn_blocking(move || rt.rescan_skills())
        .await
        .unwrap_or_default();
    if report.changed() || !report.errors.is_empty() {
        gw.log.push(
            if report.errors.is_empty() {
                Level::Info
            } else {
                Level::Warn
            },
            format!(
                "skills rescanned: v{} registered {:?} removed {:?} errors {}",
                report.version,
                report.registered,
                report.removed,
                report.errors.len()
            ),
        );
    }
    Json(json!(report))
}

fn memory_kind(raw: &str) -> ApiResult<MemoryFileKind> {
    MemoryFileKind::parse(raw).ok_or_else(|| {
        ApiError::NotFound(format!(
            "unknown memory file {raw}; use memory, agents or souls"
        ))
    })
}

async fn get_memory(
    State(gw): State<Arc<Gateway>>,
    Path(kind): Path<String>,
) -> ApiResult<Json<Value>> {
    let kind = memory_kind(&kind)?;
    let content = gw
        .runtime
        .read_memory_file(kind)
        .map_err(|e| ApiError::Internal(e.to_string()))?;
    Ok(Json(json!({"file": kind.file_name(), "content": content})))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PutMemory {
    content: String,
}

async fn put_memory(
    State(gw): State<Arc<Gateway>>,
    Path(kind): Path<String>,
    body: Bytes,
) -> ApiResult<Json<Value>> {
    let kind = memory_kind(&kind)?;
    let req: PutMemory = json_body(&body)?;
    gw.runtime
        .write_memory_file(kind, &req.content)
        .map_err(|e| ApiError::Internal(e.to_string()))?;
    gw.log.push(
        Level::Info,
        format!("{} saved ({} bytes)", kind.file_name(), req.content.len()),
    );
    Ok(Json(
        json!({"file": kind.file_name(), "bytes": req.content.len()}),
    ))
}

// ---- status and artifacts

#[derive(Serialize)]
struct StatusView {
    #[serde(flatten)]
    runtime: RuntimeStatus,
    pending_turns: usize,
    recent_log: Vec<LogLine>,
    delivery_failures: Vec<DeliveryRecord>,
}

async fn status(State(gw): State<Arc<Gateway>>) -> Json<StatusView> {
    Json(StatusView {
        runtime: gw.runtime.status(),
        pending_turns: gw.pending_turns(),
        recent_log: gw.log.tail(STATUS_LOG_LINES),
        delivery_failures: gw.delivery.failures(),
    })
}

async fn artifact(State(gw): State<Arc<Gateway>>, Path(id): Path<String>) -> ApiResult<Response> {
    let not_found = || ApiError::NotFound(format!("unknown artifact {id}"));
    let artifact = Id::parse(&id)
        .and_then(|i| gw.runtime.artifacts().get(&i))
        .ok_or_else(not_found)?;
    let bytes = gw
        .runtime
        .artifacts()
        .read(&artifact)
        .map_err(|e| ApiError::Internal(e.to_string()))?;
    let file_name = artifact
        .relative_path
        .rsplit('/')
        .next()
        .unwrap_or("artifact")
        .replace('"', "");
    Ok((
        [
            (CONTENT_TYPE, artifact.media_type.clone()),
            (
                CONTENT_DISPOSITION,
                format!("inline; filename=\"{file_name}\""),
            ),
        ],
        bytes,
    )
        .into_response())
}
