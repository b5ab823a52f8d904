//! REST routes over the [`Orchestrator`].

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::rejection::JsonRejection;
use axum::extract::{FromRequest, Path, Request, State};
use axum::routing::{get, patch, post};
use axum::{Json, Router};
use maod_core::composer::ComposedArtifact;
use maod_core::gateway::ModelParams;
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{json, Value};

use crate::error::ServiceError;
use crate::orchestrator::{
    CheckpointInfo, CreateSessionRequest, EventAck, MessageReply, MessageRequest, Orchestrator, ResponseView,
    SessionSummary,
};
use crate::state::SessionState;

type Shared = State<Arc<Orchestrator>>;
type ApiResult<T> = Result<Json<T>, ServiceError>;

/// JSON body whose rejections are reported as `ValidationError`.
pub struct Body<T>(pub T);

impl<S: Send + Sync, T: DeserializeOwned> FromRequest<S> for Body<T> {
    type Rejection = ServiceError;

    async fn from_request(req: Request, state: &S) -> Result<Self, Self::Rejection> {
        Json::<T>::from_request(req, state)
            .await
            .map(|Json(value)| Body(value))
            .map_err(|e: JsonRejection| ServiceError::Validation(e.body_text()))
    }
}

/// Like [`Body`], but an empty request body means `T::default()`.
pub struct OptionalBody<T>(pub T);

impl<S: Send + Sync, T: DeserializeOwned + Default> FromRequest<S> for OptionalBody<T> {
    type Rejection = ServiceError;

    async fn from_request(req: Request, state: &S) -> Result<Self, Self::Rejection> {
        let bytes = Bytes::from_request(req, state).await.map_err(|e| ServiceError::Validation(e.body_text()))?;
        if bytes.iter().all(u8::is_ascii_whitespace) {
            return Ok(OptionalBody(T::default()));
        }
        serde_json::from_slice(&bytes).map(OptionalBody).map_err(|e| ServiceError::Validation(e.to_string()))
    }
}

#[derive(Debug, Deserialize)]
pub struct PatchBody {
    pub content: String,
    #[serde(default)]
    pub expected_event_id: Option<u64>,
}

#[derive(Debug, Deserialize)]
pub struct ToggleBody {
    pub includes: bool,
    #[serde(default)]
    pub expected_event_id: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
pub struct RepromptBody {
    #[serde(default)]
    pub instruction: String,
    #[serde(default)]
    pub params: Option<ModelParams>,
    #[serde(default)]
    pub expected_event_id: Option<u64>,
}

pub fn router(orchestrator: Arc<Orchestrator>) -> Router {
    Router::new()
        .route("/api/health", get(health))
        .route("/api/sessions", post(create_session))
        .route("/api/sessions/{sid}", get(session_state))
        .route("/api/sessions/{sid}/messages", post(post_message))
        .route("/api/sessions/{sid}/checkpoint", post(checkpoint))
        .route("/api/sessions/{sid}/restore", post(restore))
        .route("/api/responses/{rid}", get(get_response))
        .route("/api/responses/{rid}/recompose", get(recompose))
        .route("/api/responses/{rid}/decompose", post(decompose))
        .route("/api/responses/{rid}/components/{cid}", patch(patch_component))
        .route("/api/responses/{rid}/components/{cid}/toggle", post(toggle_component))
        .route("/api/responses/{rid}/components/{cid}/reprompt", post(reprompt_component))
        .with_state(orchestrator)
}

async fn health(State(o): Shared) -> Json<Value> {
    let agent = o.agent();
    Json(json!({
        "status": "ok",
        "agent": { "endpoint": agent.describe(), "reachable": agent.healthy().await },
        "vendors": o.gateway().vendor_ids(),
    }))
}

async fn create_session(
    State(o): Shared,
    OptionalBody(request): OptionalBody<CreateSessionRequest>,
) -> ApiResult<SessionSummary> {
    Ok(Json(o.create_session(request).await?))
}

async fn session_state(State(o): Shared, Path(sid): Path<String>) -> ApiResult<SessionState> {
    Ok(Json(o.session_state(&sid).await?))
}

async fn post_message(
    State(o): Shared,
    Path(sid): Path<String>,
    Body(request): Body<MessageRequest>,
) -> ApiResult<MessageReply> {
    Ok(Json(o.post_message(&sid, request).await?))
}

async fn checkpoint(State(o): Shared, Path(sid): Path<String>) -> ApiResult<CheckpointInfo> {
    Ok(Json(o.checkpoint(&sid).await?))
}

async fn restore(State(o): Shared, Path(sid): Path<String>) -> ApiResult<SessionState> {
    Ok(Json(o.restore(&sid).await?))
}

async fn get_response(State(o): Shared, Path(rid): Path<String>) -> ApiResult<ResponseView> {
    Ok(Json(o.get_response(&rid).await?))
}

async fn recompose(State(o): Shared, Path(rid): Path<String>) -> ApiResult<ComposedArtifact> {
    Ok(Json(o.recompose(&rid).await?))
}

async fn decompose(State(o): Shared, Path(rid): Path<String>) -> ApiResult<ResponseView> {
    Ok(Json(o.decompose_response(&rid).await?))
}

async fn patch_component(
    State(o): Shared,
    Path((rid, cid)): Path<(String, String)>,
    Body(body): Body<PatchBody>,
) -> ApiResult<EventAck> {
    Ok(Json(o.patch_component(&rid, &cid, body.content, body.expected_event_id).await?))
}

async fn toggle_component(
    State(o): Shared,
    Path((rid, cid)): Path<(String, String)>,
    Body(body): Body<ToggleBody>,
) -> ApiResult<EventAck> {
    Ok(Json(o.toggle_component(&rid, &cid, body.includes, body.expected_event_id).await?))
}

async fn reprompt_component(
    State(o): Shared,
    Path((rid, cid)): Path<(String, String)>,
    OptionalBody(body): OptionalBody<RepromptBody>,
) -> ApiResult<EventAck> {
    Ok(Json(o.reprompt_component(&rid, &cid, body.instruction, body.params, body.expected_event_id).await?))
}
