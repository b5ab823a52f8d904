//! Clients for the decomposition agent and the agent's own HTTP server.

use std::sync::Arc;
use std::time::Duration;

use async_trait::async_trait;
use axum::body::Bytes;
use axum::http::{header, StatusCode};
use axum::response::IntoResponse;
use axum::routing::{get, post};
use axum::{Json, Router};
use maod_core::a2a::{self, A2ATask, AgentError, DecompositionAgent, ReplyOutcome};
use maod_core::component::{DecomposedResponse, Profile};
use serde_json::json;
use thiserror::Error;

pub const TASKS_PATH: &str = "/a2a/tasks";
pub const HEALTH_PATH: &str = "/a2a/health";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AgentFailure {
    #[error("agent unreachable: {0}")]
    Unavailable(String),
    #[error("agent rejected task: {0:?}")]
    Rejected(AgentError),
    #[error("agent protocol violation: {0}")]
    Protocol(String),
}

#[async_trait]
pub trait DecompositionClient: Send + Sync {
    async fn decompose(&self, text: &str, profile: Profile) -> Result<DecomposedResponse, AgentFailure>;
    async fn healthy(&self) -> bool;
    fn describe(&self) -> String;
}

/// Checks a reply against the task it answers.
fn accept(task: &A2ATask, reply: a2a::A2AReply) -> Result<DecomposedResponse, AgentFailure> {
    if reply.task_id != task.task_id {
        return Err(AgentFailure::Protocol("reply task_id does not match".into()));
    }
    if !a2a::is_legal_trace(&reply.trace) {
        return Err(AgentFailure::Protocol("illegal state trace".into()));
    }
    match reply.outcome {
        ReplyOutcome::Error(e) => Err(AgentFailure::Rejected(e)),
        ReplyOutcome::Ok(r) => {
            if r.source_text != task.payload.text || r.profile != task.payload.profile {
                return Err(AgentFailure::Protocol("result does not describe the submitted text".into()));
            }
            let report = r.validate();
            if !report.ok {
                return Err(AgentFailure::Protocol(format!("result fails validation: {report}")));
            }
            Ok(r)
        }
    }
}

/// Talks to an agent over HTTP.
pub struct HttpAgentClient {
    base: String,
    client: reqwest::Client,
}

impl HttpAgentClient {
    pub fn new(base_url: impl Into<String>) -> Self {
        let client = reqwest::Client::builder()
            .timeout(Duration::from_secs(10))
            .connect_timeout(Duration::from_secs(2))
            // The agent may restart between calls; never reuse a dead socket.
            .pool_max_idle_per_host(0)
            .build()
            .expect("http client builds");
        HttpAgentClient { base: base_url.into().trim_end_matches('/').to_owned(), client }
    }
}

#[async_trait]
impl DecompositionClient for HttpAgentClient {
    async fn decompose(&self, text: &str, profile: Profile) -> Result<DecomposedResponse, AgentFailure> {
        let task = A2ATask::decompose(text, profile);
        let response = self
            .client
            .post(format!("{}{TASKS_PATH}", self.base))
            .header(header::CONTENT_TYPE, "application/json")
            .body(a2a::encode_task(&task))
            .send()
            .await
            .map_err(|e| AgentFailure::Unavailable(e.to_string()))?;
        let status = response.status();
        let body = response.bytes().await.map_err(|e| AgentFailure::Unavailable(e.to_string()))?;
        if !status.is_success() {
            return Err(AgentFailure::Protocol(format!("agent answered {status}")));
        }
        let reply = a2a::decode_reply(&body).map_err(|e| AgentFailure::Protocol(e.to_string()))?;
        accept(&task, reply)
    }

    async fn healthy(&self) -> bool {
        match self.client.get(format!("{}{HEALTH_PATH}", self.base)).send().await {
            Ok(r) => r.status().is_success(),
            Err(_) => false,
        }
    }

    fn describe(&self) -> String {
        self.base.clone()
    }
}

/// Runs the agent inside the service process.
#[derive(Default)]
pub struct LocalAgentClient {
    agent: Arc<DecompositionAgent>,
}

impl LocalAgentClient {
    pub fn new(agent: DecompositionAgent) -> Self {
        LocalAgentClient { agent: Arc::new(agent) }
    }
}

#[async_trait]
impl DecompositionClient for LocalAgentClient {
    async fn decompose(&self, text: &str, profile: Profile) -> Result<DecomposedResponse, AgentFailure> {
        let task = A2ATask::decompose(text, profile);
        let agent = self.agent.clone();
        let sent = task.clone();
        let reply = tokio::task::spawn_blocking(move || agent.run(&sent))
            .await
            .map_err(|e| AgentFailure::Unavailable(e.to_string()))?;
        accept(&task, reply)
    }

    async fn healthy(&self) -> bool {
        true
    }

    fn describe(&self) -> String {
        "in-process".into()
    }
}

/// No agent configured: every response is served monolithic.
pub struct DisabledAgent;

#[async_trait]
impl DecompositionClient for DisabledAgent {
    async fn decompose(&self, _text: &str, _profile: Profile) -> Result<DecomposedResponse, AgentFailure> {
        Err(AgentFailure::Unavailable("no agent configured".into()))
    }

    async fn healthy(&self) -> bool {
        false
    }

    fn describe(&self) -> String {
        "disabled".into()
    }
}

/// HTTP front end of a [`DecompositionAgent`].
pub fn agent_router(agent: DecompositionAgent) -> Router {
    let agent = Arc::new(agent);
    Router::new().route(HEALTH_PATH, get(|| async { Json(a2a::health_body()) })).route(
        TASKS_PATH,
        post(move |body: Bytes| {
            let agent = agent.clone();
            async move { handle_task(agent, body).await }
        }),
    )
}

async fn handle_task(agent: Arc<DecompositionAgent>, body: Bytes) -> axum::response::Response {
    let task = match a2a::decode_task(&body) {
        Ok(task) => task,
        Err(e) => {
            let body = json!({ "error": { "code": "MalformedMessage", "message": e.to_string() } });
            return (StatusCode::BAD_REQUEST, Json(body)).into_response();
        }
    };
    match tokio::task::spawn_blocking(move || agent.run(&task)).await {
        Ok(reply) => ([(header::CONTENT_TYPE, "application/json")], a2a::encode_reply(&reply)).into_response(),
        Err(e) => {
            let body = json!({ "error": { "code": "InternalError", "message": e.to_string() } });
            (StatusCode::INTERNAL_SERVER_ERROR, Json(body)).into_response()
        }
    }
}
