//! Session orchestration on top of the gateway and the decomposition agent.
//! Each session is guarded by its own lock, so work
//! on one session is totally ordered while sessions proceed independently.

use std::collections::HashMap;
use std::ops::{Deref, DerefMut};
use std::sync::{Arc, Mutex as StdMutex};

use base64::Engine as _;
use chrono::Utc;
use maod_core::component::{Component, ComponentId, DecomposedResponse, Profile};
use maod_core::composer::{component_diff, ComponentChange, ComposedArtifact, Draft, ManipulationEvent, Provenance};
use maod_core::gateway::{self, roles, ContextMessage, GatewayError, ModelGateway, ModelParams};
use serde::{Deserialize, Serialize};
use tokio::sync::{Mutex, OwnedMutexGuard};
use uuid::Uuid;

use crate::agent::{AgentFailure, DecompositionClient};
use crate::error::ServiceError;
use crate::state::{replay, Checkpoint, LogEntry, Message, Record, Role, SessionState, StoredResponse};
use crate::storage::Storage;

#[derive(Debug, Clone, Default, Deserialize)]
pub struct CreateSessionRequest {
    #[serde(default)]
    pub params: Option<ModelParams>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SessionSummary {
    pub session_id: Uuid,
    pub params: ModelParams,
    pub created_at: chrono::DateTime<Utc>,
}

/// A text file attached to a prompt.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Attachment {
    #[serde(default)]
    pub name: Option<String>,
    pub content_base64: String,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct MessageRequest {
    pub prompt: String,
    #[serde(default)]
    pub params: Option<ModelParams>,
    #[serde(default)]
    pub profile: Option<Profile>,
    #[serde(default)]
    pub attachment: Option<Attachment>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MessageReply {
    pub response_id: String,
    pub monolithic: String,
    pub decomposed: Option<DecomposedResponse>,
    pub degraded: bool,
}

/// A stored response with its current manipulated state.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResponseView {
    pub response_id: String,
    pub session_id: Uuid,
    pub monolithic: String,
    pub degraded: bool,
    pub decomposed: Option<DecomposedResponse>,
    pub last_event_id: u64,
    pub events: Vec<ManipulationEvent>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EventAck {
    pub response_id: String,
    pub event: ManipulationEvent,
    pub component: Component,
    pub changes: Vec<ComponentChange>,
    pub recomposed: ComposedArtifact,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointInfo {
    pub session_id: Uuid,
    pub sequence_no: u64,
    pub created_at: chrono::DateTime<Utc>,
}

struct Live {
    state: SessionState,
    seq: u64,
    drafts: HashMap<String, Draft>,
}

impl Live {
    fn new(state: SessionState, seq: u64) -> Result<Self, ServiceError> {
        let mut drafts = HashMap::new();
        for (rid, entry) in &state.responses {
            if let Some(draft) = entry.draft() {
                let draft = draft.map_err(|e| ServiceError::CorruptCheckpoint(format!("response {rid}: {e}")))?;
                drafts.insert(rid.clone(), draft);
            }
        }
        Ok(Live { state, seq, drafts })
    }

    fn draft(&self, rid: &str) -> Result<&Draft, ServiceError> {
        match self.state.responses.get(rid) {
            None => Err(ServiceError::ResponseNotFound(rid.to_owned())),
            Some(entry) if entry.stored.is_monolithic() => {
                Err(ServiceError::Decomposition(format!("response {rid} is monolithic; decompose it first")))
            }
            Some(_) => Ok(self.drafts.get(rid).expect("decomposed responses have drafts")),
        }
    }

    fn view(&self, rid: &str) -> Result<ResponseView, ServiceError> {
        let entry = self.state.responses.get(rid).ok_or_else(|| ServiceError::ResponseNotFound(rid.to_owned()))?;
        let draft = self.drafts.get(rid);
        Ok(ResponseView {
            response_id: rid.to_owned(),
            session_id: self.state.session_id,
            monolithic: entry.stored.text().to_owned(),
            degraded: entry.stored.is_monolithic(),
            decomposed: draft.map(|d| d.response().clone()),
            last_event_id: draft.map_or(0, Draft::last_event_id),
            events: entry.events.clone(),
        })
    }
}

/// Exclusive access to one loaded session.
struct SessionGuard(OwnedMutexGuard<Option<Live>>);

impl Deref for SessionGuard {
    type Target = Live;
    fn deref(&self) -> &Live {
        self.0.as_ref().expect("guard holds a loaded session")
    }
}

impl DerefMut for SessionGuard {
    fn deref_mut(&mut self) -> &mut Live {
        self.0.as_mut().expect("guard holds a loaded session")
    }
}

type Slot = Arc<Mutex<Option<Live>>>;

pub struct Orchestrator {
    storage: Arc<dyn Storage>,
    gateway: Arc<ModelGateway>,
    agent: Arc<dyn DecompositionClient>,
    sessions: StdMutex<HashMap<Uuid, Slot>>,
    responses: StdMutex<HashMap<String, Uuid>>,
}

fn parse_session_id(raw: &str) -> Result<Uuid, ServiceError> {
    raw.parse().map_err(|_| ServiceError::SessionNotFound(raw.to_owned()))
}

fn parse_component_id(raw: &str) -> Result<ComponentId, ServiceError> {
    raw.parse().map_err(|_| ServiceError::UnknownComponent(raw.to_owned()))
}

fn check_expected(draft: &Draft, expected: Option<u64>) -> Result<(), ServiceError> {
    match expected {
        Some(e) if e != draft.last_event_id() => Err(ServiceError::StaleEvent(format!(
            "expected last event {e}, but the response is at {}",
            draft.last_event_id()
        ))),
        _ => Ok(()),
    }
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> Result<T, ServiceError> {
    tokio::task::spawn_blocking(f).await.map_err(|e| ServiceError::ProviderFailure(format!("model call aborted: {e}")))
}

impl Orchestrator {
    pub fn new(storage: Arc<dyn Storage>, gateway: Arc<ModelGateway>, agent: Arc<dyn DecompositionClient>) -> Self {
        Orchestrator {
            storage,
            gateway,
            agent,
            sessions: StdMutex::new(HashMap::new()),
            responses: StdMutex::new(HashMap::new()),
        }
    }

    pub fn gateway(&self) -> &ModelGateway {
        &self.gateway
    }

    pub fn agent(&self) -> &dyn DecompositionClient {
        self.agent.as_ref()
    }

    fn slot(&self, sid: Uuid) -> Slot {
        self.sessions.lock().expect("session map").entry(sid).or_default().clone()
    }

    async fn load(&self, sid: Uuid) -> Result<Live, ServiceError> {
        let checkpoint =
            self.storage.read_checkpoint(sid).await?.ok_or_else(|| ServiceError::SessionNotFound(sid.to_string()))?;
        let log = self.storage.read_log(sid).await?.unwrap_or_default();
        let (state, seq) = replay(&checkpoint, &log).map_err(ServiceError::CorruptCheckpoint)?;
        let live = Live::new(state, seq)?;
        let mut index = self.responses.lock().expect("response index");
        for rid in live.state.responses.keys() {
            index.insert(rid.clone(), sid);
        }
        Ok(live)
    }

    async fn session(&self, sid: Uuid) -> Result<SessionGuard, ServiceError> {
        let mut guard = self.slot(sid).lock_owned().await;
        if guard.is_none() {
            match self.load(sid).await {
                Ok(live) => *guard = Some(live),
                Err(e) => {
                    drop(guard);
                    if matches!(e, ServiceError::SessionNotFound(_)) {
                        self.sessions.lock().expect("session map").remove(&sid);
                    }
                    return Err(e);
                }
            }
        }
        Ok(SessionGuard(guard))
    }

    async fn session_of(&self, rid: &str) -> Result<Uuid, ServiceError> {
        if let Some(sid) = self.responses.lock().expect("response index").get(rid).copied() {
            return Ok(sid);
        }
        let sid =
            self.storage.locate_response(rid).await?.ok_or_else(|| ServiceError::ResponseNotFound(rid.to_owned()))?;
        self.responses.lock().expect("response index").insert(rid.to_owned(), sid);
        Ok(sid)
    }

    async fn response_session(&self, rid: &str) -> Result<SessionGuard, ServiceError> {
        let sid = self.session_of(rid).await?;
        self.session(sid).await
    }

    async fn commit(&self, live: &mut Live, record: Record) -> Result<(), ServiceError> {
        let seq = live.seq + 1;
        let entry = LogEntry { seq, record };
        // Validate against a copy first so a rejected record never reaches the log.
        let mut next = live.state.clone();
        next.apply(&entry.record).map_err(ServiceError::Validation)?;
        self.storage.append(live.state.session_id, &entry).await?;
        live.state = next;
        live.seq = seq;
        Ok(())
    }

    pub async fn create_session(&self, request: CreateSessionRequest) -> Result<SessionSummary, ServiceError> {
        let params = request.params.unwrap_or_default();
        self.gateway.create_model(&params)?;
        let sid = Uuid::new_v4();
        let created_at = Utc::now();
        let state = SessionState::new(sid, params.clone(), created_at);
        let created = Record::Created { session_id: sid, params: params.clone(), created_at };
        self.storage.append(sid, &LogEntry { seq: 0, record: created }).await?;
        let checkpoint = Checkpoint { session_id: sid, sequence_no: 0, state: state.clone(), created_at };
        self.storage.write_checkpoint(&checkpoint).await?;
        *self.slot(sid).lock().await = Some(Live::new(state, 0)?);
        Ok(SessionSummary { session_id: sid, params, created_at })
    }

    pub async fn session_state(&self, session_id: &str) -> Result<SessionState, ServiceError> {
        let sid = parse_session_id(session_id)?;
        Ok(self.session(sid).await?.state.clone())
    }

    pub async fn post_message(&self, session_id: &str, request: MessageRequest) -> Result<MessageReply, ServiceError> {
        let sid = parse_session_id(session_id)?;
        let mut prompt = request.prompt;
        if let Some(attachment) = &request.attachment {
            let bytes = base64::engine::general_purpose::STANDARD
                .decode(attachment.content_base64.trim())
                .map_err(|e| ServiceError::FileProcessing(format!("attachment is not valid base64: {e}")))?;
            let text = String::from_utf8(bytes)
                .map_err(|_| ServiceError::FileProcessing("attachment is not UTF-8 text".into()))?;
            if !prompt.is_empty() {
                prompt.push_str("\n\n");
            }
            prompt.push_str(&text);
        }
        if prompt.trim().is_empty() {
            return Err(ServiceError::Validation("prompt is empty".into()));
        }

        let mut live = self.session(sid).await?;
        let params = request.params.unwrap_or_else(|| live.state.params.clone());
        let profile = request.profile.unwrap_or_default();
        let handle = self.gateway.create_model(&params)?;

        let context: Vec<ContextMessage> = live
            .state
            .messages
            .iter()
            .map(|m| {
                let role = match m.role {
                    Role::User => roles::USER,
                    Role::Assistant => roles::ASSISTANT,
                };
                ContextMessage::new(role, m.text.clone())
            })
            .collect();
        let sent = prompt.clone();
        let generated = blocking(move || handle.generate(&sent, &context)).await??;

        let response_id = format!("r-{}", Uuid::new_v4().simple());
        let stored = match self.agent.decompose(&generated, profile).await {
            Ok(mut decomposed) => {
                decomposed.response_id = response_id.clone();
                StoredResponse::Decomposed { response: decomposed }
            }
            Err(e) => {
                tracing::warn!(error = %e, "serving monolithic response");
                StoredResponse::Monolithic { text: generated.clone(), profile }
            }
        };

        let now = Utc::now();
        self.commit(&mut live, Record::Message { message: Message { role: Role::User, text: prompt, timestamp: now } })
            .await?;
        let reply = Message { role: Role::Assistant, text: generated.clone(), timestamp: now };
        self.commit(&mut live, Record::Message { message: reply }).await?;
        self.commit(&mut live, Record::ResponseStored { response_id: response_id.clone(), stored: stored.clone() })
            .await?;
        self.storage.index_response(&response_id, sid).await?;
        self.responses.lock().expect("response index").insert(response_id.clone(), sid);

        let decomposed = match stored {
            StoredResponse::Decomposed { response } => {
                live.drafts.insert(response_id.clone(), Draft::new(response.clone()));
                Some(response)
            }
            StoredResponse::Monolithic { .. } => None,
        };
        Ok(MessageReply { response_id, monolithic: generated, degraded: decomposed.is_none(), decomposed })
    }

    pub async fn get_response(&self, rid: &str) -> Result<ResponseView, ServiceError> {
        self.response_session(rid).await?.view(rid)
    }

    /// Retries decomposition of a monolithic response. Already decomposed
    /// responses are returned unchanged.
    pub async fn decompose_response(&self, rid: &str) -> Result<ResponseView, ServiceError> {
        let mut live = self.response_session(rid).await?;
        let entry = live.state.responses.get(rid).ok_or_else(|| ServiceError::ResponseNotFound(rid.to_owned()))?;
        let StoredResponse::Monolithic { text, profile } = entry.stored.clone() else {
            return live.view(rid);
        };
        let mut decomposed = self.agent.decompose(&text, profile).await.map_err(|e| match e {
            AgentFailure::Unavailable(_) => ServiceError::AgentUnavailable(e.to_string()),
            other => ServiceError::Decomposition(other.to_string()),
        })?;
        decomposed.response_id = rid.to_owned();
        self.commit(&mut live, Record::ResponseUpgraded { response_id: rid.to_owned(), response: decomposed.clone() })
            .await?;
        live.drafts.insert(rid.to_owned(), Draft::new(decomposed));
        live.view(rid)
    }

    pub async fn recompose(&self, rid: &str) -> Result<ComposedArtifact, ServiceError> {
        let live = self.response_session(rid).await?;
        Ok(live.draft(rid)?.recompose())
    }

    async fn append_event(
        &self,
        live: &mut Live,
        rid: &str,
        event: ManipulationEvent,
    ) -> Result<EventAck, ServiceError> {
        let draft = live.draft(rid)?;
        let mut next = draft.clone();
        next.apply(&event)?;
        let before = draft.recompose();
        let after = next.recompose();
        let changes = component_diff(&before, &after)?;
        self.commit(live, Record::Event { response_id: rid.to_owned(), event: event.clone() }).await?;
        let component = next.response().component(&event.component_id).cloned().expect("event target exists");
        live.drafts.insert(rid.to_owned(), next);
        Ok(EventAck { response_id: rid.to_owned(), event, component, changes, recomposed: after })
    }

    fn target(live: &Live, rid: &str, cid: &str, expected: Option<u64>) -> Result<(ComponentId, u64), ServiceError> {
        let draft = live.draft(rid)?;
        let id = parse_component_id(cid)?;
        if draft.response().component(&id).is_none() {
            return Err(ServiceError::UnknownComponent(cid.to_owned()));
        }
        check_expected(draft, expected)?;
        Ok((id, draft.next_event_id()))
    }

    pub async fn patch_component(
        &self,
        rid: &str,
        cid: &str,
        content: String,
        expected: Option<u64>,
    ) -> Result<EventAck, ServiceError> {
        let mut live = self.response_session(rid).await?;
        let (id, event_id) = Self::target(&live, rid, cid, expected)?;
        self.append_event(&mut live, rid, ManipulationEvent::manual_edit(event_id, id, content)).await
    }

    pub async fn toggle_component(
        &self,
        rid: &str,
        cid: &str,
        includes: bool,
        expected: Option<u64>,
    ) -> Result<EventAck, ServiceError> {
        let mut live = self.response_session(rid).await?;
        let (id, event_id) = Self::target(&live, rid, cid, expected)?;
        self.append_event(&mut live, rid, ManipulationEvent::toggle(event_id, id, includes)).await
    }

    /// Regenerates one component. On provider failure nothing is recorded.
    pub async fn reprompt_component(
        &self,
        rid: &str,
        cid: &str,
        instruction: String,
        params: Option<ModelParams>,
        expected: Option<u64>,
    ) -> Result<EventAck, ServiceError> {
        let mut live = self.response_session(rid).await?;
        let (id, event_id) = Self::target(&live, rid, cid, expected)?;
        let params = params.unwrap_or_else(|| live.state.params.clone());
        let handle = self.gateway.create_model(&params)?;
        let label = handle.label();
        let response = live.draft(rid)?.response().clone();
        let (target, sent) = (id.clone(), instruction.clone());
        let content = blocking(move || gateway::reprompt_component(&handle, &response, &target, &sent)).await??;
        if content.trim().is_empty() {
            return Err(ServiceError::from(GatewayError::ProviderFailure("model returned empty content".into())));
        }
        let event = ManipulationEvent::reprompt_result(event_id, id, content, Provenance { model: label, instruction });
        self.append_event(&mut live, rid, event).await
    }

    pub async fn checkpoint(&self, session_id: &str) -> Result<CheckpointInfo, ServiceError> {
        let sid = parse_session_id(session_id)?;
        let live = self.session(sid).await?;
        let created_at = Utc::now();
        let checkpoint = Checkpoint { session_id: sid, sequence_no: live.seq, state: live.state.clone(), created_at };
        self.storage.write_checkpoint(&checkpoint).await?;
        Ok(CheckpointInfo { session_id: sid, sequence_no: live.seq, created_at })
    }

    /// Discards in-memory state and rebuilds it from the latest checkpoint
    /// plus the events logged after it.
    pub async fn restore(&self, session_id: &str) -> Result<SessionState, ServiceError> {
        let sid = parse_session_id(session_id)?;
        let mut guard = self.slot(sid).lock_owned().await;
        *guard = None;
        match self.load(sid).await {
            Ok(live) => {
                let state = live.state.clone();
                *guard = Some(live);
                Ok(state)
            }
            Err(e) => {
                drop(guard);
                if matches!(e, ServiceError::SessionNotFound(_)) {
                    self.sessions.lock().expect("session map").remove(&sid);
                }
                Err(e)
            }
        }
    }
}
