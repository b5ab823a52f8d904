//! Session state and the append-only records it is rebuilt from.

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use maod_core::component::{DecomposedResponse, Profile};
use maod_core::composer::{ComposeError, Draft, ManipulationEvent};
use maod_core::gateway::ModelParams;
use serde::{Deserialize, Serialize};
use uuid::Uuid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub text: String,
    pub timestamp: DateTime<Utc>,
}

/// A generated response as first stored. Monolithic responses are kept when
/// decomposition was unavailable and can be upgraded later.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum StoredResponse {
    Decomposed { response: DecomposedResponse },
    Monolithic { text: String, profile: Profile },
}

impl StoredResponse {
    pub fn text(&self) -> &str {
        match self {
            StoredResponse::Decomposed { response } => &response.source_text,
            StoredResponse::Monolithic { text, .. } => text,
        }
    }

    pub fn is_monolithic(&self) -> bool {
        matches!(self, StoredResponse::Monolithic { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResponseEntry {
    pub stored: StoredResponse,
    #[serde(default)]
    pub events: Vec<ManipulationEvent>,
}

impl ResponseEntry {
    /// Current manipulated state, or `None` for a monolithic response.
    pub fn draft(&self) -> Option<Result<Draft, ComposeError>> {
        match &self.stored {
            StoredResponse::Decomposed { response } => Some(Draft::replay(response.clone(), &self.events)),
            StoredResponse::Monolithic { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub session_id: Uuid,
    pub created_at: DateTime<Utc>,
    pub params: ModelParams,
    pub messages: Vec<Message>,
    pub responses: BTreeMap<String, ResponseEntry>,
}

impl SessionState {
    pub fn new(session_id: Uuid, params: ModelParams, created_at: DateTime<Utc>) -> Self {
        SessionState { session_id, created_at, params, messages: Vec::new(), responses: BTreeMap::new() }
    }

    /// Folds one record into the state. Fails if the record does not fit.
    pub fn apply(&mut self, record: &Record) -> Result<(), String> {
        match record {
            Record::Created { .. } => return Err("duplicate session creation record".into()),
            Record::Message { message } => self.messages.push(message.clone()),
            Record::ResponseStored { response_id, stored } => {
                if self.responses.contains_key(response_id) {
                    return Err(format!("response {response_id} stored twice"));
                }
                let entry = ResponseEntry { stored: stored.clone(), events: Vec::new() };
                self.responses.insert(response_id.clone(), entry);
            }
            Record::ResponseUpgraded { response_id, response } => {
                let entry = self.responses.get_mut(response_id).ok_or_else(|| format!("no response {response_id}"))?;
                if !entry.stored.is_monolithic() {
                    return Err(format!("response {response_id} is already decomposed"));
                }
                entry.stored = StoredResponse::Decomposed { response: response.clone() };
            }
            Record::Event { response_id, event } => {
                let entry = self.responses.get_mut(response_id).ok_or_else(|| format!("no response {response_id}"))?;
                entry.events.push(event.clone());
            }
        }
        Ok(())
    }
}

/// One entry of a session's append-only log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Record {
    Created { session_id: Uuid, params: ModelParams, created_at: DateTime<Utc> },
    Message { message: Message },
    ResponseStored { response_id: String, stored: StoredResponse },
    ResponseUpgraded { response_id: String, response: DecomposedResponse },
    Event { response_id: String, event: ManipulationEvent },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub seq: u64,
    #[serde(flatten)]
    pub record: Record,
}

/// A snapshot of session state covering log entries up to `sequence_no`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub session_id: Uuid,
    pub sequence_no: u64,
    pub state: SessionState,
    pub created_at: DateTime<Utc>,
}

/// Rebuilds state from a checkpoint and the log entries that follow it.
pub fn replay(checkpoint: &Checkpoint, log: &[LogEntry]) -> Result<(SessionState, u64), String> {
    let mut state = checkpoint.state.clone();
    let mut seq = checkpoint.sequence_no;
    for entry in log.iter().filter(|e| e.seq > checkpoint.sequence_no) {
        if entry.seq != seq + 1 {
            return Err(format!("log gap: expected entry {} but found {}", seq + 1, entry.seq));
        }
        state.apply(&entry.record)?;
        seq = entry.seq;
    }
    Ok((state, seq))
}
