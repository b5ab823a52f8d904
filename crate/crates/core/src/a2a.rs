//! Agent-to-agent task protocol for delegating decomposition.
//!
//! The orchestrator sends an [`A2ATask`]; the [`DecompositionAgent`] runs it
//! through `Received -> Parse -> Decompose -> Validate -> Done | Failed` and
//! answers with an [`A2AReply`] carrying the full transition trace.

use std::fmt;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;

use chrono::{DateTime, SubsecRound, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;
use uuid::Uuid;

use crate::component::{DecomposedResponse, Profile};
use crate::engine::{Classifier, DecomposeError, Pipeline, RuleClassifier};

pub const PROTOCOL_VERSION: &str = "1.0";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MalformedMessage {
    #[error("malformed message: invalid JSON: {0}")]
    Syntax(String),
    #[error("malformed message: unsupported protocol_version {0:?}")]
    UnsupportedVersion(String),
    #[error("malformed message: {0}")]
    Schema(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskType {
    Decompose,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskPayload {
    pub text: String,
    pub profile: Profile,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AgentState {
    Received,
    Parse,
    Decompose,
    Validate,
    Done,
    Failed,
}

impl AgentState {
    pub const ALL: [AgentState; 6] = [
        AgentState::Received,
        AgentState::Parse,
        AgentState::Decompose,
        AgentState::Validate,
        AgentState::Done,
        AgentState::Failed,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AgentState::Received => "Received",
            AgentState::Parse => "Parse",
            AgentState::Decompose => "Decompose",
            AgentState::Validate => "Validate",
            AgentState::Done => "Done",
            AgentState::Failed => "Failed",
        }
    }

    pub fn is_terminal(self) -> bool {
        matches!(self, AgentState::Done | AgentState::Failed)
    }

    /// Whether the machine allows `self -> to`.
    pub fn can_move_to(self, to: AgentState) -> bool {
        use AgentState::*;
        matches!(
            (self, to),
            (Received, Parse)
                | (Parse, Decompose)
                | (Parse, Failed)
                | (Decompose, Validate)
                | (Decompose, Failed)
                | (Validate, Done)
                | (Validate, Failed)
        )
    }
}

impl fmt::Display for AgentState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

mod millis {
    use chrono::{DateTime, SecondsFormat, Utc};
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(at: &DateTime<Utc>, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&at.to_rfc3339_opts(SecondsFormat::Millis, true))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DateTime<Utc>, D::Error> {
        let s = String::deserialize(d)?;
        DateTime::parse_from_rfc3339(&s).map(|t| t.with_timezone(&Utc)).map_err(serde::de::Error::custom)
    }
}

/// One step of the agent's state machine. Timestamps have millisecond
/// precision and are informational.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateTransition {
    pub from_state: AgentState,
    pub to_state: AgentState,
    #[serde(with = "millis")]
    pub at: DateTime<Utc>,
}

impl StateTransition {
    pub fn now(from_state: AgentState, to_state: AgentState) -> Self {
        StateTransition { from_state, to_state, at: Utc::now().trunc_subsecs(3) }
    }
}

/// Whether `trace` is a complete path from `Received` to a terminal state.
pub fn is_legal_trace(trace: &[StateTransition]) -> bool {
    let Some(first) = trace.first() else { return false };
    if first.from_state != AgentState::Received {
        return false;
    }
    let steps_ok = trace.iter().all(|t| t.from_state.can_move_to(t.to_state));
    let chained = trace.windows(2).all(|w| w[0].to_state == w[1].from_state);
    steps_ok && chained && trace.last().is_some_and(|t| t.to_state.is_terminal())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct A2ATask {
    pub protocol_version: String,
    pub task_id: Uuid,
    pub task_type: TaskType,
    pub payload: TaskPayload,
    #[serde(default)]
    pub trace: Vec<StateTransition>,
}

impl A2ATask {
    pub fn decompose(text: impl Into<String>, profile: Profile) -> Self {
        A2ATask {
            protocol_version: PROTOCOL_VERSION.to_owned(),
            task_id: Uuid::new_v4(),
            task_type: TaskType::Decompose,
            payload: TaskPayload { text: text.into(), profile },
            trace: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ErrorCode {
    EmptyResponse,
    DecompositionError,
    InternalError,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentError {
    pub code: ErrorCode,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ReplyOutcome {
    Ok(DecomposedResponse),
    Error(AgentError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "wire::Reply", into = "wire::Reply")]
pub struct A2AReply {
    pub task_id: Uuid,
    pub outcome: ReplyOutcome,
    pub trace: Vec<StateTransition>,
}

impl A2AReply {
    pub fn is_ok(&self) -> bool {
        matches!(self.outcome, ReplyOutcome::Ok(_))
    }

    pub fn result(&self) -> Option<&DecomposedResponse> {
        match &self.outcome {
            ReplyOutcome::Ok(r) => Some(r),
            ReplyOutcome::Error(_) => None,
        }
    }

    pub fn error(&self) -> Option<&AgentError> {
        match &self.outcome {
            ReplyOutcome::Error(e) => Some(e),
            ReplyOutcome::Ok(_) => None,
        }
    }
}

mod wire {
    use serde::{Deserialize, Serialize};
    use uuid::Uuid;

    use super::{A2AReply, AgentError, ReplyOutcome, StateTransition};
    use crate::component::DecomposedResponse;

    #[derive(Serialize, Deserialize, PartialEq, Eq, Clone, Copy)]
    #[serde(rename_all = "snake_case")]
    enum Status {
        Ok,
        Error,
    }

    #[derive(Serialize, Deserialize)]
    pub struct Reply {
        task_id: Uuid,
        status: Status,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        result: Option<DecomposedResponse>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        error: Option<AgentError>,
        trace: Vec<StateTransition>,
    }

    impl TryFrom<Reply> for A2AReply {
        type Error = String;

        fn try_from(r: Reply) -> Result<Self, String> {
            let outcome = match (r.status, r.result, r.error) {
                (Status::Ok, Some(result), None) => ReplyOutcome::Ok(result),
                (Status::Error, None, Some(error)) => ReplyOutcome::Error(error),
                _ => return Err("reply must carry exactly one of result/error, matching status".into()),
            };
            Ok(A2AReply { task_id: r.task_id, outcome, trace: r.trace })
        }
    }

    impl From<A2AReply> for Reply {
        fn from(r: A2AReply) -> Self {
            let (status, result, error) = match r.outcome {
                ReplyOutcome::Ok(result) => (Status::Ok, Some(result), None),
                ReplyOutcome::Error(error) => (Status::Error, None, Some(error)),
            };
            Reply { task_id: r.task_id, status, result, error, trace: r.trace }
        }
    }
}

pub fn encode_task(task: &A2ATask) -> Vec<u8> {
    serde_json::to_vec(task).expect("task serializes")
}

pub fn encode_reply(reply: &A2AReply) -> Vec<u8> {
    serde_json::to_vec(reply).expect("reply serializes")
}

fn parse_envelope(bytes: &[u8]) -> Result<Value, MalformedMessage> {
    serde_json::from_slice(bytes).map_err(|e| MalformedMessage::Syntax(e.to_string()))
}

/// Decodes a task, rejecting anything but protocol version 1.0.
pub fn decode_task(bytes: &[u8]) -> Result<A2ATask, MalformedMessage> {
    let value = parse_envelope(bytes)?;
    match value.get("protocol_version") {
        None => return Err(MalformedMessage::Schema("missing field `protocol_version`".into())),
        Some(Value::String(v)) if v == PROTOCOL_VERSION => {}
        Some(Value::String(v)) => return Err(MalformedMessage::UnsupportedVersion(v.clone())),
        Some(other) => return Err(MalformedMessage::UnsupportedVersion(other.to_string())),
    }
    serde_json::from_value(value).map_err(|e| MalformedMessage::Schema(e.to_string()))
}

pub fn decode_reply(bytes: &[u8]) -> Result<A2AReply, MalformedMessage> {
    let value = parse_envelope(bytes)?;
    serde_json::from_value(value).map_err(|e| MalformedMessage::Schema(e.to_string()))
}

/// Runs decomposition tasks. Holds no per-task state.
#[derive(Clone)]
pub struct DecompositionAgent {
    classifier: Arc<dyn Classifier>,
}

impl Default for DecompositionAgent {
    fn default() -> Self {
        DecompositionAgent::new(Arc::new(RuleClassifier))
    }
}

impl fmt::Debug for DecompositionAgent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DecompositionAgent").finish_non_exhaustive()
    }
}

struct Trace {
    state: AgentState,
    steps: Vec<StateTransition>,
}

impl Trace {
    fn new() -> Self {
        Trace { state: AgentState::Received, steps: Vec::new() }
    }

    fn advance(&mut self, to: AgentState) {
        debug_assert!(self.state.can_move_to(to), "{} -> {to}", self.state);
        self.steps.push(StateTransition::now(self.state, to));
        self.state = to;
    }

    fn fail(&mut self, outcome: ReplyOutcome) -> ReplyOutcome {
        self.advance(AgentState::Failed);
        outcome
    }
}

impl DecompositionAgent {
    pub fn new(classifier: Arc<dyn Classifier>) -> Self {
        DecompositionAgent { classifier }
    }

    /// Executes `task`. Payload faults become error replies; the agent never
    /// panics outward.
    pub fn run(&self, task: &A2ATask) -> A2AReply {
        let mut trace = Trace::new();
        let outcome = match task.task_type {
            TaskType::Decompose => self.decompose(&task.payload, &mut trace),
        };
        A2AReply { task_id: task.task_id, outcome, trace: trace.steps }
    }

    fn decompose(&self, payload: &TaskPayload, trace: &mut Trace) -> ReplyOutcome {
        let pipeline = Pipeline::new(self.classifier.as_ref());

        trace.advance(AgentState::Parse);
        let blocks = match stage(|| pipeline.parse(&payload.text)) {
            Some(Ok(blocks)) => blocks,
            Some(Err(e)) => return trace.fail(from_decompose_error(e)),
            None => return trace.fail(internal_error()),
        };

        trace.advance(AgentState::Decompose);
        let Some(response) = stage(|| pipeline.decompose_blocks(&payload.text, &blocks, payload.profile)) else {
            return trace.fail(internal_error());
        };

        trace.advance(AgentState::Validate);
        match stage(|| pipeline.validate(response)) {
            Some(Ok(valid)) => {
                trace.advance(AgentState::Done);
                ReplyOutcome::Ok(valid)
            }
            Some(Err(e)) => trace.fail(from_decompose_error(e)),
            None => trace.fail(internal_error()),
        }
    }
}

/// Runs one pipeline stage, turning a panic into `None`.
fn stage<T>(f: impl FnOnce() -> T) -> Option<T> {
    catch_unwind(AssertUnwindSafe(f)).ok()
}

fn internal_error() -> ReplyOutcome {
    ReplyOutcome::Error(error(ErrorCode::InternalError, "decomposition agent fault"))
}

fn error(code: ErrorCode, message: impl Into<String>) -> AgentError {
    AgentError { code, message: message.into() }
}

fn from_decompose_error(e: DecomposeError) -> ReplyOutcome {
    let code = match e {
        DecomposeError::EmptyResponse => ErrorCode::EmptyResponse,
        DecomposeError::DecompositionError(_) => ErrorCode::DecompositionError,
    };
    ReplyOutcome::Error(error(code, e.to_string()))
}

/// Body of the agent's health endpoint.
pub fn health_body() -> Value {
    serde_json::json!({
        "status": "ok",
        "states": AgentState::ALL.iter().map(|s| s.as_str()).collect::<Vec<_>>(),
    })
}
