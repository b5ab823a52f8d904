mod support;

use std::sync::Arc;

use chrono::{TimeZone, Utc};
use maod_core::a2a::{
    decode_reply, decode_task, encode_reply, encode_task, is_legal_trace, A2AReply, A2ATask, AgentError, AgentState,
    DecompositionAgent, ErrorCode, MalformedMessage, ReplyOutcome, StateTransition, TaskPayload, TaskType,
    PROTOCOL_VERSION,
};
use maod_core::{decompose, Profile};
use proptest::prelude::*;
use uuid::Uuid;

fn state() -> impl Strategy<Value = AgentState> {
    proptest::sample::select(AgentState::ALL.to_vec())
}

fn transition() -> impl Strategy<Value = StateTransition> {
    (state(), state(), 0i64..4_000_000_000_000).prop_map(|(from_state, to_state, ms)| StateTransition {
        from_state,
        to_state,
        at: Utc.timestamp_millis_opt(ms).unwrap(),
    })
}

fn task() -> impl Strategy<Value = A2ATask> {
    (
        any::<u128>(),
        "\\PC{0,40}|[\\s\\S]{0,40}",
        prop_oneof![Just(Profile::Document), Just(Profile::Email)],
        proptest::collection::vec(transition(), 0..5),
    )
        .prop_map(|(id, text, profile, trace)| A2ATask {
            protocol_version: PROTOCOL_VERSION.to_owned(),
            task_id: Uuid::from_u128(id),
            task_type: TaskType::Decompose,
            payload: TaskPayload { text, profile },
            trace,
        })
}

proptest! {
    #[test]
    fn task_round_trip(t in task()) {
        prop_assert_eq!(decode_task(&encode_task(&t)).unwrap(), t);
    }

    #[test]
    fn reply_round_trip(t in task(), fail in any::<bool>()) {
        let outcome = match decompose(&t.payload.text, t.payload.profile) {
            Ok(r) if !fail => ReplyOutcome::Ok(r),
            _ => ReplyOutcome::Error(AgentError { code: ErrorCode::EmptyResponse, message: "m".into() }),
        };
        let reply = A2AReply { task_id: t.task_id, outcome, trace: t.trace.clone() };
        prop_assert_eq!(decode_reply(&encode_reply(&reply)).unwrap(), reply);
    }

    #[test]
    fn decoding_never_panics(bytes in proptest::collection::vec(any::<u8>(), 0..200)) {
        let _ = decode_task(&bytes);
        let _ = decode_reply(&bytes);
    }

    #[test]
    fn agent_traces_are_legal(t in task()) {
        let reply = DecompositionAgent::default().run(&t);
        prop_assert!(is_legal_trace(&reply.trace), "{:?}", reply.trace);
        prop_assert_eq!(reply.task_id, t.task_id);
        match &reply.outcome {
            ReplyOutcome::Ok(r) => {
                prop_assert_eq!(reply.trace.last().unwrap().to_state, AgentState::Done);
                prop_assert!(r.validate().ok);
            }
            ReplyOutcome::Error(_) => prop_assert_eq!(reply.trace.last().unwrap().to_state, AgentState::Failed),
        }
    }
}

#[test]
fn empty_payload_fails_at_parse() {
    for text in ["", "  \n\t\n"] {
        let reply = DecompositionAgent::default().run(&A2ATask::decompose(text, Profile::Document));
        assert_eq!(reply.error().unwrap().code, ErrorCode::EmptyResponse);
        let last = reply.trace.last().unwrap();
        assert_eq!((last.from_state, last.to_state), (AgentState::Parse, AgentState::Failed));
        assert!(is_legal_trace(&reply.trace));
    }
}

#[test]
fn successful_trace_visits_every_stage() {
    let reply = DecompositionAgent::default().run(&A2ATask::decompose("# T\n\nbody\n", Profile::Document));
    let states: Vec<_> = reply.trace.iter().map(|t| t.to_state).collect();
    assert_eq!(states, [AgentState::Parse, AgentState::Decompose, AgentState::Validate, AgentState::Done]);
    assert_eq!(reply.trace[0].from_state, AgentState::Received);
}

#[test]
fn version_and_schema_errors_are_distinct() {
    let mut v: serde_json::Value =
        serde_json::from_slice(&encode_task(&A2ATask::decompose("x", Profile::Email))).unwrap();
    v["protocol_version"] = "2.0".into();
    assert!(matches!(decode_task(v.to_string().as_bytes()), Err(MalformedMessage::UnsupportedVersion(_))));
    v["protocol_version"] = "1.0".into();
    v["payload"]["profile"] = "memo".into();
    assert!(matches!(decode_task(v.to_string().as_bytes()), Err(MalformedMessage::Schema(_))));
    assert!(matches!(decode_task(b"{"), Err(MalformedMessage::Syntax(_))));
}

#[test]
fn reply_with_both_result_and_error_is_rejected() {
    let reply = DecompositionAgent::default().run(&A2ATask::decompose("hello", Profile::Document));
    let mut v: serde_json::Value = serde_json::from_slice(&encode_reply(&reply)).unwrap();
    v["error"] = serde_json::json!({"code": "InternalError", "message": "x"});
    assert!(matches!(decode_reply(v.to_string().as_bytes()), Err(MalformedMessage::Schema(_))));
}

#[test]
fn agent_is_stateless_under_concurrency() {
    let agent = Arc::new(DecompositionAgent::default());
    let inputs: Vec<String> = (0..16).map(|i| format!("# Doc {i}\n\npara {i}\n\n- item\n")).collect();
    let expected: Vec<_> = inputs.iter().map(|t| decompose(t, Profile::Document).unwrap()).collect();
    let handles: Vec<_> = inputs
        .into_iter()
        .map(|text| {
            let agent = agent.clone();
            std::thread::spawn(move || {
                (0..20).map(|_| agent.run(&A2ATask::decompose(text.clone(), Profile::Document))).collect::<Vec<_>>()
            })
        })
        .collect();
    for (h, want) in handles.into_iter().zip(expected) {
        for reply in h.join().unwrap() {
            assert_eq!(reply.result(), Some(&want));
        }
    }
}
