//! Manipulation events and recomposition.
//!
//! A [`Draft`] is a decomposed response plus the id of the last event applied
//! to it. Events touch exactly one component. [`Draft::recompose`] renders the
//! included components back into one artifact.

use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::component::{ComponentId, DecomposedResponse};

/// Inserted between two included components that would otherwise touch
/// without any line break, because something between them was excluded.
pub const ORPHAN_JOINER: &str = "\n\n";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ComposeError {
    #[error("unknown component {0}")]
    UnknownComponent(ComponentId),
    #[error("stale event {event_id}: last applied event is {last_applied}")]
    StaleEvent { event_id: u64, last_applied: u64 },
    #[error("new content for {0} is empty")]
    EmptyContent(ComponentId),
    #[error("artifacts come from different responses or carry no lineage")]
    LineageMismatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    ManualEdit,
    Toggle,
    RepromptResult,
}

/// Where a reprompted component's new content came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub model: String,
    pub instruction: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EventAction {
    ManualEdit { content: String },
    Toggle { includes: bool },
    RepromptResult { content: String, provenance: Provenance },
}

impl EventAction {
    pub fn kind(&self) -> EventKind {
        match self {
            EventAction::ManualEdit { .. } => EventKind::ManualEdit,
            EventAction::Toggle { .. } => EventKind::Toggle,
            EventAction::RepromptResult { .. } => EventKind::RepromptResult,
        }
    }
}

/// One user action against one component.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "wire::Event", into = "wire::Event")]
pub struct ManipulationEvent {
    pub event_id: u64,
    pub component_id: ComponentId,
    pub action: EventAction,
}

impl ManipulationEvent {
    pub fn manual_edit(event_id: u64, component_id: ComponentId, content: impl Into<String>) -> Self {
        ManipulationEvent { event_id, component_id, action: EventAction::ManualEdit { content: content.into() } }
    }

    pub fn toggle(event_id: u64, component_id: ComponentId, includes: bool) -> Self {
        ManipulationEvent { event_id, component_id, action: EventAction::Toggle { includes } }
    }

    pub fn reprompt_result(
        event_id: u64,
        component_id: ComponentId,
        content: impl Into<String>,
        provenance: Provenance,
    ) -> Self {
        ManipulationEvent {
            event_id,
            component_id,
            action: EventAction::RepromptResult { content: content.into(), provenance },
        }
    }

    pub fn kind(&self) -> EventKind {
        self.action.kind()
    }
}

mod wire {
    use serde::{Deserialize, Serialize};

    use super::{EventAction, EventKind, ManipulationEvent, Provenance};
    use crate::component::ComponentId;

    #[derive(Serialize, Deserialize)]
    #[serde(deny_unknown_fields)]
    pub struct Event {
        event_id: u64,
        kind: EventKind,
        component_id: ComponentId,
        payload: Payload,
    }

    #[derive(Serialize, Deserialize, Default)]
    #[serde(deny_unknown_fields)]
    struct Payload {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        content: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        includes: Option<bool>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        model: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        instruction: Option<String>,
    }

    impl TryFrom<Event> for ManipulationEvent {
        type Error = String;

        fn try_from(e: Event) -> Result<Self, Self::Error> {
            let p = e.payload;
            let action = match (e.kind, p) {
                (
                    EventKind::ManualEdit,
                    Payload { content: Some(content), includes: None, model: None, instruction: None },
                ) => EventAction::ManualEdit { content },
                (
                    EventKind::Toggle,
                    Payload { content: None, includes: Some(includes), model: None, instruction: None },
                ) => EventAction::Toggle { includes },
                (
                    EventKind::RepromptResult,
                    Payload {
                        content: Some(content),
                        includes: None,
                        model: Some(model),
                        instruction: Some(instruction),
                    },
                ) => EventAction::RepromptResult { content, provenance: Provenance { model, instruction } },
                (kind, _) => return Err(format!("payload does not match event kind {kind:?}")),
            };
            Ok(ManipulationEvent { event_id: e.event_id, component_id: e.component_id, action })
        }
    }

    impl From<ManipulationEvent> for Event {
        fn from(e: ManipulationEvent) -> Self {
            let kind = e.kind();
            let payload = match e.action {
                EventAction::ManualEdit { content } => Payload { content: Some(content), ..Default::default() },
                EventAction::Toggle { includes } => Payload { includes: Some(includes), ..Default::default() },
                EventAction::RepromptResult { content, provenance } => Payload {
                    content: Some(content),
                    model: Some(provenance.model),
                    instruction: Some(provenance.instruction),
                    ..Default::default()
                },
            };
            Event { event_id: e.event_id, kind, component_id: e.component_id, payload }
        }
    }
}

/// What one component contributed to an artifact.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Contribution {
    pub id: Option<ComponentId>,
    /// Rendered bytes, `None` when excluded.
    pub rendered: Option<String>,
    /// Byte range this component occupies in the artifact text, including
    /// any joiner attributed to it. Empty when excluded without a joiner.
    pub range: Range<usize>,
}

/// The recomposed output for one response at one point in its event history.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComposedArtifact {
    pub text: String,
    pub included_ids: Vec<ComponentId>,
    pub basis_event_id: u64,
    /// Lineage for [`component_diff`]; not part of the wire format.
    #[serde(skip)]
    pub response_id: Option<String>,
    #[serde(skip)]
    pub contributions: Vec<Contribution>,
}

impl ComposedArtifact {
    pub fn range_of(&self, id: &ComponentId) -> Option<Range<usize>> {
        self.contributions.iter().find(|c| c.id.as_ref() == Some(id)).map(|c| c.range.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChangeKind {
    Edited,
    Excluded,
    Included,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComponentChange {
    pub component_id: ComponentId,
    pub change: ChangeKind,
}

/// Applies one event to `response`, assuming `last_applied` was the previous
/// event id. Only the targeted component changes.
pub fn apply(
    response: &DecomposedResponse,
    last_applied: u64,
    event: &ManipulationEvent,
) -> Result<DecomposedResponse, ComposeError> {
    if event.event_id <= last_applied {
        return Err(ComposeError::StaleEvent { event_id: event.event_id, last_applied });
    }
    let pos = response
        .position(&event.component_id)
        .ok_or_else(|| ComposeError::UnknownComponent(event.component_id.clone()))?;

    let mut next = response.clone();
    let target = &mut next.components[pos];
    match &event.action {
        EventAction::ManualEdit { content } | EventAction::RepromptResult { content, .. } => {
            if content.trim().is_empty() {
                return Err(ComposeError::EmptyContent(event.component_id.clone()));
            }
            target.content.clone_from(content);
        }
        EventAction::Toggle { includes } => target.includes = *includes,
    }
    Ok(next)
}

fn has_line_break_edge(s: &str, at_end: bool) -> bool {
    let ws: &str = if at_end { &s[s.trim_end().len()..] } else { &s[..s.len() - s.trim_start().len()] };
    ws.contains('\n')
}

/// Renders included components in document order. See [`ORPHAN_JOINER`] for
/// the single case where bytes not owned by a component are emitted.
pub fn recompose(response: &DecomposedResponse, basis_event_id: u64) -> ComposedArtifact {
    let mut text = String::new();
    let mut included_ids = Vec::new();
    let mut contributions: Vec<Contribution> = Vec::with_capacity(response.components.len());
    let mut gap: Option<usize> = None;
    let mut seen_included = false;

    for c in &response.components {
        if !c.includes {
            contributions.push(Contribution { id: Some(c.id.clone()), rendered: None, range: text.len()..text.len() });
            if seen_included {
                gap = Some(contributions.len() - 1);
            }
            continue;
        }

        let rendered = c.rendered();
        if let Some(last_excluded) = gap.take() {
            if !has_line_break_edge(&text, true) && !has_line_break_edge(&rendered, false) {
                let at = text.len();
                text.push_str(ORPHAN_JOINER);
                contributions[last_excluded].range = at..text.len();
            }
        }
        let start = text.len();
        text.push_str(&rendered);
        included_ids.push(c.id.clone());
        contributions.push(Contribution { id: Some(c.id.clone()), rendered: Some(rendered), range: start..text.len() });
        seen_included = true;
    }

    ComposedArtifact {
        text,
        included_ids,
        basis_event_id,
        response_id: Some(response.response_id.clone()),
        contributions,
    }
}

/// Components whose rendered contribution differs between two artifacts of
/// the same response.
pub fn component_diff(
    before: &ComposedArtifact,
    after: &ComposedArtifact,
) -> Result<Vec<ComponentChange>, ComposeError> {
    let same_lineage = before.response_id.is_some()
        && before.response_id == after.response_id
        && before.contributions.len() == after.contributions.len()
        && before.contributions.iter().zip(&after.contributions).all(|(a, b)| a.id == b.id);
    if !same_lineage {
        return Err(ComposeError::LineageMismatch);
    }

    let changes = before
        .contributions
        .iter()
        .zip(&after.contributions)
        .filter_map(|(a, b)| {
            let change = match (&a.rendered, &b.rendered) {
                (Some(_), None) => ChangeKind::Excluded,
                (None, Some(_)) => ChangeKind::Included,
                (Some(x), Some(y)) if x != y => ChangeKind::Edited,
                _ => return None,
            };
            Some(ComponentChange { component_id: a.id.clone().expect("lineage checked"), change })
        })
        .collect();
    Ok(changes)
}

/// A response under manipulation: the current component state and the id of
/// the last event folded into it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Draft {
    response: DecomposedResponse,
    last_event_id: u64,
}

impl Draft {
    pub fn new(response: DecomposedResponse) -> Self {
        Draft { response, last_event_id: 0 }
    }

    /// Folds `events` over `base` in order.
    pub fn replay<'a>(
        base: DecomposedResponse,
        events: impl IntoIterator<Item = &'a ManipulationEvent>,
    ) -> Result<Self, ComposeError> {
        let mut draft = Draft::new(base);
        for e in events {
            draft.apply(e)?;
        }
        Ok(draft)
    }

    pub fn response(&self) -> &DecomposedResponse {
        &self.response
    }

    pub fn last_event_id(&self) -> u64 {
        self.last_event_id
    }

    pub fn next_event_id(&self) -> u64 {
        self.last_event_id + 1
    }

    /// Applies `event`; on error the draft is unchanged.
    pub fn apply(&mut self, event: &ManipulationEvent) -> Result<(), ComposeError> {
        self.response = apply(&self.response, self.last_event_id, event)?;
        self.last_event_id = event.event_id;
        Ok(())
    }

    pub fn recompose(&self) -> ComposedArtifact {
        recompose(&self.response, self.last_event_id)
    }
}
