//! Component graph data model and its validation rules.
//!
//! A [`DecomposedResponse`] is the ordered set of typed components carved out
//! of one monolithic model response. Document order is list position. Every
//! component remembers the exact bytes that surrounded it in the source
//! (`prefix` / `suffix` meta keys) so the response can be reassembled
//! byte-for-byte.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Meta keys with a fixed meaning.
pub mod meta_keys {
    pub const LEVEL: &str = "level";
    pub const ROLE: &str = "role";
    pub const STYLE: &str = "style";
    pub const SPAN_START: &str = "span_start";
    pub const SPAN_END: &str = "span_end";
    pub const PREFIX: &str = "prefix";
    pub const SUFFIX: &str = "suffix";
}

/// String-to-string metadata map. Numeric values are decimal encoded.
pub type Meta = BTreeMap<String, String>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid component id {0:?}: expected `c` followed by a positive integer")]
pub struct InvalidComponentId(pub String);

/// Stable component identifier of the form `c1`, `c2`, ...
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ComponentId(String);

impl ComponentId {
    /// Id for the component at 1-based document position `ordinal`.
    pub fn from_ordinal(ordinal: usize) -> Self {
        assert!(ordinal > 0, "component ordinals start at 1");
        ComponentId(format!("c{ordinal}"))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// The numeric part of the id.
    pub fn ordinal(&self) -> u64 {
        self.0[1..].parse().expect("validated on construction")
    }
}

impl TryFrom<String> for ComponentId {
    type Error = InvalidComponentId;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        let digits = value.strip_prefix('c').unwrap_or("");
        let well_formed = !digits.is_empty()
            && digits.bytes().all(|b| b.is_ascii_digit())
            && !digits.starts_with('0')
            && digits.parse::<u64>().is_ok();
        if well_formed {
            Ok(ComponentId(value))
        } else {
            Err(InvalidComponentId(value))
        }
    }
}

impl FromStr for ComponentId {
    type Err = InvalidComponentId;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ComponentId::try_from(s.to_owned())
    }
}

impl From<ComponentId> for String {
    fn from(id: ComponentId) -> Self {
        id.0
    }
}

impl fmt::Display for ComponentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Which type vocabulary a response is decomposed under.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    #[default]
    Document,
    Email,
}

impl Profile {
    pub fn as_str(self) -> &'static str {
        match self {
            Profile::Document => "document",
            Profile::Email => "email",
        }
    }
}

impl FromStr for Profile {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "document" => Ok(Profile::Document),
            "email" => Ok(Profile::Email),
            other => Err(format!("unknown profile {other:?} (expected document or email)")),
        }
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Component class. An open string checked against per-profile vocabularies.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ComponentType(String);

impl ComponentType {
    pub const HEADING: &'static str = "Heading";
    pub const PARAGRAPH: &'static str = "Paragraph";
    pub const LIST: &'static str = "List";
    pub const CODE: &'static str = "Code";
    pub const CITATION: &'static str = "Citation";
    pub const SUBJECT: &'static str = "Subject";
    pub const GREETING: &'static str = "Greeting";
    pub const CLOSING: &'static str = "Closing";
    pub const SIGNATURE: &'static str = "Signature";

    /// Types available under every profile.
    pub const CORE: [&'static str; 5] = [Self::HEADING, Self::PARAGRAPH, Self::LIST, Self::CODE, Self::CITATION];
    /// Additional types registered by the email profile.
    pub const EMAIL: [&'static str; 4] = [Self::SUBJECT, Self::GREETING, Self::CLOSING, Self::SIGNATURE];

    pub fn new(value: impl Into<String>) -> Self {
        ComponentType(value.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn is_registered_in(&self, profile: Profile) -> bool {
        let core = Self::CORE.contains(&self.0.as_str());
        match profile {
            Profile::Document => core,
            Profile::Email => core || Self::EMAIL.contains(&self.0.as_str()),
        }
    }
}

impl fmt::Display for ComponentType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    BelongsTo,
    RefersTo,
}

/// Directed relation from `source` to `target`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Link {
    pub source: ComponentId,
    pub target: ComponentId,
    pub relation: Relation,
}

impl Link {
    pub fn belongs_to(source: ComponentId, target: ComponentId) -> Self {
        Link { source, target, relation: Relation::BelongsTo }
    }

    pub fn refers_to(source: ComponentId, target: ComponentId) -> Self {
        Link { source, target, relation: Relation::RefersTo }
    }
}

fn default_includes() -> bool {
    true
}

/// One semantic unit of a response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Component {
    pub id: ComponentId,
    #[serde(rename = "type")]
    pub kind: ComponentType,
    pub content: String,
    #[serde(default)]
    pub meta: Meta,
    #[serde(default = "default_includes")]
    pub includes: bool,
    #[serde(default)]
    pub links: Vec<Link>,
}

impl Component {
    pub fn new(id: ComponentId, kind: ComponentType, content: impl Into<String>) -> Self {
        Component { id, kind, content: content.into(), meta: Meta::new(), includes: true, links: Vec::new() }
    }

    /// Separator bytes rendered before the content.
    pub fn prefix(&self) -> &str {
        self.meta.get(meta_keys::PREFIX).map(String::as_str).unwrap_or("")
    }

    /// Separator bytes rendered after the content.
    pub fn suffix(&self) -> &str {
        self.meta.get(meta_keys::SUFFIX).map(String::as_str).unwrap_or("")
    }

    /// `prefix + content + suffix`, the component's contribution when included.
    pub fn rendered(&self) -> String {
        let mut out = String::with_capacity(self.prefix().len() + self.content.len() + self.suffix().len());
        out.push_str(self.prefix());
        out.push_str(&self.content);
        out.push_str(self.suffix());
        out
    }

    fn span_field(&self, key: &str) -> Option<Result<usize, ()>> {
        self.meta.get(key).map(|v| {
            if !v.is_empty() && v.bytes().all(|b| b.is_ascii_digit()) {
                v.parse().map_err(|_| ())
            } else {
                Err(())
            }
        })
    }
}

/// A monolithic response and the components carved out of it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecomposedResponse {
    pub response_id: String,
    pub source_text: String,
    pub profile: Profile,
    pub components: Vec<Component>,
}

impl DecomposedResponse {
    pub fn component(&self, id: &ComponentId) -> Option<&Component> {
        self.components.iter().find(|c| &c.id == id)
    }

    pub fn position(&self, id: &ComponentId) -> Option<usize> {
        self.components.iter().position(|c| &c.id == id)
    }

    /// Canonical JSON encoding (pretty printed, trailing newline).
    pub fn to_canonical_json(&self) -> String {
        let mut out = serde_json::to_string_pretty(self).expect("response serializes");
        out.push('\n');
        out
    }

    pub fn validate(&self) -> ValidationReport {
        validate(self)
    }
}

/// One broken rule, naming the component(s) involved.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "rule")]
pub enum Violation {
    DuplicateId { component: ComponentId },
    EmptyComponent { component: ComponentId },
    UnknownType { component: ComponentId, kind: String },
    LinkSourceMismatch { component: ComponentId, source: ComponentId },
    SelfLink { component: ComponentId },
    DanglingLink { component: ComponentId, target: ComponentId },
    CyclicLinks { components: Vec<ComponentId> },
    InvalidSpan { component: ComponentId },
    SourceMismatch { component: Option<ComponentId> },
}

impl Violation {
    pub fn rule(&self) -> &'static str {
        match self {
            Violation::DuplicateId { .. } => "DuplicateId",
            Violation::EmptyComponent { .. } => "EmptyComponent",
            Violation::UnknownType { .. } => "UnknownType",
            Violation::LinkSourceMismatch { .. } => "LinkSourceMismatch",
            Violation::SelfLink { .. } => "SelfLink",
            Violation::DanglingLink { .. } => "DanglingLink",
            Violation::CyclicLinks { .. } => "CyclicLinks",
            Violation::InvalidSpan { .. } => "InvalidSpan",
            Violation::SourceMismatch { .. } => "SourceMismatch",
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::CyclicLinks { components } => {
                let ids: Vec<&str> = components.iter().map(ComponentId::as_str).collect();
                write!(f, "CyclicLinks([{}])", ids.join(","))
            }
            Violation::UnknownType { component, kind } => write!(f, "UnknownType({component}, {kind:?})"),
            Violation::LinkSourceMismatch { component, source } => {
                write!(f, "LinkSourceMismatch({component}, {source})")
            }
            Violation::DanglingLink { component, target } => write!(f, "DanglingLink({component} -> {target})"),
            Violation::SourceMismatch { component: Some(c) } => write!(f, "SourceMismatch({c})"),
            Violation::SourceMismatch { component: None } => f.write_str("SourceMismatch"),
            Violation::DuplicateId { component }
            | Violation::EmptyComponent { component }
            | Violation::SelfLink { component }
            | Violation::InvalidSpan { component } => write!(f, "{}({component})", self.rule()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub ok: bool,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn has_rule(&self, rule: &str) -> bool {
        self.violations.iter().any(|v| v.rule() == rule)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.ok {
            return f.write_str("ok");
        }
        let parts: Vec<String> = self.violations.iter().map(ToString::to_string).collect();
        f.write_str(&parts.join("; "))
    }
}

/// Check every structural invariant of `response`. Violations are data: this
/// never fails, and the report is empty iff the response is well formed.
pub fn validate(response: &DecomposedResponse) -> ValidationReport {
    let mut violations = Vec::new();
    let mut index: HashMap<&ComponentId, usize> = HashMap::new();

    for (pos, c) in response.components.iter().enumerate() {
        if index.insert(&c.id, pos).is_some() {
            violations.push(Violation::DuplicateId { component: c.id.clone() });
        }
    }

    for c in &response.components {
        if c.content.trim().is_empty() {
            violations.push(Violation::EmptyComponent { component: c.id.clone() });
        }
        if !c.kind.is_registered_in(response.profile) {
            violations.push(Violation::UnknownType { component: c.id.clone(), kind: c.kind.as_str().to_owned() });
        }
        for link in &c.links {
            if link.source != c.id {
                violations.push(Violation::LinkSourceMismatch { component: c.id.clone(), source: link.source.clone() });
            }
            if link.source == link.target {
                violations.push(Violation::SelfLink { component: c.id.clone() });
            } else if !index.contains_key(&link.target) {
                violations.push(Violation::DanglingLink { component: c.id.clone(), target: link.target.clone() });
            }
        }
    }

    for cycle in cyclic_groups(response) {
        violations.push(Violation::CyclicLinks { components: cycle });
    }

    check_spans(response, &mut violations);

    ValidationReport { ok: violations.is_empty(), violations }
}

/// Adjacency by document position: `edges[i]` holds the positions that
/// component `i` links to. Self links and dangling targets are dropped.
fn link_edges(response: &DecomposedResponse) -> Vec<Vec<usize>> {
    let mut index: HashMap<&ComponentId, usize> = HashMap::new();
    for (pos, c) in response.components.iter().enumerate() {
        index.entry(&c.id).or_insert(pos);
    }
    response
        .components
        .iter()
        .enumerate()
        .map(|(pos, c)| c.links.iter().filter_map(|l| index.get(&l.target).copied()).filter(|&t| t != pos).collect())
        .collect()
}

/// Strongly connected components with more than one member, each listed in
/// document order (Tarjan, iterative).
fn cyclic_groups(response: &DecomposedResponse) -> Vec<Vec<ComponentId>> {
    let edges = link_edges(response);
    let n = edges.len();
    let mut order = vec![usize::MAX; n];
    let mut low = vec![0usize; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut counter = 0;
    let mut groups: Vec<Vec<usize>> = Vec::new();

    for root in 0..n {
        if order[root] != usize::MAX {
            continue;
        }
        let mut work: Vec<(usize, usize)> = vec![(root, 0)];
        order[root] = counter;
        low[root] = counter;
        counter += 1;
        stack.push(root);
        on_stack[root] = true;

        while let Some(&mut (node, ref mut next)) = work.last_mut() {
            if let Some(&succ) = edges[node].get(*next) {
                *next += 1;
                if order[succ] == usize::MAX {
                    order[succ] = counter;
                    low[succ] = counter;
                    counter += 1;
                    stack.push(succ);
                    on_stack[succ] = true;
                    work.push((succ, 0));
                } else if on_stack[succ] {
                    low[node] = low[node].min(order[succ]);
                }
                continue;
            }
            work.pop();
            if let Some(&(parent, _)) = work.last() {
                low[parent] = low[parent].min(low[node]);
            }
            if low[node] == order[node] {
                let mut group = Vec::new();
                loop {
                    let member = stack.pop().expect("tarjan stack underflow");
                    on_stack[member] = false;
                    group.push(member);
                    if member == node {
                        break;
                    }
                }
                if group.len() > 1 {
                    group.sort_unstable();
                    groups.push(group);
                }
            }
        }
    }

    groups.sort();
    groups.into_iter().map(|g| g.into_iter().map(|i| response.components[i].id.clone()).collect()).collect()
}

/// When components carry source spans, `prefix + source[span] + suffix` over
/// all components must tile `source_text` exactly.
fn check_spans(response: &DecomposedResponse, violations: &mut Vec<Violation>) {
    use meta_keys::{SPAN_END, SPAN_START};

    let any_spans =
        response.components.iter().any(|c| c.meta.contains_key(SPAN_START) || c.meta.contains_key(SPAN_END));
    if !any_spans {
        return;
    }

    let source = response.source_text.as_str();
    let mut spans = Vec::with_capacity(response.components.len());
    let mut malformed = false;
    for c in &response.components {
        match (c.span_field(SPAN_START), c.span_field(SPAN_END)) {
            (Some(Ok(start)), Some(Ok(end)))
                if start < end
                    && end <= source.len()
                    && source.is_char_boundary(start)
                    && source.is_char_boundary(end) =>
            {
                spans.push((start, end));
            }
            _ => {
                violations.push(Violation::InvalidSpan { component: c.id.clone() });
                malformed = true;
            }
        }
    }
    if malformed {
        return;
    }

    let mut cursor = 0usize;
    for (c, &(start, end)) in response.components.iter().zip(&spans) {
        let prefix = c.prefix();
        if !source[cursor..].starts_with(prefix) || cursor + prefix.len() != start {
            violations.push(Violation::SourceMismatch { component: Some(c.id.clone()) });
            return;
        }
        cursor = end;
        let suffix = c.suffix();
        if !source[cursor..].starts_with(suffix) {
            violations.push(Violation::SourceMismatch { component: Some(c.id.clone()) });
            return;
        }
        cursor += suffix.len();
    }
    if cursor != source.len() {
        violations.push(Violation::SourceMismatch { component: None });
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OrderError {
    #[error("links form a cycle through {0:?}")]
    CyclicLinks(Vec<ComponentId>),
}

/// Orders components so every link target precedes its source, breaking ties
/// by document order. Links to unknown components are ignored.
pub fn topological_order(response: &DecomposedResponse) -> Result<Vec<ComponentId>, OrderError> {
    let edges = link_edges(response);
    let n = edges.len();
    // dependents[t] lists sources that must wait for t.
    let mut dependents = vec![Vec::new(); n];
    let mut pending = vec![0usize; n];
    for (source, targets) in edges.iter().enumerate() {
        for &t in targets {
            dependents[t].push(source);
            pending[source] += 1;
        }
    }

    let mut ready: BinaryHeap<Reverse<usize>> = (0..n).filter(|&i| pending[i] == 0).map(Reverse).collect();
    let mut out = Vec::with_capacity(n);
    while let Some(Reverse(next)) = ready.pop() {
        out.push(response.components[next].id.clone());
        for &d in &dependents[next] {
            pending[d] -= 1;
            if pending[d] == 0 {
                ready.push(Reverse(d));
            }
        }
    }

    if out.len() != n {
        let stuck = (0..n).filter(|&i| pending[i] > 0).map(|i| response.components[i].id.clone()).collect();
        return Err(OrderError::CyclicLinks(stuck));
    }
    Ok(out)
}
