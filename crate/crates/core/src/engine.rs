//! Deterministic decomposition of monolithic text into components.
//!
//! [`parse`] finds line-level blocks and [`segment`] groups them into
//! component-sized spans. A [`Classifier`] then assigns types, after which
//! [`link`] infers `belongs_to` edges. [`decompose`] drives the whole
//! pipeline and validates the exported [`DecomposedResponse`].
//!
//! Every input byte is owned by exactly one component, either as content or
//! as surrounding whitespace, so an untouched response recomposes byte for
//! byte.

use std::ops::Range;
use std::sync::LazyLock;

use regex::Regex;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::component::{
    meta_keys, validate, Component, ComponentId, ComponentType, DecomposedResponse, Link, Meta, Profile,
    ValidationReport,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecomposeError {
    #[error("response is empty or whitespace-only")]
    EmptyResponse,
    #[error("decomposition produced an invalid response: {0}")]
    DecompositionError(ValidationReport),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BlockKind {
    Heading,
    Paragraph,
    List,
    CodeFence,
    Blockquote,
    CitationLine,
    Blank,
}

/// A run of source lines. `prefix + text + suffix` over all blocks, in order,
/// reproduces the parsed input.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    pub kind: BlockKind,
    pub text: String,
    /// Byte range of `text` in the input.
    pub span: Range<usize>,
    /// Leading indentation of the first line.
    pub prefix: String,
    /// Line terminator of the last line.
    pub suffix: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EmailRole {
    Subject,
    Greeting,
    Closing,
    Signature,
}

impl EmailRole {
    pub fn component_type(self) -> &'static str {
        match self {
            EmailRole::Subject => ComponentType::SUBJECT,
            EmailRole::Greeting => ComponentType::GREETING,
            EmailRole::Closing => ComponentType::CLOSING,
            EmailRole::Signature => ComponentType::SIGNATURE,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EmailRole::Subject => "subject",
            EmailRole::Greeting => "greeting",
            EmailRole::Closing => "closing",
            EmailRole::Signature => "signature",
        }
    }
}

/// A contiguous span of the input that becomes one component.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpanGroup {
    /// Kind of the first block in the group.
    pub kind: BlockKind,
    pub span: Range<usize>,
    pub text: String,
    /// Positional email role assigned during segmentation.
    pub role: Option<EmailRole>,
}

/// Output of a [`Classifier`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Classification {
    pub kind: ComponentType,
    pub meta: Meta,
}

/// Assigns a component type and metadata to a span group.
///
/// The rule-based [`RuleClassifier`] is the default; other implementations
/// can layer extra cues on top of the structural ones.
pub trait Classifier: Send + Sync {
    fn classify(&self, group: &SpanGroup, profile: Profile) -> Classification;
}

/// Structural classification rules, first match wins.
#[derive(Debug, Clone, Copy, Default)]
pub struct RuleClassifier;

impl Classifier for RuleClassifier {
    fn classify(&self, group: &SpanGroup, profile: Profile) -> Classification {
        classify(group, profile)
    }
}

// ---------------------------------------------------------------------------
// Parse
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy)]
struct Line<'a> {
    start: usize,
    /// Line text without the terminator.
    text: &'a str,
    terminator_len: usize,
}

impl Line<'_> {
    fn text_end(&self) -> usize {
        self.start + self.text.len()
    }

    fn is_blank(&self) -> bool {
        self.text.trim().is_empty()
    }

    fn indent_len(&self) -> usize {
        self.text.len() - self.text.trim_start_matches([' ', '\t']).len()
    }

    fn body(&self) -> &str {
        &self.text[self.indent_len()..]
    }

    /// Body when indented by at most three spaces.
    fn shallow_body(&self) -> Option<&str> {
        let spaces = self.text.len() - self.text.trim_start_matches(' ').len();
        (spaces <= 3).then(|| &self.text[spaces..])
    }
}

fn split_lines(raw: &str) -> Vec<Line<'_>> {
    let mut lines = Vec::new();
    let mut start = 0;
    while start < raw.len() {
        let (text_end, next) = match raw[start..].find('\n') {
            Some(i) => {
                let nl = start + i;
                let text_end = if nl > start && raw.as_bytes()[nl - 1] == b'\r' { nl - 1 } else { nl };
                (text_end, nl + 1)
            }
            None => (raw.len(), raw.len()),
        };
        lines.push(Line { start, text: &raw[start..text_end], terminator_len: next - text_end });
        start = next;
    }
    lines
}

struct Fence {
    marker: u8,
    len: usize,
}

fn fence_open(line: &Line<'_>) -> Option<Fence> {
    let body = line.shallow_body()?;
    let marker = *body.as_bytes().first()?;
    if marker != b'`' && marker != b'~' {
        return None;
    }
    let len = body.bytes().take_while(|&b| b == marker).count();
    if len < 3 {
        return None;
    }
    if marker == b'`' && body[len..].contains('`') {
        return None;
    }
    Some(Fence { marker, len })
}

fn fence_closes(fence: &Fence, line: &Line<'_>) -> bool {
    let Some(body) = line.shallow_body() else { return false };
    let len = body.bytes().take_while(|&b| b == fence.marker).count();
    len >= fence.len && body[len..].trim().is_empty()
}

/// ATX heading level, if the line is a heading.
fn heading_level(line: &Line<'_>) -> Option<usize> {
    let body = line.shallow_body()?;
    let hashes = body.bytes().take_while(|&b| b == b'#').count();
    if !(1..=6).contains(&hashes) {
        return None;
    }
    match body.as_bytes().get(hashes) {
        None | Some(b' ') | Some(b'\t') => Some(hashes),
        _ => None,
    }
}

fn heading_title(text: &str) -> &str {
    let body = text.trim_start_matches(' ').trim_start_matches('#');
    body.trim().trim_end_matches('#').trim()
}

fn is_blockquote(line: &Line<'_>) -> bool {
    line.shallow_body().is_some_and(|b| b.starts_with('>'))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ListMarker {
    Bullet,
    Ordered,
}

fn list_marker(line: &Line<'_>) -> Option<ListMarker> {
    let body = line.body().as_bytes();
    let followed_by_space = |i: usize| matches!(body.get(i), Some(b' ') | Some(b'\t'));
    match body.first() {
        Some(b'-' | b'*' | b'+') if followed_by_space(1) => Some(ListMarker::Bullet),
        Some(b'0'..=b'9') => {
            let digits = body.iter().take_while(|b| b.is_ascii_digit()).count();
            (digits <= 9 && body.get(digits) == Some(&b'.') && followed_by_space(digits + 1))
                .then_some(ListMarker::Ordered)
        }
        _ => None,
    }
}

fn is_citation(line: &Line<'_>) -> bool {
    let body = line.body();
    let Some(rest) = body.strip_prefix('[') else { return false };
    let digits = rest.bytes().take_while(u8::is_ascii_digit).count();
    digits > 0 && rest[digits..].starts_with(']')
}

/// Lines that start a new block and so end a running paragraph.
fn interrupts(line: &Line<'_>) -> bool {
    line.is_blank()
        || fence_open(line).is_some()
        || heading_level(line).is_some()
        || is_blockquote(line)
        || list_marker(line).is_some()
        || is_citation(line)
}

fn content_block(raw: &str, kind: BlockKind, first: &Line<'_>, last: &Line<'_>) -> Block {
    let start = first.start + first.indent_len();
    let end = last.text_end();
    Block {
        kind,
        text: raw[start..end].to_owned(),
        span: start..end,
        prefix: raw[first.start..start].to_owned(),
        suffix: raw[end..end + last.terminator_len].to_owned(),
    }
}

/// Splits `raw` into a lossless sequence of blocks.
///
/// Blank-line runs become [`BlockKind::Blank`] blocks. Code fence interiors
/// are never split; an unclosed fence runs to the end of the input. Inside a
/// section titled "References" every plain line is a citation.
pub fn parse(raw: &str) -> Result<Vec<Block>, DecomposeError> {
    if raw.trim().is_empty() {
        return Err(DecomposeError::EmptyResponse);
    }

    let lines = split_lines(raw);
    let mut blocks = Vec::new();
    let mut in_references = false;
    let mut i = 0;

    while i < lines.len() {
        let line = &lines[i];

        if line.is_blank() {
            let first = i;
            while i < lines.len() && lines[i].is_blank() {
                i += 1;
            }
            let start = lines[first].start;
            let end = lines[i - 1].text_end() + lines[i - 1].terminator_len;
            blocks.push(Block {
                kind: BlockKind::Blank,
                text: raw[start..end].to_owned(),
                span: start..end,
                prefix: String::new(),
                suffix: String::new(),
            });
            continue;
        }

        if let Some(fence) = fence_open(line) {
            let mut last = i;
            for (j, candidate) in lines.iter().enumerate().skip(i + 1) {
                last = j;
                if fence_closes(&fence, candidate) {
                    break;
                }
            }
            blocks.push(content_block(raw, BlockKind::CodeFence, line, &lines[last]));
            i = last + 1;
            continue;
        }

        if heading_level(line).is_some() {
            in_references = heading_title(line.text).eq_ignore_ascii_case("references");
            blocks.push(content_block(raw, BlockKind::Heading, line, line));
            i += 1;
            continue;
        }

        if is_blockquote(line) {
            let mut last = i;
            while last + 1 < lines.len() && is_blockquote(&lines[last + 1]) {
                last += 1;
            }
            blocks.push(content_block(raw, BlockKind::Blockquote, line, &lines[last]));
            i = last + 1;
            continue;
        }

        if list_marker(line).is_some() {
            let mut last = i;
            while last + 1 < lines.len() && !interrupts(&lines[last + 1]) {
                last += 1;
            }
            blocks.push(content_block(raw, BlockKind::List, line, &lines[last]));
            i = last + 1;
            continue;
        }

        if in_references || is_citation(line) {
            blocks.push(content_block(raw, BlockKind::CitationLine, line, line));
            i += 1;
            continue;
        }

        let mut last = i;
        while last + 1 < lines.len() && !interrupts(&lines[last + 1]) {
            last += 1;
        }
        blocks.push(content_block(raw, BlockKind::Paragraph, line, &lines[last]));
        i = last + 1;
    }

    Ok(blocks)
}

// ---------------------------------------------------------------------------
// Segment
// ---------------------------------------------------------------------------

static SUBJECT_TAG: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^(?i:subject):[ \t]*").unwrap());
static SALUTATION: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^(Hi|Hello|Dear)\b[^\n]*,[ \t]*$").unwrap());
static CLOSING: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^(Best|Regards|Sincerely|Thanks)\b[\p{L} ]{0,30},?[ \t]*$").unwrap());

const SIGNATURE_MAX_LINES: usize = 4;
const SIGNATURE_MAX_WIDTH: usize = 60;

fn group(raw: &str, kind: BlockKind, span: Range<usize>, role: Option<EmailRole>) -> SpanGroup {
    SpanGroup { kind, text: raw[span.clone()].to_owned(), span, role }
}

/// Groups blocks into component spans.
///
/// Adjacent list items (blank lines between them allowed) merge into one
/// group; blank blocks never form a group. Under the email profile the
/// framing lines of a letter, such as the subject or sign-off, each get their
/// own group.
pub fn segment(raw: &str, blocks: &[Block], profile: Profile) -> Vec<SpanGroup> {
    let mut groups: Vec<SpanGroup> = Vec::new();
    let mut last_was_list = false;
    for block in blocks {
        match block.kind {
            BlockKind::Blank => continue,
            BlockKind::List if last_was_list => {
                let prev = groups.last_mut().expect("list run has a group");
                prev.span.end = block.span.end;
                prev.text = raw[prev.span.clone()].to_owned();
            }
            kind => groups.push(group(raw, kind, block.span.clone(), None)),
        }
        last_was_list = block.kind == BlockKind::List;
    }

    if profile == Profile::Email {
        groups = split_email(raw, groups);
    }
    groups
}

/// Line ranges (terminator excluded) inside `span`.
fn lines_in(raw: &str, span: &Range<usize>) -> Vec<Range<usize>> {
    split_lines(&raw[span.clone()]).into_iter().map(|l| span.start + l.start..span.start + l.text_end()).collect()
}

/// Splits the first line off `g`. Returns the line's range and the remainder
/// group, if any lines are left.
fn split_first_line(raw: &str, g: &SpanGroup) -> (Range<usize>, Option<SpanGroup>) {
    let lines = lines_in(raw, &g.span);
    let first = lines[0].clone();
    let rest = lines[1..]
        .iter()
        .find(|l| !raw[(*l).clone()].trim().is_empty())
        .map(|l| group(raw, g.kind, l.start + leading_ws(&raw[l.clone()])..g.span.end, None));
    (first, rest)
}

fn leading_ws(s: &str) -> usize {
    s.len() - s.trim_start_matches([' ', '\t']).len()
}

fn split_email(raw: &str, groups: Vec<SpanGroup>) -> Vec<SpanGroup> {
    let mut out: Vec<SpanGroup> = Vec::new();
    let mut queue: std::collections::VecDeque<SpanGroup> = groups.into();

    if let Some(first) = queue.pop_front() {
        let (line, rest) = split_first_line(raw, &first);
        let tag_len = SUBJECT_TAG.find(&raw[line.clone()]).map(|m| m.end());
        match tag_len {
            Some(tag) if first.kind == BlockKind::Paragraph && !raw[line.start + tag..line.end].trim().is_empty() => {
                out.push(group(raw, BlockKind::Paragraph, line.start + tag..line.end, Some(EmailRole::Subject)));
                if let Some(rest) = rest {
                    queue.push_front(rest);
                }
            }
            _ => queue.push_front(first),
        }
    }

    if let Some(next) = queue.pop_front() {
        let (line, rest) = split_first_line(raw, &next);
        if next.kind == BlockKind::Paragraph && SALUTATION.is_match(&raw[line.clone()]) {
            out.push(group(raw, BlockKind::Paragraph, line, Some(EmailRole::Greeting)));
            if let Some(rest) = rest {
                queue.push_front(rest);
            }
        } else {
            queue.push_front(next);
        }
    }

    let mut body: Vec<SpanGroup> = queue.into();
    split_closing(raw, &mut body);
    out.extend(body);
    out
}

/// Finds the last closing line that is followed only by a short signature
/// and splits the body groups around it.
fn split_closing(raw: &str, body: &mut Vec<SpanGroup>) {
    // Only trailing paragraph groups can hold a closing and signature.
    let tail_start = body.iter().rposition(|g| g.kind != BlockKind::Paragraph).map_or(0, |p| p + 1);

    let mut after: Vec<Range<usize>> = Vec::new();
    for gi in (tail_start..body.len()).rev() {
        let lines: Vec<Range<usize>> =
            lines_in(raw, &body[gi].span).into_iter().filter(|l| !raw[l.clone()].trim().is_empty()).collect();
        for (li, line) in lines.iter().enumerate().rev() {
            let text = raw[line.clone()].trim_start_matches([' ', '\t']);
            if CLOSING.is_match(text) {
                let closing_start = line.start + leading_ws(&raw[line.clone()]);
                let g = body[gi].clone();
                let mut replacement = Vec::new();
                if li > 0 {
                    replacement.push(group(raw, g.kind, g.span.start..lines[li - 1].end, None));
                }
                replacement.push(group(raw, g.kind, closing_start..line.end, Some(EmailRole::Closing)));
                if let Some(first_sig) = after.last() {
                    let sig_start = first_sig.start + leading_ws(&raw[first_sig.clone()]);
                    let sig_end = body.last().expect("non-empty body").span.end;
                    replacement.push(group(raw, BlockKind::Paragraph, sig_start..sig_end, Some(EmailRole::Signature)));
                }
                body.splice(gi.., replacement);
                return;
            }
            after.push(line.clone());
            let too_wide = raw[line.clone()].trim().chars().count() > SIGNATURE_MAX_WIDTH;
            if after.len() > SIGNATURE_MAX_LINES || too_wide {
                return;
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Classify
// ---------------------------------------------------------------------------

/// Rule-based classification. Email roles come first under the email
/// profile; otherwise the block structure decides and anything unrecognized
/// is a Paragraph.
pub fn classify(group: &SpanGroup, profile: Profile) -> Classification {
    let mut meta = Meta::new();
    if profile == Profile::Email {
        if let Some(role) = group.role {
            meta.insert(meta_keys::ROLE.into(), role.as_str().into());
            return Classification { kind: ComponentType::new(role.component_type()), meta };
        }
    }

    let kind = match group.kind {
        BlockKind::Heading => {
            let level = group.text.bytes().take_while(|&b| b == b'#').count();
            meta.insert(meta_keys::LEVEL.into(), level.to_string());
            ComponentType::HEADING
        }
        BlockKind::CodeFence => {
            let info = group.text.lines().next().unwrap_or("").trim_start_matches(['`', '~']).trim();
            if !info.is_empty() {
                meta.insert(meta_keys::STYLE.into(), info.to_owned());
            }
            ComponentType::CODE
        }
        BlockKind::List => {
            let ordered = group.text.as_bytes().first().is_some_and(u8::is_ascii_digit);
            meta.insert(meta_keys::STYLE.into(), if ordered { "ordered" } else { "bullet" }.into());
            ComponentType::LIST
        }
        BlockKind::CitationLine => ComponentType::CITATION,
        BlockKind::Blockquote => {
            meta.insert(meta_keys::STYLE.into(), "quote".into());
            ComponentType::PARAGRAPH
        }
        BlockKind::Paragraph | BlockKind::Blank => ComponentType::PARAGRAPH,
    };
    Classification { kind: ComponentType::new(kind), meta }
}

// ---------------------------------------------------------------------------
// Link
// ---------------------------------------------------------------------------

fn heading_rank(c: &Component) -> Option<u32> {
    (c.kind.as_str() == ComponentType::HEADING)
        .then(|| c.meta.get(meta_keys::LEVEL).and_then(|l| l.parse().ok()).unwrap_or(1))
}

/// Infers `belongs_to` edges.
///
/// Document profile: each non-heading component belongs to the nearest
/// preceding heading whose level equals the smallest level seen so far.
/// Email profile: each Paragraph belongs to the Subject, if there is one.
pub fn link(components: &[Component], profile: Profile) -> Vec<Link> {
    let mut links = Vec::new();
    match profile {
        Profile::Document => {
            let mut top_level: Option<u32> = None;
            let mut anchor: Option<&ComponentId> = None;
            for c in components {
                if let Some(level) = heading_rank(c) {
                    if top_level.is_none_or(|top| level <= top) {
                        top_level = Some(level);
                        anchor = Some(&c.id);
                    }
                } else if let Some(anchor) = anchor {
                    links.push(Link::belongs_to(c.id.clone(), anchor.clone()));
                }
            }
        }
        Profile::Email => {
            let subject = components.iter().find(|c| c.kind.as_str() == ComponentType::SUBJECT);
            if let Some(subject) = subject {
                links.extend(
                    components
                        .iter()
                        .filter(|c| c.kind.as_str() == ComponentType::PARAGRAPH)
                        .map(|c| Link::belongs_to(c.id.clone(), subject.id.clone())),
                );
            }
        }
    }
    links
}

// ---------------------------------------------------------------------------
// Export
// ---------------------------------------------------------------------------

/// Deterministic response id derived from profile and text.
pub fn response_id_for(raw: &str, profile: Profile) -> String {
    let mut hasher = Sha256::new();
    hasher.update(profile.as_str().as_bytes());
    hasher.update([0u8]);
    hasher.update(raw.as_bytes());
    let digest = hasher.finalize();
    format!("r-{}", hex::encode(&digest[..8]))
}

/// Builds components from groups without validating them. Inter-group bytes
/// go to the following component's prefix; trailing bytes go to the last
/// component's suffix.
pub fn build(raw: &str, groups: &[SpanGroup], profile: Profile, classifier: &dyn Classifier) -> DecomposedResponse {
    let mut components = Vec::with_capacity(groups.len());
    let mut cursor = 0;
    for (i, g) in groups.iter().enumerate() {
        let Classification { kind, mut meta } = classifier.classify(g, profile);
        meta.insert(meta_keys::SPAN_START.into(), g.span.start.to_string());
        meta.insert(meta_keys::SPAN_END.into(), g.span.end.to_string());
        let prefix = &raw[cursor..g.span.start];
        if !prefix.is_empty() {
            meta.insert(meta_keys::PREFIX.into(), prefix.to_owned());
        }
        if i + 1 == groups.len() && g.span.end < raw.len() {
            meta.insert(meta_keys::SUFFIX.into(), raw[g.span.end..].to_owned());
        }
        cursor = g.span.end;
        components.push(Component {
            id: ComponentId::from_ordinal(i + 1),
            kind,
            content: g.text.clone(),
            meta,
            includes: true,
            links: Vec::new(),
        });
    }

    for l in link(&components, profile) {
        let pos = components.iter().position(|c| c.id == l.source).expect("link source exists");
        components[pos].links.push(l);
    }

    DecomposedResponse { response_id: response_id_for(raw, profile), source_text: raw.to_owned(), profile, components }
}

/// Stage-level access to the pipeline, used by the agent to report progress.
pub struct Pipeline<'a> {
    classifier: &'a dyn Classifier,
}

impl<'a> Pipeline<'a> {
    pub fn new(classifier: &'a dyn Classifier) -> Self {
        Pipeline { classifier }
    }

    pub fn parse(&self, raw: &str) -> Result<Vec<Block>, DecomposeError> {
        parse(raw)
    }

    /// The full pipeline minus the final validation pass.
    pub fn decompose_blocks(&self, raw: &str, blocks: &[Block], profile: Profile) -> DecomposedResponse {
        let groups = segment(raw, blocks, profile);
        build(raw, &groups, profile, self.classifier)
    }

    pub fn validate(&self, response: DecomposedResponse) -> Result<DecomposedResponse, DecomposeError> {
        let report = validate(&response);
        if report.ok {
            Ok(response)
        } else {
            Err(DecomposeError::DecompositionError(report))
        }
    }

    pub fn run(&self, raw: &str, profile: Profile) -> Result<DecomposedResponse, DecomposeError> {
        let blocks = self.parse(raw)?;
        let response = self.decompose_blocks(raw, &blocks, profile);
        self.validate(response)
    }
}

/// Decomposes `raw` with the default rule classifier.
pub fn decompose(raw: &str, profile: Profile) -> Result<DecomposedResponse, DecomposeError> {
    Pipeline::new(&RuleClassifier).run(raw, profile)
}

pub fn decompose_with(
    raw: &str,
    profile: Profile,
    classifier: &dyn Classifier,
) -> Result<DecomposedResponse, DecomposeError> {
    Pipeline::new(classifier).run(raw, profile)
}
