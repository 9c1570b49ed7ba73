//! Tag-structured reasoning trajectories.
//!
//! A trajectory is a sequence of `<tag>content</tag>` blocks drawn from a
//! closed vocabulary. Action blocks (`think`, `plan`, the three searches and
//! `answer`) are written by the policy; information blocks are injected by
//! the environment and are opaque to the parser.
//!
//! Offsets in [`Span`] are byte offsets into [`Trajectory::raw`]; see
//! [`mask::to_char_spans`] for the code-point view written to mask files.

mod format;
pub mod mask;

pub use format::{check_format, validate_format, FormatReport, Violation, ViolationCode};
pub use mask::{retrieval_mask, MaskRecord};

use crate::text::normalize;
use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tag {
    Think,
    Plan,
    RelationSearch,
    RelationInformation,
    NeighborSearch,
    NeighborInformation,
    WebSearch,
    WebInformation,
    Answer,
}

impl Tag {
    pub const ALL: [Tag; 9] = [
        Tag::Think,
        Tag::Plan,
        Tag::RelationSearch,
        Tag::RelationInformation,
        Tag::NeighborSearch,
        Tag::NeighborInformation,
        Tag::WebSearch,
        Tag::WebInformation,
        Tag::Answer,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Tag::Think => "think",
            Tag::Plan => "plan",
            Tag::RelationSearch => "relation_search",
            Tag::RelationInformation => "relation_information",
            Tag::NeighborSearch => "neighbor_search",
            Tag::NeighborInformation => "neighbor_information",
            Tag::WebSearch => "web_search",
            Tag::WebInformation => "web_information",
            Tag::Answer => "answer",
        }
    }

    pub fn from_name(name: &str) -> Option<Tag> {
        Tag::ALL.into_iter().find(|t| t.name() == name)
    }

    pub fn is_search(self) -> bool {
        matches!(self, Tag::RelationSearch | Tag::NeighborSearch | Tag::WebSearch)
    }

    pub fn is_information(self) -> bool {
        matches!(
            self,
            Tag::RelationInformation | Tag::NeighborInformation | Tag::WebInformation
        )
    }

    /// The information tag a search is answered with.
    pub fn information_for(self) -> Option<Tag> {
        match self {
            Tag::RelationSearch => Some(Tag::RelationInformation),
            Tag::NeighborSearch => Some(Tag::NeighborInformation),
            Tag::WebSearch => Some(Tag::WebInformation),
            _ => None,
        }
    }

    /// The search tag an information block answers.
    pub fn search_for(self) -> Option<Tag> {
        match self {
            Tag::RelationInformation => Some(Tag::RelationSearch),
            Tag::NeighborInformation => Some(Tag::NeighborSearch),
            Tag::WebInformation => Some(Tag::WebSearch),
            _ => None,
        }
    }

    pub fn open(self) -> String {
        format!("<{}>", self.name())
    }

    pub fn close(self) -> String {
        format!("</{}>", self.name())
    }

    /// `<tag>content</tag>`
    pub fn wrap(self, content: &str) -> String {
        format!("<{0}>{1}</{0}>", self.name(), content)
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Half-open byte range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Self { start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }

    pub fn contains(&self, offset: usize) -> bool {
        self.start <= offset && offset < self.end
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Step {
    pub tag: Tag,
    pub content: String,
    /// Content only, delimiters excluded.
    pub span: Span,
    /// Content plus delimiters. Equal to `span` for implicit think steps.
    pub block_span: Span,
    /// Untagged text treated as thinking.
    pub implicit: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trajectory {
    pub question_id: String,
    pub steps: Vec<Step>,
    pub raw: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("unknown tag <{name}> at offset {offset}: only the defined labels may appear in a trajectory")]
    UnknownTag { name: String, offset: usize },
    #[error("unclosed <{tag}> opened at offset {offset}")]
    Unclosed { tag: Tag, offset: usize },
    #[error("<{inner}> nested inside <{outer}> at offset {offset}")]
    Nested { outer: Tag, inner: Tag, offset: usize },
    #[error("closing </{tag}> without an opening tag at offset {offset}")]
    StrayClose { tag: Tag, offset: usize },
    #[error("untagged text at offset {offset}")]
    StrayText { offset: usize },
}

impl ParseError {
    pub fn offset(&self) -> usize {
        match self {
            ParseError::UnknownTag { offset, .. }
            | ParseError::Unclosed { offset, .. }
            | ParseError::Nested { offset, .. }
            | ParseError::StrayClose { offset, .. }
            | ParseError::StrayText { offset } => *offset,
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ParseOptions {
    /// Reject untagged text instead of keeping it as implicit thinking.
    pub strict: bool,
}

/// A `<name>` or `</name>` token found in the text.
struct TagToken<'a> {
    name: &'a str,
    closing: bool,
    start: usize,
    end: usize,
}

/// Finds the next tag-shaped token (`<ident>` or `</ident>`) at or after `from`.
fn next_token(text: &str, from: usize) -> Option<TagToken<'_>> {
    let bytes = text.as_bytes();
    let mut i = from;
    while let Some(rel) = text[i..].find('<') {
        let start = i + rel;
        let mut j = start + 1;
        let closing = bytes.get(j) == Some(&b'/');
        if closing {
            j += 1;
        }
        let name_start = j;
        if bytes.get(j).is_some_and(|b| b.is_ascii_alphabetic()) {
            while bytes
                .get(j)
                .is_some_and(|b| b.is_ascii_alphanumeric() || *b == b'_')
            {
                j += 1;
            }
            if bytes.get(j) == Some(&b'>') {
                return Some(TagToken {
                    name: &text[name_start..j],
                    closing,
                    start,
                    end: j + 1,
                });
            }
        }
        i = start + 1;
    }
    None
}

fn known(token: &TagToken<'_>) -> Result<Tag, ParseError> {
    Tag::from_name(token.name).ok_or_else(|| ParseError::UnknownTag {
        name: token.name.to_string(),
        offset: token.start,
    })
}

fn push_gap(
    text: &str,
    from: usize,
    to: usize,
    opts: ParseOptions,
    steps: &mut Vec<Step>,
) -> Result<(), ParseError> {
    let gap = &text[from..to];
    let trimmed = gap.trim();
    if trimmed.is_empty() {
        return Ok(());
    }
    let start = from + (gap.len() - gap.trim_start().len());
    if opts.strict {
        return Err(ParseError::StrayText { offset: start });
    }
    let span = Span::new(start, start + trimmed.len());
    steps.push(Step {
        tag: Tag::Think,
        content: trimmed.to_string(),
        span,
        block_span: span,
        implicit: true,
    });
    Ok(())
}

/// Parses with the default (lenient) options.
pub fn parse_trajectory(text: &str, question_id: &str) -> Result<Trajectory, ParseError> {
    parse_trajectory_with(text, question_id, ParseOptions::default())
}

pub fn parse_trajectory_with(
    text: &str,
    question_id: &str,
    opts: ParseOptions,
) -> Result<Trajectory, ParseError> {
    let mut steps = Vec::new();
    let mut pos = 0;
    while let Some(open) = next_token(text, pos) {
        let tag = known(&open)?;
        if open.closing {
            return Err(ParseError::StrayClose {
                tag,
                offset: open.start,
            });
        }
        push_gap(text, pos, open.start, opts, &mut steps)?;

        let close = tag.close();
        let content_start = open.end;
        let content_end = if tag.is_information() {
            // injected text is opaque up to its own closing delimiter
            text[content_start..]
                .find(&close)
                .map(|rel| content_start + rel)
                .ok_or(ParseError::Unclosed {
                    tag,
                    offset: open.start,
                })?
        } else {
            let inner = next_token(text, content_start).ok_or(ParseError::Unclosed {
                tag,
                offset: open.start,
            })?;
            let inner_tag = known(&inner)?;
            if inner_tag != tag || !inner.closing {
                return Err(if inner.closing {
                    ParseError::Unclosed {
                        tag,
                        offset: open.start,
                    }
                } else {
                    ParseError::Nested {
                        outer: tag,
                        inner: inner_tag,
                        offset: inner.start,
                    }
                });
            }
            inner.start
        };
        let block_end = content_end + close.len();
        steps.push(Step {
            tag,
            content: text[content_start..content_end].to_string(),
            span: Span::new(content_start, content_end),
            block_span: Span::new(open.start, block_end),
            implicit: false,
        });
        pos = block_end;
    }
    push_gap(text, pos, text.len(), opts, &mut steps)?;
    Ok(Trajectory {
        question_id: question_id.to_string(),
        steps,
        raw: text.to_string(),
    })
}

/// Deterministic serialization: one block per line.
pub fn render_trajectory(traj: &Trajectory) -> String {
    render_steps(traj.steps.iter().map(|s| (s.tag, s.content.as_str())))
}

pub fn render_steps<'a>(steps: impl IntoIterator<Item = (Tag, &'a str)>) -> String {
    steps
        .into_iter()
        .map(|(tag, content)| tag.wrap(content))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Splits answer content on `;` or `|`, normalizes, drops empties and
/// duplicates (first occurrence wins).
pub fn parse_answer_list(content: &str) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for piece in content.split([';', '|']) {
        let n = normalize(piece);
        if !n.is_empty() && !out.contains(&n) {
            out.push(n);
        }
    }
    out
}

/// Line of the trajectory file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub id: String,
    pub text: String,
}

impl TrajectoryRecord {
    pub fn parse(&self, opts: ParseOptions) -> Result<Trajectory, ParseError> {
        parse_trajectory_with(&self.text, &self.id, opts)
    }
}

impl From<&Trajectory> for TrajectoryRecord {
    fn from(traj: &Trajectory) -> Self {
        Self {
            id: traj.question_id.clone(),
            text: traj.raw.clone(),
        }
    }
}

impl Trajectory {
    /// Builds a trajectory by rendering `(tag, content)` pairs and parsing the result.
    pub fn from_steps<'a>(
        question_id: &str,
        steps: impl IntoIterator<Item = (Tag, &'a str)>,
    ) -> Result<Self, ParseError> {
        parse_trajectory(&render_steps(steps), question_id)
    }

    /// Tag-and-content equality, ignoring offsets and whitespace between blocks.
    pub fn same_steps(&self, other: &Trajectory) -> bool {
        self.steps.len() == other.steps.len()
            && self
                .steps
                .iter()
                .zip(&other.steps)
                .all(|(a, b)| a.tag == b.tag && a.content == b.content)
    }

    pub fn tags(&self) -> Vec<Tag> {
        self.steps.iter().map(|s| s.tag).collect()
    }

    pub fn count(&self, tag: Tag) -> usize {
        self.steps.iter().filter(|s| s.tag == tag).count()
    }

    pub fn contents(&self, tag: Tag) -> impl Iterator<Item = &str> {
        self.steps
            .iter()
            .filter(move |s| s.tag == tag)
            .map(|s| s.content.as_str())
    }

    /// Content of the first plan block.
    pub fn plan_text(&self) -> Option<&str> {
        self.contents(Tag::Plan).next()
    }

    /// Normalized predictions from the last answer block, in emitted order.
    pub fn answer_list(&self) -> Vec<String> {
        self.contents(Tag::Answer)
            .last()
            .map(parse_answer_list)
            .unwrap_or_default()
    }

    pub fn uses_web(&self) -> bool {
        self.count(Tag::WebSearch) > 0
    }

    /// Number of search blocks of any kind.
    pub fn tool_calls(&self) -> usize {
        self.steps.iter().filter(|s| s.tag.is_search()).count()
    }
}
