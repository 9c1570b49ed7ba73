//! Spans of environment-injected text, excluded from the policy loss.

use super::{Span, Trajectory};
use serde::{Deserialize, Serialize};

/// Record of the mask file: `{"id", "masked_spans": [[start, end], ...]}`
/// with code-point offsets into the trajectory text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskRecord {
    pub id: String,
    pub masked_spans: Vec<[usize; 2]>,
}

/// Block spans (delimiters included) of every information block, sorted
/// and disjoint. Byte offsets.
pub fn retrieval_mask(traj: &Trajectory) -> Vec<Span> {
    traj.steps
        .iter()
        .filter(|s| s.tag.is_information())
        .map(|s| s.block_span)
        .collect()
}

/// Converts byte spans of `text` into code-point spans.
pub fn to_char_spans(text: &str, spans: &[Span]) -> Vec<[usize; 2]> {
    let char_at = |byte: usize| text[..byte].chars().count();
    spans.iter().map(|s| [char_at(s.start), char_at(s.end)]).collect()
}

impl MaskRecord {
    pub fn from_trajectory(traj: &Trajectory) -> Self {
        Self {
            id: traj.question_id.clone(),
            masked_spans: to_char_spans(&traj.raw, &retrieval_mask(traj)),
        }
    }
}
