//! Fine-tuning records for kept trajectories.

use crate::qa::QaExample;
use crate::rollout::build_prompt;
use crate::trajectory::{retrieval_mask, Trajectory};
use crate::trajectory::mask::to_char_spans;
use serde::{Deserialize, Serialize};

/// `masked_spans` are code-point offsets into `completion`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SftRecord {
    pub prompt: String,
    pub completion: String,
    pub masked_spans: Vec<[usize; 2]>,
}

impl SftRecord {
    pub fn new(question: &QaExample, traj: &Trajectory) -> Self {
        Self {
            prompt: build_prompt(question),
            completion: traj.raw.clone(),
            masked_spans: to_char_spans(&traj.raw, &retrieval_mask(traj)),
        }
    }
}
