//! Group-relative advantages: rewards of the rollouts for one question are
//! standardized against their own mean and population standard deviation.

use super::RewardError;
use crate::qa::base_id;
use serde::{Deserialize, Serialize};

pub const ADVANTAGE_EPS: f64 = 1e-8;
pub const DEFAULT_GROUP_SIZE: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdvantageGroup {
    pub rewards: Vec<f64>,
    pub advantages: Vec<f64>,
    pub group_size: usize,
}

impl AdvantageGroup {
    pub fn new(rewards: Vec<f64>) -> Result<Self, RewardError> {
        let advantages = group_advantages(&rewards)?;
        let group_size = rewards.len();
        Ok(Self {
            rewards,
            advantages,
            group_size,
        })
    }
}

/// `(r - mean) / (std + eps)`; all-equal rewards give all zeros.
pub fn group_advantages(rewards: &[f64]) -> Result<Vec<f64>, RewardError> {
    if rewards.is_empty() {
        return Err(RewardError::EmptyGroup);
    }
    let first = rewards[0];
    if rewards.iter().all(|&r| r == first) {
        return Ok(vec![0.0; rewards.len()]);
    }
    let n = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / n;
    let var = rewards.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
    let denom = var.sqrt() + ADVANTAGE_EPS;
    Ok(rewards.iter().map(|r| (r - mean) / denom).collect())
}

/// Line of the advantage file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdvantageRecord {
    pub id: String,
    pub group: Vec<String>,
    pub rewards: Vec<f64>,
    pub advantages: Vec<f64>,
}

/// Groups `(trajectory id, reward)` pairs by question (the id before any
/// `#k` suffix, in first-seen order) and splits each question's rollouts
/// into chunks of `group_size`.
pub fn group_records(
    scored: &[(String, f64)],
    group_size: usize,
) -> Result<Vec<AdvantageRecord>, RewardError> {
    let group_size = group_size.max(1);
    let mut order: Vec<&str> = Vec::new();
    let mut by_question: std::collections::HashMap<&str, Vec<(String, f64)>> =
        std::collections::HashMap::new();
    for (id, r) in scored {
        let q = base_id(id);
        if !by_question.contains_key(q) {
            order.push(q);
        }
        by_question.entry(q).or_default().push((id.clone(), *r));
    }
    let mut out = Vec::new();
    for q in order {
        for chunk in by_question[q].chunks(group_size) {
            if chunk.len() < group_size {
                log::warn!(
                    "question {q}: group of {} rollouts is smaller than the group size {group_size}",
                    chunk.len()
                );
            }
            let rewards: Vec<f64> = chunk.iter().map(|(_, r)| *r).collect();
            out.push(AdvantageRecord {
                id: q.to_string(),
                group: chunk.iter().map(|(id, _)| id.clone()).collect(),
                advantages: group_advantages(&rewards)?,
                rewards,
            });
        }
    }
    Ok(out)
}
