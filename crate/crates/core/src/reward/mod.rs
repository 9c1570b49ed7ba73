//! Multi-part rewards for a finished trajectory.
//!
//! | reward  | meaning |
//! |---------|---------|
//! | `r_ans` | F1 between predicted and gold answer sets |
//! | `R_acc` | `max(0.1, r_ans)` when the format is valid, else 0 |
//! | `R_graph` | 1 iff every gold answer occurs in the concatenated neighbor information |
//! | `R_web` | same test over the concatenated web information |
//! | `R_over` | accuracy, else penalty, else retrieval shaping, else 0 |

mod advantage;

pub use advantage::{group_advantages, group_records, AdvantageGroup, AdvantageRecord, ADVANTAGE_EPS, DEFAULT_GROUP_SIZE};

use crate::kg::Coverage;
use crate::qa::AliasSet;
use crate::text::normalize;
use crate::trajectory::{parse_trajectory, validate_format, Tag, Trajectory};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use thiserror::Error;

/// Floor of the accuracy reward for well-formed trajectories, and the
/// retrieval shaping bonus.
pub const FORMAT_FLOOR: f64 = 0.1;
/// Penalty for using the web when the graph was complete, or not using it
/// when it was not.
pub const RETRIEVAL_PENALTY: f64 = -0.1;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RewardError {
    #[error("no coverage label for question {0}; supply the removal log")]
    MissingCoverage(String),
    #[error("cannot compute advantages of an empty group")]
    EmptyGroup,
}

fn normalized_golds(gold: &[AliasSet]) -> Vec<BTreeSet<String>> {
    gold.iter()
        .map(|aliases| aliases.iter().map(|a| normalize(a)).filter(|a| !a.is_empty()).collect())
        .collect()
}

/// Set F1 where a prediction matches a gold answer if it equals any of its
/// aliases after normalization.
pub fn answer_f1(pred: &BTreeSet<String>, gold: &[AliasSet]) -> f64 {
    let pred: BTreeSet<String> = pred.iter().map(|p| normalize(p)).filter(|p| !p.is_empty()).collect();
    if pred.is_empty() || gold.is_empty() {
        return 0.0;
    }
    let golds = normalized_golds(gold);
    let matched_pred = pred
        .iter()
        .filter(|p| golds.iter().any(|g| g.contains(*p)))
        .count();
    let matched_gold = golds
        .iter()
        .filter(|g| g.iter().any(|a| pred.contains(a)))
        .count();
    let precision = matched_pred as f64 / pred.len() as f64;
    let recall = matched_gold as f64 / golds.len() as f64;
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// `(format_ok, r_ans, R_acc)`
pub fn accuracy_reward(traj: &Trajectory, gold: &[AliasSet]) -> (bool, f64, f64) {
    let format_ok = validate_format(traj).valid;
    let pred: BTreeSet<String> = traj.answer_list().into_iter().collect();
    let r_ans = answer_f1(&pred, gold);
    (format_ok, r_ans, accuracy_from(format_ok, r_ans))
}

fn accuracy_from(format_ok: bool, r_ans: f64) -> f64 {
    if format_ok {
        r_ans.max(FORMAT_FLOOR)
    } else {
        0.0
    }
}

/// Concatenation of every block of `tag`, in order.
pub fn concatenated(traj: &Trajectory, tag: Tag) -> String {
    traj.contents(tag).collect::<Vec<_>>().join("\n")
}

/// 1 iff every gold answer has an alias occurring in `observed`.
pub fn all_golds_present(observed: &str, gold: &[AliasSet]) -> u8 {
    if gold.is_empty() {
        return 0;
    }
    let hay = normalize(observed);
    let hit = normalized_golds(gold)
        .iter()
        .all(|aliases| aliases.iter().any(|a| hay.contains(a.as_str())));
    u8::from(hit)
}

pub fn graph_reward(traj: &Trajectory, gold: &[AliasSet]) -> u8 {
    all_golds_present(&concatenated(traj, Tag::NeighborInformation), gold)
}

pub fn web_reward(traj: &Trajectory, gold: &[AliasSet]) -> u8 {
    all_golds_present(&concatenated(traj, Tag::WebInformation), gold)
}

/// Cases are tried in order: accuracy, penalty, shaping, zero.
pub fn overall_reward(r_acc: f64, r_graph: u8, r_web: u8, coverage: Coverage) -> f64 {
    if r_acc > 0.0 {
        return r_acc;
    }
    let penalized = match coverage {
        Coverage::Ckg => r_web > 0,
        Coverage::Ikg => r_web == 0,
    };
    if penalized {
        RETRIEVAL_PENALTY
    } else if r_graph > 0 || r_web > 0 {
        FORMAT_FLOOR
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub format_ok: bool,
    pub r_ans: f64,
    #[serde(rename = "R_acc")]
    pub r_acc: f64,
    #[serde(rename = "R_graph")]
    pub r_graph: u8,
    #[serde(rename = "R_web")]
    pub r_web: u8,
    #[serde(rename = "R_over")]
    pub r_over: f64,
    #[serde(skip)]
    pub o_graph: String,
    #[serde(skip)]
    pub o_web: String,
}

/// Full breakdown for a parsed trajectory.
pub fn score_trajectory(
    traj: &Trajectory,
    gold: &[AliasSet],
    coverage: Option<Coverage>,
) -> Result<RewardBreakdown, RewardError> {
    let coverage = coverage.ok_or_else(|| RewardError::MissingCoverage(traj.question_id.clone()))?;
    let (format_ok, r_ans, r_acc) = accuracy_reward(traj, gold);
    let o_graph = concatenated(traj, Tag::NeighborInformation);
    let o_web = concatenated(traj, Tag::WebInformation);
    let r_graph = all_golds_present(&o_graph, gold);
    let r_web = all_golds_present(&o_web, gold);
    Ok(RewardBreakdown {
        format_ok,
        r_ans,
        r_acc,
        r_graph,
        r_web,
        r_over: overall_reward(r_acc, r_graph, r_web, coverage),
        o_graph,
        o_web,
    })
}

/// Scores raw text. Text that does not parse has an invalid format and no
/// retrieved evidence.
pub fn score_text(
    id: &str,
    text: &str,
    gold: &[AliasSet],
    coverage: Option<Coverage>,
) -> Result<RewardBreakdown, RewardError> {
    match parse_trajectory(text, id) {
        Ok(traj) => score_trajectory(&traj, gold, coverage),
        Err(_) => {
            let coverage = coverage.ok_or_else(|| RewardError::MissingCoverage(id.to_string()))?;
            Ok(RewardBreakdown {
                format_ok: false,
                r_ans: 0.0,
                r_acc: 0.0,
                r_graph: 0,
                r_web: 0,
                r_over: overall_reward(0.0, 0, 0, coverage),
                o_graph: String::new(),
                o_web: String::new(),
            })
        }
    }
}

/// Line of the score file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub id: String,
    #[serde(flatten)]
    pub breakdown: RewardBreakdown,
    pub coverage: Coverage,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gold(sets: &[&[&str]]) -> Vec<AliasSet> {
        sets.iter().map(|s| s.iter().map(|a| a.to_string()).collect()).collect()
    }

    fn pred(items: &[&str]) -> BTreeSet<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    fn traj(text: &str) -> Trajectory {
        parse_trajectory(text, "q").unwrap()
    }

    #[test]
    fn f1_examples() {
        assert_eq!(answer_f1(&pred(&["iran"]), &gold(&[&["Iran", "Islamic Republic of Iran"]])), 1.0);
        assert_eq!(answer_f1(&pred(&[]), &gold(&[&["Iran"]])), 0.0);
        assert_eq!(answer_f1(&pred(&["iran"]), &[]), 0.0);
        let f = answer_f1(&pred(&["a", "b"]), &gold(&[&["a"]]));
        assert!((f - 2.0 / 3.0).abs() < 1e-15);
    }

    const VALID_CORRECT: &str = "<plan>p</plan><neighbor_search>x | r</neighbor_search>\
        <neighbor_information>Harold Ramis</neighbor_information><answer>Harold Ramis</answer>";

    #[test]
    fn accuracy_cases() {
        let g = gold(&[&["Harold Ramis"]]);
        let double_plan = format!("<plan>q</plan>{VALID_CORRECT}");
        assert_eq!(accuracy_reward(&traj(&double_plan), &g), (false, 1.0, 0.0));
        let wrong = "<plan>p</plan><answer>Billy Crystal</answer>";
        assert_eq!(accuracy_reward(&traj(wrong), &g), (true, 0.0, 0.1));
        let partial = "<plan>p</plan><answer>a; b</answer>";
        let (ok, r, acc) = accuracy_reward(&traj(partial), &gold(&[&["a"]]));
        assert!(ok);
        assert!((r - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(acc, r);
    }

    #[test]
    fn graph_reward_cases() {
        assert_eq!(graph_reward(&traj(VALID_CORRECT), &gold(&[&["harold ramis"]])), 1);
        assert_eq!(graph_reward(&traj("<plan>p</plan><answer>x</answer>"), &gold(&[&["x"]])), 0);
        let only_a = "<neighbor_search>h | r</neighbor_search><neighbor_information>a</neighbor_information>";
        assert_eq!(graph_reward(&traj(only_a), &gold(&[&["a"], &["b"]])), 0);
    }

    #[test]
    fn web_reward_cases() {
        let one = "<web_search>h | r</web_search><web_information>The Iranian rial is the currency of Iran.</web_information>";
        assert_eq!(web_reward(&traj(one), &gold(&[&["Iran"]])), 1);
        assert_eq!(web_reward(&traj("<answer>x</answer>"), &gold(&[&["x"]])), 0);
        let split = "<web_search>h | r</web_search><web_information>about a</web_information>\
            <web_search>h | s</web_search><web_information>about b</web_information>";
        assert_eq!(web_reward(&traj(split), &gold(&[&["a"], &["b"]])), 1);
    }

    #[test]
    fn overall_cases() {
        assert_eq!(overall_reward(0.8, 0, 1, Coverage::Ckg), 0.8);
        assert_eq!(overall_reward(0.0, 1, 0, Coverage::Ckg), 0.1);
        assert_eq!(overall_reward(0.0, 0, 1, Coverage::Ckg), -0.1);
        assert_eq!(overall_reward(0.0, 0, 0, Coverage::Ikg), -0.1);
        assert_eq!(overall_reward(0.0, 0, 0, Coverage::Ckg), 0.0);
        assert_eq!(overall_reward(0.0, 0, 1, Coverage::Ikg), 0.1);
    }

    #[test]
    fn missing_coverage_is_an_error() {
        let err = score_trajectory(&traj(VALID_CORRECT), &gold(&[&["x"]]), None).unwrap_err();
        assert_eq!(err, RewardError::MissingCoverage("q".into()));
    }

    #[test]
    fn unparseable_text_scores_as_bad_format() {
        let b = score_text("q", "<lookup>x</lookup>", &gold(&[&["x"]]), Some(Coverage::Ckg)).unwrap();
        assert!(!b.format_ok);
        assert_eq!(b.r_over, 0.0);
    }

    #[test]
    fn score_record_field_names() {
        let b = score_trajectory(&traj(VALID_CORRECT), &gold(&[&["Harold Ramis"]]), Some(Coverage::Ikg)).unwrap();
        let rec = ScoreRecord { id: "q".into(), breakdown: b, coverage: Coverage::Ikg };
        let v: serde_json::Value = serde_json::to_value(&rec).unwrap();
        for key in ["id", "format_ok", "r_ans", "R_acc", "R_graph", "R_web", "R_over", "coverage"] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        assert_eq!(v["coverage"], "IKG");
        assert!(v.get("o_graph").is_none());
        let back: ScoreRecord = serde_json::from_value(v).unwrap();
        assert_eq!(back.breakdown.r_over, 1.0);
    }
}
