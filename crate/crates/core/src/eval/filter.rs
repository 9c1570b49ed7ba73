//! Two-stage filter for teacher trajectories: rule checks, then a plan judge.

use super::judge::{Judge, JudgeError};
use crate::kg::Coverage;
use crate::qa::QaExample;
use crate::reward::{answer_f1, graph_reward, web_reward};
use crate::trajectory::{validate_format, Trajectory};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FilterCheck {
    Format,
    Answer,
    RetrievalCkgWebPresent,
    RetrievalCkgGraphMiss,
    RetrievalIkgWebAbsent,
    RetrievalIkgWebMiss,
    PlanJudge,
}

impl FilterCheck {
    pub fn code(self) -> &'static str {
        match self {
            FilterCheck::Format => "FORMAT",
            FilterCheck::Answer => "ANSWER",
            FilterCheck::RetrievalCkgWebPresent => "RETRIEVAL_CKG_WEB_PRESENT",
            FilterCheck::RetrievalCkgGraphMiss => "RETRIEVAL_CKG_GRAPH_MISS",
            FilterCheck::RetrievalIkgWebAbsent => "RETRIEVAL_IKG_WEB_ABSENT",
            FilterCheck::RetrievalIkgWebMiss => "RETRIEVAL_IKG_WEB_MISS",
            FilterCheck::PlanJudge => "PLAN_JUDGE",
        }
    }
}

impl fmt::Display for FilterCheck {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterVerdict {
    pub keep: bool,
    pub failed_checks: Vec<FilterCheck>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterConfig {
    /// Minimum answer F1 to pass the answer check.
    pub answer_threshold: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self { answer_threshold: 1.0 }
    }
}

/// Runs every check and reports all failures. The judge is consulted only
/// when a plan block exists; a missing plan fails the judge check.
pub fn filter_trajectory(
    traj: &Trajectory,
    question: &QaExample,
    coverage: Coverage,
    judge: &dyn Judge,
    cfg: &FilterConfig,
) -> Result<FilterVerdict, JudgeError> {
    let gold = &question.answers;
    let mut failed = Vec::new();
    if !validate_format(traj).valid {
        failed.push(FilterCheck::Format);
    }
    let pred: BTreeSet<String> = traj.answer_list().into_iter().collect();
    if answer_f1(&pred, gold) < cfg.answer_threshold {
        failed.push(FilterCheck::Answer);
    }
    match coverage {
        Coverage::Ckg => {
            if traj.uses_web() {
                failed.push(FilterCheck::RetrievalCkgWebPresent);
            }
            if graph_reward(traj, gold) == 0 {
                failed.push(FilterCheck::RetrievalCkgGraphMiss);
            }
        }
        Coverage::Ikg => {
            if !traj.uses_web() {
                failed.push(FilterCheck::RetrievalIkgWebAbsent);
            }
            if web_reward(traj, gold) == 0 {
                failed.push(FilterCheck::RetrievalIkgWebMiss);
            }
        }
    }
    let score = match traj.plan_text() {
        Some(plan) => judge.score_plan(question, plan)?,
        None => 0,
    };
    if score != 1 {
        failed.push(FilterCheck::PlanJudge);
    }
    Ok(FilterVerdict {
        keep: failed.is_empty(),
        failed_checks: failed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::RuleJudge;
    use crate::trajectory::parse_trajectory;

    fn question() -> QaExample {
        QaExample {
            id: "q1".into(),
            question: "What country uses the Iranian rial?".into(),
            topic_entities: vec!["Iranian_rial".into()],
            answers: vec![vec!["Iran".into()]],
            critical_triples: vec![],
            plan: None,
        }
    }

    const PLAN: &str = "<plan>S1: Ans(country | currency_of(Iranian rial, ?))</plan>";

    fn verdict(body: &str, coverage: Coverage) -> FilterVerdict {
        let traj = parse_trajectory(&format!("{PLAN}\n{body}"), "q1").unwrap();
        filter_trajectory(&traj, &question(), coverage, &RuleJudge::new(), &FilterConfig::default()).unwrap()
    }

    #[test]
    fn conforming_ckg_trajectory_is_kept() {
        let v = verdict(
            "<neighbor_search>Iranian rial | currency_of</neighbor_search>\
             <neighbor_information>Iran</neighbor_information><answer>Iran</answer>",
            Coverage::Ckg,
        );
        assert!(v.keep, "{v:?}");
    }

    #[test]
    fn web_under_ckg_is_dropped() {
        let v = verdict(
            "<neighbor_search>Iranian rial | currency_of</neighbor_search>\
             <neighbor_information>Iran</neighbor_information>\
             <web_search>Iranian rial | currency_of</web_search>\
             <web_information>The Iranian rial is the currency of Iran.</web_information><answer>Iran</answer>",
            Coverage::Ckg,
        );
        assert_eq!(v.failed_checks, vec![FilterCheck::RetrievalCkgWebPresent]);
    }

    #[test]
    fn ikg_web_without_gold_is_dropped() {
        let v = verdict(
            "<web_search>Iranian rial | currency_of</web_search>\
             <web_information>The rial was introduced in 1932.</web_information><answer>Iran</answer>",
            Coverage::Ikg,
        );
        assert_eq!(v.failed_checks, vec![FilterCheck::RetrievalIkgWebMiss]);
    }

    #[test]
    fn codes_serialize_in_upper_snake_case() {
        let s = serde_json::to_string(&FilterCheck::RetrievalIkgWebAbsent).unwrap();
        assert_eq!(s, "\"RETRIEVAL_IKG_WEB_ABSENT\"");
    }
}
