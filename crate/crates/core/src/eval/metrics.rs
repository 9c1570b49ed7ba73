//! Hits@1 and web-search usage.

use crate::qa::{base_id, QaExample};
use crate::text::normalize;
use crate::trajectory::{Tag, Trajectory};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("no trajectories to evaluate")]
    NoTrajectories,
    #[error("no questions to evaluate")]
    NoQuestions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub hits_at_1: f64,
    pub web_search_ratio: f64,
    pub web_calls_per_tool_call: f64,
    pub n_questions: usize,
}

/// First trajectory per question, keyed by the id without its rollout suffix.
fn by_question(trajs: &[Trajectory]) -> HashMap<&str, &Trajectory> {
    let mut map = HashMap::new();
    for t in trajs {
        map.entry(base_id(&t.question_id)).or_insert(t);
    }
    map
}

fn first_answer_hits(traj: &Trajectory, question: &QaExample) -> bool {
    let Some(first) = traj.answer_list().into_iter().next() else {
        return false;
    };
    question.answers.iter().flatten().any(|a| normalize(a) == first)
}

/// Fraction of questions whose first predicted answer equals a gold alias.
/// Questions without a trajectory count as misses.
pub fn hits_at_1(trajs: &[Trajectory], qa: &[QaExample]) -> Result<f64, EvalError> {
    if qa.is_empty() {
        return Err(EvalError::NoQuestions);
    }
    let index = by_question(trajs);
    let hits = qa
        .iter()
        .filter(|q| match index.get(q.id.as_str()) {
            Some(t) => first_answer_hits(t, q),
            None => {
                log::warn!("no trajectory for question {}; counted as a miss", q.id);
                false
            }
        })
        .count();
    Ok(hits as f64 / qa.len() as f64)
}

/// Fraction of trajectories with at least one web search.
pub fn web_search_ratio(trajs: &[Trajectory]) -> Result<f64, EvalError> {
    if trajs.is_empty() {
        return Err(EvalError::NoTrajectories);
    }
    Ok(trajs.iter().filter(|t| t.uses_web()).count() as f64 / trajs.len() as f64)
}

/// Web searches over all tool calls; 0 when no tool was called.
pub fn web_calls_per_tool_call(trajs: &[Trajectory]) -> f64 {
    let calls: usize = trajs.iter().map(Trajectory::tool_calls).sum();
    let web: usize = trajs.iter().map(|t| t.count(Tag::WebSearch)).sum();
    if calls == 0 {
        0.0
    } else {
        web as f64 / calls as f64
    }
}

/// Metrics over the questions of `qa`, one trajectory each.
pub fn evaluate(trajs: &[Trajectory], qa: &[QaExample]) -> Result<EvalReport, EvalError> {
    let hits = hits_at_1(trajs, qa)?;
    let index = by_question(trajs);
    let selected: Vec<Trajectory> = qa
        .iter()
        .filter_map(|q| index.get(q.id.as_str()).map(|t| (*t).clone()))
        .collect();
    Ok(EvalReport {
        hits_at_1: hits,
        web_search_ratio: web_search_ratio(&selected)?,
        web_calls_per_tool_call: web_calls_per_tool_call(&selected),
        n_questions: qa.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::parse_trajectory;

    fn q(id: &str, answer: &str) -> QaExample {
        QaExample {
            id: id.into(),
            question: String::new(),
            topic_entities: vec![],
            answers: vec![vec![answer.into()]],
            critical_triples: vec![],
            plan: None,
        }
    }

    fn t(id: &str, text: &str) -> Trajectory {
        parse_trajectory(text, id).unwrap()
    }

    #[test]
    fn three_of_four() {
        let qa = vec![q("a", "Iran"), q("b", "Tokyo"), q("c", "Paris"), q("d", "Asia")];
        let trajs = vec![
            t("a", "<answer>iran</answer>"),
            t("b", "<answer>Tokyo; Kyoto</answer>"),
            t("c", "<answer>Lyon; Paris</answer>"),
            t("d", "<answer>Asia</answer>"),
        ];
        assert_eq!(hits_at_1(&trajs, &qa).unwrap(), 0.75);
    }

    #[test]
    fn missing_and_empty_answers_miss() {
        let qa = vec![q("a", "Iran"), q("b", "Tokyo")];
        let trajs = vec![t("a", "<answer></answer>")];
        assert_eq!(hits_at_1(&trajs, &qa).unwrap(), 0.0);
    }

    #[test]
    fn ratio_counts_trajectories() {
        let trajs = vec![
            t("a", "<web_search>x | y</web_search><web_information>z</web_information><answer>z</answer>"),
            t("b", "<neighbor_search>x | y</neighbor_search><neighbor_information>z</neighbor_information><answer>z</answer>"),
        ];
        assert_eq!(web_search_ratio(&trajs).unwrap(), 0.5);
        assert_eq!(web_calls_per_tool_call(&trajs), 0.5);
        assert_eq!(web_search_ratio(&[]), Err(EvalError::NoTrajectories));
    }

    #[test]
    fn suffixed_ids_map_to_their_question() {
        let qa = vec![q("a", "Iran")];
        let trajs = vec![t("a#0", "<answer>Iran</answer>"), t("a#1", "<answer>Iraq</answer>")];
        let r = evaluate(&trajs, &qa).unwrap();
        assert_eq!(r.hits_at_1, 1.0);
        assert_eq!(r.n_questions, 1);
    }
}
