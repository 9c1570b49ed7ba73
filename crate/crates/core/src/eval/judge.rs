//! Plan judges score a plan block 1 (reasonable) or 0.

use crate::kg::KnowledgeGraph;
use crate::plan::{parse_plan, Expr, Head};
use crate::qa::QaExample;
use crate::rollout::remote::http_client;
use crate::text::{label_from_id, normalize};
use reqwest::blocking::Client;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::sync::Arc;
use std::time::Duration;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum JudgeError {
    #[error("judge transport failure: {0}")]
    Transport(String),
    #[error("malformed judge response: {0}")]
    Protocol(String),
}

pub trait Judge: Send + Sync {
    fn score_plan(&self, question: &QaExample, plan: &str) -> Result<u8, JudgeError>;
}

/// Accepts a plan that parses, starts from every topic entity and ends in a
/// sub-question nothing else depends on.
///
/// A literal head names a topic entity when it matches the identifier or its
/// underscore-free label, or, given a graph, any alias of the entity.
#[derive(Debug, Clone, Default)]
pub struct RuleJudge {
    graph: Option<Arc<KnowledgeGraph>>,
}

impl RuleJudge {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_graph(graph: Arc<KnowledgeGraph>) -> Self {
        Self { graph: Some(graph) }
    }

    fn names(&self, head: &str) -> BTreeSet<String> {
        let mut out = BTreeSet::from([normalize(head)]);
        if let Some(kg) = &self.graph {
            out.extend(kg.resolve_entity(head).into_iter().map(|id| normalize(&id)));
        }
        out
    }
}

impl Judge for RuleJudge {
    fn score_plan(&self, question: &QaExample, plan: &str) -> Result<u8, JudgeError> {
        let Ok(plan) = parse_plan(plan) else {
            return Ok(0);
        };
        let heads: BTreeSet<String> = plan
            .sub_questions
            .iter()
            .filter_map(|sq| match &sq.expr {
                Expr::Ans {
                    head: Head::Entity(e),
                    ..
                } => Some(self.names(e)),
                _ => None,
            })
            .flatten()
            .collect();
        let covered = question.topic_entities.iter().all(|t| {
            heads.contains(&normalize(t)) || heads.contains(&normalize(&label_from_id(t)))
        });
        let sink = plan.final_id().is_some_and(|f| !plan.is_referenced(f));
        Ok(u8::from(covered && sink))
    }
}

#[derive(Debug, Serialize)]
struct JudgeRequest<'a> {
    question: &'a str,
    plan: &'a str,
}

#[derive(Debug, Deserialize)]
struct JudgeResponse {
    score: serde_json::Value,
}

/// Judge served over HTTP: `POST {"question", "plan"}` returns `{"score": 0|1}`.
#[derive(Debug, Clone)]
pub struct RemoteJudge {
    url: String,
    client: Client,
}

impl RemoteJudge {
    pub fn new(url: impl Into<String>) -> Self {
        Self::with_timeout(url, Duration::from_secs(60))
    }

    pub fn with_timeout(url: impl Into<String>, timeout: Duration) -> Self {
        Self {
            url: url.into(),
            client: http_client(timeout),
        }
    }
}

impl Judge for RemoteJudge {
    fn score_plan(&self, question: &QaExample, plan: &str) -> Result<u8, JudgeError> {
        let resp = self
            .client
            .post(&self.url)
            .json(&JudgeRequest {
                question: &question.question,
                plan,
            })
            .send()
            .and_then(|r| r.error_for_status())
            .map_err(|e| JudgeError::Transport(e.to_string()))?;
        let body: JudgeResponse = resp.json().map_err(|e| JudgeError::Protocol(e.to_string()))?;
        match body.score.as_u64() {
            Some(s @ (0 | 1)) => Ok(s as u8),
            _ => Err(JudgeError::Protocol(format!("score must be 0 or 1, got {}", body.score))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(topics: &[&str]) -> QaExample {
        QaExample {
            id: "q".into(),
            question: "What country uses the Iranian rial?".into(),
            topic_entities: topics.iter().map(|t| t.to_string()).collect(),
            answers: vec![],
            critical_triples: vec![],
            plan: None,
        }
    }

    #[test]
    fn single_hop_plan_is_reasonable() {
        let s = RuleJudge::new().score_plan(&q(&["Iranian_rial"]), "S1: Ans(country | currency_of(Iranian rial, ?))");
        assert_eq!(s.unwrap(), 1);
    }

    #[test]
    fn unparseable_plan_scores_zero() {
        assert_eq!(RuleJudge::new().score_plan(&q(&["Iranian_rial"]), "first find the country").unwrap(), 0);
    }

    #[test]
    fn missing_topic_entity_scores_zero() {
        let s = RuleJudge::new().score_plan(&q(&["Iranian_rial", "Asia"]), "S1: Ans(country | currency_of(Iranian rial, ?))");
        assert_eq!(s.unwrap(), 0);
    }

    #[test]
    fn aliases_need_the_graph() {
        let kg = KnowledgeGraph::from_triples(
            [crate::kg::Triple::new("Titanic_film", "starring", "Kate_Winslet")],
            &[("Titanic_film".to_string(), vec!["Titanic".to_string()])].into_iter().collect(),
        );
        let plan = "S1: Ans(person | starring(Titanic, ?))";
        assert_eq!(RuleJudge::new().score_plan(&q(&["Titanic_film"]), plan).unwrap(), 0);
        assert_eq!(RuleJudge::with_graph(Arc::new(kg)).score_plan(&q(&["Titanic_film"]), plan).unwrap(), 1);
    }

    #[test]
    fn final_step_must_be_the_sink() {
        let plan = "S1: Ans(country | currency_of(Iranian_rial, ?))\nS2: Ans(city | capital(S1, ?))\nS3: union(S2, S1)";
        assert_eq!(RuleJudge::new().score_plan(&q(&["Iranian_rial"]), plan).unwrap(), 1);
        let plan = "S2: Ans(city | capital(S1, ?))\nS1: Ans(country | currency_of(Iranian_rial, ?))";
        assert_eq!(RuleJudge::new().score_plan(&q(&["Iranian_rial"]), plan).unwrap(), 0);
    }
}
