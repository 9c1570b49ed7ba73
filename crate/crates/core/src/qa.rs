//! Question records.

use crate::io::{read_jsonl, JsonlError};
use crate::kg::Triple;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// One gold answer with all of its accepted surface forms.
pub type AliasSet = Vec<String>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaExample {
    pub id: String,
    pub question: String,
    #[serde(default)]
    pub topic_entities: Vec<String>,
    /// One alias set per distinct gold answer.
    pub answers: Vec<AliasSet>,
    #[serde(default)]
    pub critical_triples: Vec<Triple>,
    /// Recorded plan in the plan mini-language, used by the scripted oracle.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan: Option<String>,
}

pub fn load_qa(path: &Path) -> Result<Vec<QaExample>, JsonlError> {
    read_jsonl(path)
}

/// Strips a `#k` rollout suffix from a trajectory id.
pub fn base_id(id: &str) -> &str {
    id.split_once('#').map_or(id, |(base, _)| base)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_qa_line() {
        let line = r#"{"id": "q1", "question": "What country uses the Iranian rial?", "topic_entities": ["Iranian_rial"], "answers": [["Iran", "Islamic Republic of Iran"]], "critical_triples": [["Iranian_rial", "currency_of", "Iran"]]}"#;
        let q: QaExample = serde_json::from_str(line).unwrap();
        assert_eq!(q.critical_triples[0], Triple::new("Iranian_rial", "currency_of", "Iran"));
        assert_eq!(q.answers[0].len(), 2);
        assert!(q.plan.is_none());
    }

    #[test]
    fn base_id_strips_rollout_index() {
        assert_eq!(base_id("q7#3"), "q7");
        assert_eq!(base_id("q7"), "q7");
    }
}
