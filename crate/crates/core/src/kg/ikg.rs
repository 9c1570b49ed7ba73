//! Incomplete-graph construction: per question, drop a fraction of the
//! annotated critical triples together with every triple linking the same
//! entity pair in either direction.

use super::{KgError, KnowledgeGraph, Triple};
use crate::io::{read_jsonl, write_jsonl, JsonlError};
use crate::qa::QaExample;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeSet, HashSet};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Coverage {
    #[serde(rename = "CKG")]
    Ckg,
    #[serde(rename = "IKG")]
    Ikg,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RemovalEntry {
    pub id: String,
    pub removed: Vec<Triple>,
    pub coverage: Coverage,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RemovalLog {
    /// Unknown when the log was read back from a file.
    pub fraction: Option<f64>,
    pub seed: Option<u64>,
    pub entries: Vec<RemovalEntry>,
}

impl RemovalLog {
    pub fn entry(&self, id: &str) -> Option<&RemovalEntry> {
        self.entries.iter().find(|e| e.id == id)
    }

    pub fn coverage(&self, id: &str) -> Option<Coverage> {
        self.entry(id).map(|e| e.coverage)
    }

    pub fn load(path: &Path) -> Result<Self, JsonlError> {
        Ok(Self {
            fraction: None,
            seed: None,
            entries: read_jsonl(path)?,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), JsonlError> {
        write_jsonl(path, &self.entries)
    }
}

/// `ceil(fraction * n)`, clamped to `n`. The small slack keeps products
/// such as `0.6 * 5` from rounding up past the exact integer.
pub fn removal_count(fraction: f64, n: usize) -> usize {
    let exact = fraction * n as f64;
    ((exact - 1e-9).ceil().max(0.0) as usize).min(n)
}

fn dedup_in_order(triples: &[Triple]) -> Vec<Triple> {
    let mut seen = HashSet::new();
    triples
        .iter()
        .filter(|t| seen.insert((*t).clone()))
        .cloned()
        .collect()
}

fn unordered(a: &str, b: &str) -> (String, String) {
    if a <= b {
        (a.to_string(), b.to_string())
    } else {
        (b.to_string(), a.to_string())
    }
}

fn purge_pairs(kg: &KnowledgeGraph, removed: impl IntoIterator<Item = Triple>) -> KnowledgeGraph {
    let pairs: BTreeSet<(String, String)> = removed
        .into_iter()
        .map(|t| unordered(&t.head, &t.tail))
        .collect();
    kg.retain(|t| !pairs.contains(&unordered(&t.head, &t.tail)))
}

/// Samples an incomplete graph. Questions are processed in input order from
/// a single seeded stream, so the result is a pure function of
/// `(kg, qa_set, fraction, seed)`. Removals from all questions apply to the
/// one derived graph.
pub fn sample_ikg(
    kg: &KnowledgeGraph,
    qa_set: &[QaExample],
    fraction: f64,
    seed: u64,
) -> Result<(KnowledgeGraph, RemovalLog), KgError> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(KgError::InvalidFraction(fraction));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut entries = Vec::with_capacity(qa_set.len());
    for q in qa_set {
        let critical = dedup_in_order(&q.critical_triples);
        if let Some(missing) = critical.iter().find(|t| !kg.contains(t)) {
            return Err(KgError::UnknownCriticalTriple {
                question: q.id.clone(),
                triple: missing.clone(),
            });
        }
        let count = removal_count(fraction, critical.len());
        let mut picked = sample(&mut rng, critical.len(), count).into_vec();
        picked.sort_unstable();
        let removed: Vec<Triple> = picked.into_iter().map(|i| critical[i].clone()).collect();
        let coverage = if removed.is_empty() {
            Coverage::Ckg
        } else {
            Coverage::Ikg
        };
        entries.push(RemovalEntry {
            id: q.id.clone(),
            removed,
            coverage,
        });
    }
    let derived = purge_pairs(kg, entries.iter().flat_map(|e| e.removed.iter().cloned()));
    Ok((
        derived,
        RemovalLog {
            fraction: Some(fraction),
            seed: Some(seed),
            entries,
        },
    ))
}

/// Rebuilds the incomplete graph recorded by a removal log.
pub fn apply_removal_log(kg: &KnowledgeGraph, log: &RemovalLog) -> Result<KnowledgeGraph, KgError> {
    for e in &log.entries {
        if let Some(missing) = e.removed.iter().find(|t| !kg.contains(t)) {
            return Err(KgError::UnknownCriticalTriple {
                question: e.id.clone(),
                triple: missing.clone(),
            });
        }
    }
    Ok(purge_pairs(
        kg,
        log.entries.iter().flat_map(|e| e.removed.iter().cloned()),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn graph() -> KnowledgeGraph {
        let mut triples = vec![
            Triple::new("Iranian_rial", "currency_of", "Iran"),
            Triple::new("Iran", "currency", "Iranian_rial"),
            Triple::new("Iranian_rial", "issued_by", "Central_Bank_of_Iran"),
        ];
        for i in 0..5 {
            triples.push(Triple::new("Hub", "link", format!("N{i}")));
        }
        KnowledgeGraph::from_triples(triples, &BTreeMap::new())
    }

    fn question(critical: Vec<Triple>) -> QaExample {
        QaExample {
            id: "q".into(),
            question: String::new(),
            topic_entities: vec![],
            answers: vec![],
            critical_triples: critical,
            plan: None,
        }
    }

    fn hub_question() -> QaExample {
        question((0..5).map(|i| Triple::new("Hub", "link", format!("N{i}"))).collect())
    }

    #[test]
    fn ceiling_counts() {
        assert_eq!(removal_count(0.4, 5), 2);
        assert_eq!(removal_count(0.6, 5), 3);
        assert_eq!(removal_count(0.2, 5), 1);
        assert_eq!(removal_count(0.4, 1), 1);
        assert_eq!(removal_count(0.0, 7), 0);
        assert_eq!(removal_count(1.0, 7), 7);
    }

    #[test]
    fn zero_fraction_is_identity() {
        let kg = graph();
        let (derived, log) = sample_ikg(&kg, &[hub_question()], 0.0, 1).unwrap();
        assert_eq!(derived.to_tsv(), kg.to_tsv());
        assert_eq!(log.coverage("q"), Some(Coverage::Ckg));
    }

    #[test]
    fn full_fraction_removes_every_critical_triple() {
        let kg = graph();
        let (derived, log) = sample_ikg(&kg, &[hub_question()], 1.0, 1).unwrap();
        assert_eq!(log.entries[0].removed.len(), 5);
        assert_eq!(log.coverage("q"), Some(Coverage::Ikg));
        assert!(derived.relations_of("Hub").is_none());
    }

    #[test]
    fn forty_percent_of_five_removes_two() {
        let (_, log) = sample_ikg(&graph(), &[hub_question()], 0.4, 9).unwrap();
        assert_eq!(log.entries[0].removed.len(), 2);
    }

    #[test]
    fn pair_purge_covers_both_directions() {
        let kg = graph();
        let q = question(vec![Triple::new("Iranian_rial", "currency_of", "Iran")]);
        let (derived, _) = sample_ikg(&kg, &[q], 1.0, 3).unwrap();
        assert_eq!(derived.len(), kg.len() - 2);
        assert!(derived.tails("Iran", "currency").is_none());
        assert!(derived.tails("Iranian_rial", "issued_by").is_some());
        assert!(derived.indices_consistent());
    }

    #[test]
    fn unknown_critical_triple_names_question() {
        let q = question(vec![Triple::new("Atlantis", "capital", "Poseidonis")]);
        let err = sample_ikg(&graph(), &[q], 0.5, 1).unwrap_err();
        assert!(err.to_string().contains("question q"));
    }

    #[test]
    fn invalid_fraction() {
        assert!(matches!(
            sample_ikg(&graph(), &[], 1.5, 1),
            Err(KgError::InvalidFraction(_))
        ));
    }

    #[test]
    fn same_seed_same_log_different_seed_differs() {
        let kg = graph();
        let mut big = Vec::new();
        for i in 0..12 {
            big.push(Triple::new("Star", "ray", format!("R{i}")));
        }
        let kg = KnowledgeGraph::from_triples(kg.triples().cloned().chain(big.clone()), &BTreeMap::new());
        let q = question(big);
        let (_, a) = sample_ikg(&kg, std::slice::from_ref(&q), 0.5, 11).unwrap();
        let (_, b) = sample_ikg(&kg, std::slice::from_ref(&q), 0.5, 11).unwrap();
        assert_eq!(a, b);
        let differs = (12..20u64).any(|s| {
            let (_, c) = sample_ikg(&kg, std::slice::from_ref(&q), 0.5, s).unwrap();
            c.entries != a.entries
        });
        assert!(differs);
    }

    #[test]
    fn applying_the_log_reproduces_the_graph() {
        let kg = graph();
        let (derived, log) = sample_ikg(&kg, &[hub_question()], 0.4, 5).unwrap();
        let replayed = apply_removal_log(&kg, &log).unwrap();
        assert_eq!(replayed.to_tsv(), derived.to_tsv());
    }
}
