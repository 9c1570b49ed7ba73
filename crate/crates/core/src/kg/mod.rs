//! Indexed triple store with an entity alias map.
//!
//! A [`KnowledgeGraph`] is built once and never mutated; the incomplete
//! variants produced by [`sample_ikg`] are fresh graphs. All lookups are
//! read-only so a single graph can be shared by any number of concurrent
//! rollouts.

mod ikg;
mod relation;

pub use ikg::{apply_removal_log, removal_count, sample_ikg, Coverage, RemovalEntry, RemovalLog};
pub use relation::{rank_relations, RelationScorer, TokenJaccard, DEFAULT_TOP_K_RELATIONS};

use crate::io::JsonlError;
use crate::text::{label_from_id, normalize};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use thiserror::Error;

/// Returned by neighbor search when the pair index has no entry.
pub const NO_KG_INFO_SENTINEL: &str = "No information in KG, please use web tool.";

/// Variant of the sentinel seen in foreign trajectories; accepted on input only.
const ALT_SENTINEL: &str = "No information in the KG, please use web tool";

/// True if `text` is either spelling of the neighbor-search miss sentinel.
pub fn is_sentinel(text: &str) -> bool {
    let t = normalize(text);
    t == normalize(NO_KG_INFO_SENTINEL) || t == normalize(ALT_SENTINEL)
}

#[derive(Debug, Error)]
pub enum KgError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed triple at line {line}")]
    MalformedTriple { line: usize },
    #[error("knowledge graph {0} contains no triples")]
    EmptyGraph(PathBuf),
    #[error("malformed alias record: {0}")]
    Alias(#[from] JsonlError),
    #[error("question {question}: critical triple {triple} is not in the knowledge graph")]
    UnknownCriticalTriple { question: String, triple: Triple },
    #[error("removal fraction {0} is outside [0, 1]")]
    InvalidFraction(f64),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(from = "(String, String, String)", into = "(String, String, String)")]
pub struct Triple {
    pub head: String,
    pub relation: String,
    pub tail: String,
}

impl Triple {
    pub fn new(head: impl Into<String>, relation: impl Into<String>, tail: impl Into<String>) -> Self {
        Self {
            head: head.into(),
            relation: relation.into(),
            tail: tail.into(),
        }
    }

    /// Trims every field; `None` if head or relation normalize to nothing.
    fn cleaned(head: &str, relation: &str, tail: &str) -> Option<Self> {
        if normalize(head).is_empty() || normalize(relation).is_empty() {
            return None;
        }
        Some(Self::new(head.trim(), relation.trim(), tail.trim()))
    }
}

impl From<(String, String, String)> for Triple {
    fn from((head, relation, tail): (String, String, String)) -> Self {
        Self { head, relation, tail }
    }
}

impl From<Triple> for (String, String, String) {
    fn from(t: Triple) -> Self {
        (t.head, t.relation, t.tail)
    }
}

impl fmt::Display for Triple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.head, self.relation, self.tail)
    }
}

/// The derived indices. Kept as one value so "rebuild and compare" is a
/// single equality test.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
struct Indices {
    head: BTreeMap<String, BTreeSet<String>>,
    pair: BTreeMap<(String, String), BTreeSet<String>>,
    relations: BTreeSet<String>,
}

impl Indices {
    fn build<'a>(triples: impl IntoIterator<Item = &'a Triple>) -> Self {
        let mut idx = Indices::default();
        for t in triples {
            idx.head
                .entry(t.head.clone())
                .or_default()
                .insert(t.relation.clone());
            idx.pair
                .entry((t.head.clone(), t.relation.clone()))
                .or_default()
                .insert(t.tail.clone());
            idx.relations.insert(t.relation.clone());
        }
        idx
    }
}

/// Result of a neighbor lookup.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NeighborAnswer {
    /// Tail entities rendered as their primary alias text.
    Found(Vec<String>),
    Missing,
}

impl NeighborAnswer {
    /// Text injected into a `neighbor_information` block.
    pub fn render(&self) -> String {
        match self {
            NeighborAnswer::Found(tails) => tails.join("; "),
            NeighborAnswer::Missing => NO_KG_INFO_SENTINEL.to_string(),
        }
    }
}

#[derive(Debug, Deserialize)]
struct AliasRecord {
    entity: String,
    aliases: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct KnowledgeGraph {
    triples: BTreeSet<Triple>,
    indices: Indices,
    aliases: BTreeMap<String, Vec<String>>,
    alias_lookup: HashMap<String, BTreeSet<String>>,
}

impl KnowledgeGraph {
    /// Builds the graph and its indices. `extra_aliases` are listed before
    /// the identifier-derived label, so the first one becomes the display text.
    pub fn from_triples(
        triples: impl IntoIterator<Item = Triple>,
        extra_aliases: &BTreeMap<String, Vec<String>>,
    ) -> Self {
        let triples: BTreeSet<Triple> = triples.into_iter().collect();
        let indices = Indices::build(&triples);

        let mut entities: BTreeSet<&str> = BTreeSet::new();
        for t in &triples {
            entities.insert(&t.head);
            entities.insert(&t.tail);
        }
        for e in extra_aliases.keys() {
            entities.insert(e);
        }

        let mut aliases = BTreeMap::new();
        let mut alias_lookup: HashMap<String, BTreeSet<String>> = HashMap::new();
        for e in entities {
            let mut list: Vec<String> = Vec::new();
            let extra = extra_aliases.get(e).map(Vec::as_slice).unwrap_or_default();
            for a in extra.iter().cloned().chain([label_from_id(e)]) {
                let a = a.trim().to_string();
                if !a.is_empty() && !list.contains(&a) {
                    list.push(a);
                }
            }
            for a in &list {
                alias_lookup
                    .entry(normalize(a))
                    .or_default()
                    .insert(e.to_string());
            }
            alias_lookup
                .entry(normalize(e))
                .or_default()
                .insert(e.to_string());
            aliases.insert(e.to_string(), list);
        }

        Self {
            triples,
            indices,
            aliases,
            alias_lookup,
        }
    }

    /// Loads a TSV triple file and an optional JSON-lines alias file.
    pub fn load(path: &Path, alias_path: Option<&Path>) -> Result<Self, KgError> {
        let raw = fs::read_to_string(path).map_err(|source| KgError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut triples = Vec::new();
        for (idx, line) in raw.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            let triple = match cols.as_slice() {
                [h, r, t] => Triple::cleaned(h, r, t),
                _ => None,
            };
            triples.push(triple.ok_or(KgError::MalformedTriple { line: idx + 1 })?);
        }
        if triples.is_empty() {
            return Err(KgError::EmptyGraph(path.to_path_buf()));
        }

        let mut extra: BTreeMap<String, Vec<String>> = BTreeMap::new();
        if let Some(alias_path) = alias_path {
            for rec in crate::io::read_jsonl::<AliasRecord>(alias_path)? {
                extra.entry(rec.entity).or_default().extend(rec.aliases);
            }
        }
        Ok(Self::from_triples(triples, &extra))
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn triples(&self) -> impl Iterator<Item = &Triple> {
        self.triples.iter()
    }

    pub fn contains(&self, triple: &Triple) -> bool {
        self.triples.contains(triple)
    }

    /// Number of distinct head entities.
    pub fn head_count(&self) -> usize {
        self.indices.head.len()
    }

    pub fn relation_vocabulary(&self) -> &BTreeSet<String> {
        &self.indices.relations
    }

    pub fn relations_of(&self, entity: &str) -> Option<&BTreeSet<String>> {
        self.indices.head.get(entity)
    }

    pub fn tails(&self, entity: &str, relation: &str) -> Option<&BTreeSet<String>> {
        self.indices
            .pair
            .get(&(entity.to_string(), relation.to_string()))
    }

    /// All surface texts of an entity, display text first.
    pub fn aliases(&self, entity: &str) -> Vec<String> {
        self.aliases
            .get(entity)
            .cloned()
            .unwrap_or_else(|| vec![label_from_id(entity)])
    }

    /// Display text of an entity or literal.
    pub fn label(&self, entity: &str) -> String {
        self.aliases
            .get(entity)
            .and_then(|a| a.first().cloned())
            .unwrap_or_else(|| label_from_id(entity))
    }

    /// Maps a surface text to entity identifiers: an exact identifier wins,
    /// otherwise every entity with a matching normalized alias.
    pub fn resolve_entity(&self, text: &str) -> Vec<String> {
        let trimmed = text.trim();
        if self.aliases.contains_key(trimmed) {
            return vec![trimmed.to_string()];
        }
        self.alias_lookup
            .get(&normalize(trimmed))
            .map(|ids| ids.iter().cloned().collect())
            .unwrap_or_default()
    }

    /// Up to `k` relations attached to `entity`, most similar to
    /// `hypothesis` first. Unknown entity yields an empty list.
    pub fn relation_search(&self, entity: &str, hypothesis: &str, k: usize) -> Vec<String> {
        self.relation_search_with(&TokenJaccard, entity, hypothesis, k)
    }

    pub fn relation_search_with(
        &self,
        scorer: &dyn RelationScorer,
        entity: &str,
        hypothesis: &str,
        k: usize,
    ) -> Vec<String> {
        match self.relations_of(entity) {
            Some(rels) => rank_relations(scorer, hypothesis, rels.iter().map(String::as_str), k),
            None => Vec::new(),
        }
    }

    pub fn neighbor_search(&self, entity: &str, relation: &str) -> NeighborAnswer {
        match self.tails(entity, relation) {
            Some(tails) if !tails.is_empty() => {
                NeighborAnswer::Found(tails.iter().map(|t| self.label(t)).collect())
            }
            _ => NeighborAnswer::Missing,
        }
    }

    /// Rebuilds the indices from the triple set and compares.
    pub fn indices_consistent(&self) -> bool {
        let rebuilt = Indices::build(&self.triples);
        rebuilt == self.indices
            && self
                .indices
                .head
                .values()
                .flatten()
                .all(|r| self.indices.relations.contains(r))
    }

    /// Copy of this graph without the given triples, keeping the alias map.
    pub(crate) fn retain(&self, keep: impl Fn(&Triple) -> bool) -> Self {
        let mut extra = BTreeMap::new();
        for (e, list) in &self.aliases {
            extra.insert(e.clone(), list.clone());
        }
        Self::from_triples(self.triples.iter().filter(|t| keep(t)).cloned(), &extra)
    }

    /// Serializes as the TSV triple format, one line per triple in sorted order.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for t in &self.triples {
            out.push_str(&format!("{}\t{}\t{}\n", t.head, t.relation, t.tail));
        }
        out
    }
}
