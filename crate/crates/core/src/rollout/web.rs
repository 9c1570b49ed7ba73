//! Web search back ends.

use crate::io::{read_jsonl, JsonlError};
use crate::text::{normalize, word_tokens};
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum WebError {
    #[error("web search transport failure: {0}")]
    Transport(String),
    #[error("malformed web search response: {0}")]
    Protocol(String),
}

/// A document search engine. Implementations are shared across concurrent
/// rollouts.
pub trait WebSearch: Send + Sync {
    /// At most `k` snippets, best first.
    fn search(&self, query: &str, k: usize) -> Result<Vec<String>, WebError>;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusRecord {
    pub keys: Vec<String>,
    pub snippet: String,
}

/// Deterministic keyword-matched snippet store.
///
/// A record matches when every one of its keys occurs among the query's
/// normalized terms (multi-word keys need all their words). Matches are
/// ranked by key count, then corpus order.
#[derive(Debug, Clone, Default)]
pub struct OfflineCorpus {
    records: Vec<CorpusRecord>,
}

impl OfflineCorpus {
    pub fn new(records: Vec<CorpusRecord>) -> Self {
        Self { records }
    }

    pub fn load(path: &Path) -> Result<Self, JsonlError> {
        read_jsonl(path).map(Self::new)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

impl WebSearch for OfflineCorpus {
    fn search(&self, query: &str, k: usize) -> Result<Vec<String>, WebError> {
        let terms: HashSet<String> = word_tokens(&normalize(query)).into_iter().collect();
        let mut hits: Vec<(usize, usize)> = self
            .records
            .iter()
            .enumerate()
            .filter(|(_, r)| {
                !r.keys.is_empty()
                    && r.keys.iter().all(|key| {
                        let toks = word_tokens(&normalize(key));
                        !toks.is_empty() && toks.iter().all(|t| terms.contains(t))
                    })
            })
            .map(|(i, r)| (r.keys.len(), i))
            .collect();
        hits.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
        Ok(hits
            .into_iter()
            .take(k)
            .map(|(_, i)| self.records[i].snippet.clone())
            .collect())
    }
}
