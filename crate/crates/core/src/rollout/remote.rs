//! HTTP clients for a chat-style policy server and a search service.

use super::policy::{Policy, PolicyError};
use super::web::{WebError, WebSearch};
use crate::qa::QaExample;
use crate::trajectory::Tag;
use reqwest::blocking::Client;
use serde::{Deserialize, Serialize};
use std::time::Duration;

const DEFAULT_TIMEOUT: Duration = Duration::from_secs(120);

pub(crate) fn http_client(timeout: Duration) -> Client {
    Client::builder()
        .timeout(timeout)
        .build()
        .expect("TLS backend initialization")
}

#[derive(Debug, Serialize)]
struct SegmentRequest<'a> {
    conversation: &'a str,
    stop_tags: Vec<String>,
}

#[derive(Debug, Deserialize)]
struct SegmentResponse {
    segment: String,
}

/// Closing delimiters at which the policy server must stop generating.
pub fn stop_tags() -> Vec<String> {
    [Tag::RelationSearch, Tag::NeighborSearch, Tag::WebSearch, Tag::Answer]
        .into_iter()
        .map(Tag::close)
        .collect()
}

/// Policy served over HTTP: `POST {"conversation", "stop_tags"}` returns
/// `{"segment"}`.
#[derive(Debug, Clone)]
pub struct RemotePolicy {
    url: String,
    client: Client,
}

impl RemotePolicy {
    pub fn new(url: impl Into<String>) -> Self {
        Self::with_timeout(url, DEFAULT_TIMEOUT)
    }

    pub fn with_timeout(url: impl Into<String>, timeout: Duration) -> Self {
        Self {
            url: url.into(),
            client: http_client(timeout),
        }
    }
}

impl Policy for RemotePolicy {
    // the server keeps no per-question state; the conversation carries it
    fn reset(&mut self, _question: &QaExample, _seed: u64) {}

    fn next_segment(&mut self, conversation: &str) -> Result<String, PolicyError> {
        let req = SegmentRequest {
            conversation,
            stop_tags: stop_tags(),
        };
        let resp = self
            .client
            .post(&self.url)
            .json(&req)
            .send()
            .and_then(|r| r.error_for_status())
            .map_err(|e| PolicyError::Transport(e.to_string()))?;
        resp.json::<SegmentResponse>()
            .map(|r| r.segment)
            .map_err(|e| PolicyError::Protocol(e.to_string()))
    }
}

#[derive(Debug, Serialize)]
struct SearchRequest<'a> {
    query: &'a str,
    k: usize,
}

#[derive(Debug, Deserialize)]
struct SearchResponse {
    snippets: Vec<String>,
}

/// Search service: `POST {"query", "k"}` returns `{"snippets"}`.
#[derive(Debug, Clone)]
pub struct RemoteWeb {
    url: String,
    client: Client,
}

impl RemoteWeb {
    pub fn new(url: impl Into<String>) -> Self {
        Self::with_timeout(url, Duration::from_secs(30))
    }

    pub fn with_timeout(url: impl Into<String>, timeout: Duration) -> Self {
        Self {
            url: url.into(),
            client: http_client(timeout),
        }
    }
}

impl WebSearch for RemoteWeb {
    fn search(&self, query: &str, k: usize) -> Result<Vec<String>, WebError> {
        let resp = self
            .client
            .post(&self.url)
            .json(&SearchRequest { query, k })
            .send()
            .and_then(|r| r.error_for_status())
            .map_err(|e| WebError::Transport(e.to_string()))?;
        let mut snippets = resp
            .json::<SearchResponse>()
            .map_err(|e| WebError::Protocol(e.to_string()))?
            .snippets;
        snippets.truncate(k);
        Ok(snippets)
    }
}
