#![allow(dead_code)]

use kgqa::qa::load_qa;
use kgqa::rollout::{run_rollout, OfflineCorpus, RolloutConfig, ScriptedOracle};
use kgqa::{KnowledgeGraph, QaExample, Trajectory};
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::path::PathBuf;
use std::sync::Arc;
use std::thread;

pub fn fixture(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(rel)
}

pub struct Tk25 {
    pub kg: Arc<KnowledgeGraph>,
    pub qa: Vec<QaExample>,
    pub corpus: OfflineCorpus,
}

pub fn tk25() -> Tk25 {
    let kg = KnowledgeGraph::load(&fixture("tk25/kg.tsv"), Some(&fixture("tk25/aliases.jsonl"))).unwrap();
    Tk25 {
        kg: Arc::new(kg),
        qa: load_qa(&fixture("tk25/qa.jsonl")).unwrap(),
        corpus: OfflineCorpus::load(&fixture("tk25/web_corpus.jsonl")).unwrap(),
    }
}

/// Scripted-oracle rollouts for every question against `graph`.
pub fn oracle_suite(t: &Tk25, graph: &KnowledgeGraph) -> Vec<Trajectory> {
    let cfg = RolloutConfig::default();
    t.qa.iter()
        .map(|q| {
            let mut oracle = ScriptedOracle::new(t.kg.clone());
            run_rollout(&mut oracle, graph, &t.corpus, q, &cfg).unwrap()
        })
        .collect()
}

/// Minimal HTTP server answering every POST with `handler(body)`.
/// Returns the base URL. The server thread lives until the process exits.
pub fn stub_server<F>(handler: F) -> String
where
    F: Fn(serde_json::Value) -> (u16, String) + Send + 'static,
{
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { continue };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0usize;
            loop {
                let mut line = String::new();
                if reader.read_line(&mut line).unwrap_or(0) == 0 {
                    break;
                }
                let line = line.trim_end();
                if line.is_empty() {
                    break;
                }
                if let Some((k, v)) = line.split_once(':') {
                    if k.eq_ignore_ascii_case("content-length") {
                        len = v.trim().parse().unwrap_or(0);
                    }
                }
            }
            let mut body = vec![0u8; len];
            if reader.read_exact(&mut body).is_err() {
                continue;
            }
            let json = serde_json::from_slice(&body).unwrap_or(serde_json::Value::Null);
            let (status, payload) = handler(json);
            let resp = format!(
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{payload}",
                payload.len()
            );
            let _ = stream.write_all(resp.as_bytes());
        }
    });
    format!("http://{addr}/")
}
