mod common;

use common::stub_server;
use kgqa::eval::{Judge, JudgeError, RemoteJudge};
use kgqa::rollout::policy::{Policy, PolicyError};
use kgqa::rollout::remote::stop_tags;
use kgqa::rollout::web::WebSearch;
use kgqa::rollout::{dispatch_action, run_rollout, RemotePolicy, RemoteWeb, RolloutConfig, WebError, WEB_UNAVAILABLE};
use kgqa::trajectory::parse_trajectory;
use kgqa::{KnowledgeGraph, QaExample, Tag, Triple};
use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};

fn tk1() -> KnowledgeGraph {
    KnowledgeGraph::from_triples(
        [
            Triple::new("Iranian_rial", "currency_of", "Iran"),
            Triple::new("Iran", "capital", "Tehran"),
        ],
        &BTreeMap::new(),
    )
}

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

fn dead_url() -> String {
    let l = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = l.local_addr().unwrap();
    drop(l);
    format!("http://{addr}/")
}

#[test]
fn remote_policy_drives_a_rollout() {
    let seen: Arc<Mutex<Vec<serde_json::Value>>> = Arc::default();
    let log = seen.clone();
    let url = stub_server(move |req| {
        let conv = req["conversation"].as_str().unwrap_or("").to_string();
        log.lock().unwrap().push(req);
        let seg = if conv.contains("<neighbor_information>") {
            "<answer>Iran</answer>"
        } else {
            "<plan>S1: Ans(country | currency_of(Iranian rial, ?))</plan>\n\
             <neighbor_search>Iranian rial | currency_of</neighbor_search>"
        };
        (200, serde_json::json!({ "segment": seg }).to_string())
    });
    let mut policy = RemotePolicy::new(url);
    let traj = run_rollout(&mut policy, &tk1(), &kgqa::rollout::OfflineCorpus::default(), &question(), &RolloutConfig::default())
        .unwrap();
    assert_eq!(
        traj.tags(),
        [Tag::Plan, Tag::NeighborSearch, Tag::NeighborInformation, Tag::Answer]
    );
    let reqs = seen.lock().unwrap();
    assert_eq!(reqs.len(), 2);
    let tags: Vec<String> = serde_json::from_value(reqs[0]["stop_tags"].clone()).unwrap();
    assert_eq!(tags, stop_tags());
    assert!(tags.contains(&"</web_search>".to_string()));
}

#[test]
fn remote_policy_errors() {
    let url = stub_server(|_| (200, "{\"text\": 1}".into()));
    let err = RemotePolicy::new(url).next_segment("x").unwrap_err();
    assert!(matches!(err, PolicyError::Protocol(_)));
    let url = stub_server(|_| (500, "{}".into()));
    assert!(matches!(RemotePolicy::new(url).next_segment("x"), Err(PolicyError::Transport(_))));
    assert!(matches!(RemotePolicy::new(dead_url()).next_segment("x"), Err(PolicyError::Transport(_))));
}

#[test]
fn remote_policy_failure_keeps_the_partial_text() {
    let calls = Arc::new(Mutex::new(0));
    let c = calls.clone();
    let url = stub_server(move |_| {
        let mut n = c.lock().unwrap();
        *n += 1;
        if *n == 1 {
            (200, serde_json::json!({"segment": "<plan>S1: Ans(a | r(x, ?))</plan>"}).to_string())
        } else {
            (503, String::new())
        }
    });
    let err = run_rollout(
        &mut RemotePolicy::new(url),
        &tk1(),
        &kgqa::rollout::OfflineCorpus::default(),
        &question(),
        &RolloutConfig::default(),
    )
    .unwrap_err();
    assert_eq!(err.partial(), "<plan>S1: Ans(a | r(x, ?))</plan>");
}

#[test]
fn remote_web_sends_query_and_truncates() {
    let url = stub_server(|req| {
        assert_eq!(req["k"], 2);
        let q = req["query"].as_str().unwrap().to_string();
        (200, serde_json::json!({"snippets": [q, "b", "c"]}).to_string())
    });
    let docs = RemoteWeb::new(url).search("iranian rial currency_of", 2).unwrap();
    assert_eq!(docs, ["iranian rial currency_of", "b"]);
}

#[test]
fn remote_web_failure_becomes_an_information_block() {
    let web = RemoteWeb::new(dead_url());
    assert!(matches!(web.search("q", 3), Err(WebError::Transport(_))));
    let traj = parse_trajectory("<web_search>Iranian rial | currency_of</web_search>", "q").unwrap();
    let info = dispatch_action(&traj.steps[0], &tk1(), &web, &RolloutConfig::default()).unwrap();
    assert_eq!(info.tag, Tag::WebInformation);
    assert_eq!(info.content, WEB_UNAVAILABLE);

    let url = stub_server(|_| (200, "[1, 2]".into()));
    assert!(matches!(RemoteWeb::new(url).search("q", 3), Err(WebError::Protocol(_))));
}

#[test]
fn remote_judge_passthrough() {
    let url = stub_server(|req| {
        let score = if req["plan"].as_str().unwrap().contains("S1") { 1 } else { 0 };
        assert!(req["question"].as_str().unwrap().contains("rial"));
        (200, serde_json::json!({ "score": score }).to_string())
    });
    let judge = RemoteJudge::new(url);
    assert_eq!(judge.score_plan(&question(), "S1: Ans(a | r(x, ?))").unwrap(), 1);
    assert_eq!(judge.score_plan(&question(), "nothing").unwrap(), 0);
}

#[test]
fn remote_judge_rejects_bad_scores() {
    let url = stub_server(|_| (200, "{\"score\": 0.5}".into()));
    assert!(matches!(RemoteJudge::new(url).score_plan(&question(), "p"), Err(JudgeError::Protocol(_))));
    let url = stub_server(|_| (200, "{\"score\": 2}".into()));
    assert!(matches!(RemoteJudge::new(url).score_plan(&question(), "p"), Err(JudgeError::Protocol(_))));
    assert!(matches!(RemoteJudge::new(dead_url()).score_plan(&question(), "p"), Err(JudgeError::Transport(_))));
}
