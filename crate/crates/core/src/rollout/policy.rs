//! Policies drive a rollout by emitting one segment at a time.

use super::{last_information, FORCE_ANSWER_DIRECTIVE};
use crate::kg::{is_sentinel, KnowledgeGraph, RelationScorer, TokenJaccard};
use crate::plan::{eval_expr, parse_plan, Binding, Expr, Head, Plan};
use crate::qa::QaExample;
use crate::text::{contains_phrase, normalize};
use crate::trajectory::Tag;
use std::collections::{BTreeSet, HashMap, VecDeque};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("policy transport failure: {0}")]
    Transport(String),
    #[error("malformed policy response: {0}")]
    Protocol(String),
}

pub trait Policy {
    /// Starts a new question. Called once before the first segment.
    fn reset(&mut self, question: &QaExample, seed: u64);

    /// Text continuing `conversation`, ending at a closing action delimiter
    /// or at end of output.
    fn next_segment(&mut self, conversation: &str) -> Result<String, PolicyError>;
}

/// Always returns an empty segment.
#[derive(Debug, Clone, Copy, Default)]
pub struct NullPolicy;

impl Policy for NullPolicy {
    fn reset(&mut self, _question: &QaExample, _seed: u64) {}

    fn next_segment(&mut self, _conversation: &str) -> Result<String, PolicyError> {
        Ok(String::new())
    }
}

/// Plays back a fixed list of segments, then empty output.
#[derive(Debug, Clone, Default)]
pub struct ReplayPolicy {
    segments: Vec<String>,
    next: usize,
}

impl ReplayPolicy {
    pub fn new(segments: impl IntoIterator<Item = impl Into<String>>) -> Self {
        Self {
            segments: segments.into_iter().map(Into::into).collect(),
            next: 0,
        }
    }
}

impl Policy for ReplayPolicy {
    fn reset(&mut self, _question: &QaExample, _seed: u64) {
        self.next = 0;
    }

    fn next_segment(&mut self, _conversation: &str) -> Result<String, PolicyError> {
        let seg = self.segments.get(self.next).cloned().unwrap_or_default();
        self.next += 1;
        Ok(seg)
    }
}

/// Where the oracle is inside one `Ans` sub-question.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Waiting {
    Relations,
    Neighbors,
    Web,
}

#[derive(Debug)]
struct Hop {
    id: String,
    hypothesis: String,
    heads: VecDeque<String>,
    head: String,
    relation: String,
    waiting: Waiting,
    found: BTreeSet<String>,
}

#[derive(Debug, Default)]
struct Session {
    plan_text: String,
    plan: Option<Plan>,
    queue: VecDeque<String>,
    bindings: Binding,
    display: HashMap<String, String>,
    hop: Option<Hop>,
    notes: Vec<String>,
    planned: bool,
    /// What the oracle answers when it has to answer immediately.
    recalled: Vec<String>,
}

/// Follows a recorded plan with the relation and neighbor tools, switching
/// to web search when neighbor search returns the miss sentinel.
///
/// The reference graph stands in for the model's own knowledge: it is used
/// to recognise answers inside web snippets and to answer when the
/// iteration limit forces an immediate response. Facts reach the
/// trajectory only through tool calls.
pub struct ScriptedOracle {
    reference: Arc<KnowledgeGraph>,
    session: Session,
}

impl ScriptedOracle {
    pub fn new(reference: Arc<KnowledgeGraph>) -> Self {
        Self {
            reference,
            session: Session::default(),
        }
    }

    fn remember(&mut self, label: &str) -> String {
        let n = normalize(label);
        self.session
            .display
            .entry(n.clone())
            .or_insert_with(|| label.trim().to_string());
        n
    }

    fn display(&self, normalized: &str) -> String {
        self.session
            .display
            .get(normalized)
            .cloned()
            .unwrap_or_else(|| normalized.to_string())
    }

    /// Tails of `(head text, relation)` in the reference graph, as labels.
    fn recall(&self, head: &str, relation: &str) -> Vec<String> {
        let mut out = Vec::new();
        for id in self.reference.resolve_entity(head) {
            if let Some(tails) = self.reference.tails(&id, relation) {
                for t in tails {
                    let label = self.reference.label(t);
                    if !out.contains(&label) {
                        out.push(label);
                    }
                }
            }
        }
        out
    }

    /// Evaluates the whole plan against the reference graph.
    fn recall_plan(&self, plan: &Plan) -> Vec<String> {
        let Ok(order) = plan.execution_order() else {
            return Vec::new();
        };
        let mut bindings = Binding::new();
        let mut labels: HashMap<String, String> = HashMap::new();
        for id in &order {
            let sq = plan.get(id).expect("ordered ids are declared");
            let answers: BTreeSet<String> = match &sq.expr {
                Expr::Ans { head, relation, .. } => {
                    let heads: Vec<String> = match head {
                        Head::Entity(e) => vec![e.clone()],
                        Head::SubQuestion(r) => bindings
                            .get(r)
                            .into_iter()
                            .flatten()
                            .map(|n| labels.get(n).cloned().unwrap_or_else(|| n.clone()))
                            .collect(),
                    };
                    heads
                        .iter()
                        .flat_map(|h| self.recall(h, relation))
                        .map(|l| {
                            let n = normalize(&l);
                            labels.entry(n.clone()).or_insert(l);
                            n
                        })
                        .collect()
                }
                other => eval_expr(other, &bindings).unwrap_or_default(),
            };
            bindings.insert(id.clone(), answers);
        }
        plan.final_id()
            .and_then(|f| bindings.get(f))
            .into_iter()
            .flatten()
            .map(|n| labels.get(n).cloned().unwrap_or_else(|| n.clone()))
            .collect()
    }

    /// Chain plan from critical triples when no plan was recorded.
    fn derived_plan(&self, question: &QaExample) -> String {
        let mut lines = Vec::new();
        let mut prev_tail: Option<&str> = None;
        for (i, t) in question.critical_triples.iter().enumerate() {
            let head = match prev_tail {
                Some(p) if p == t.head => format!("S{i}"),
                _ => self.reference.label(&t.head),
            };
            lines.push(format!("S{}: Ans(entity | {}({head}, ?))", i + 1, t.relation));
            prev_tail = Some(&t.tail);
        }
        lines.join("\n")
    }

    fn relation_search(&self, head: &str, hypothesis: &str) -> String {
        Tag::RelationSearch.wrap(&format!("{head} | {hypothesis}"))
    }

    /// Starts the next `Ans` hop or evaluates set operations until an action
    /// is needed; ends with the answer.
    fn advance(&mut self) -> String {
        loop {
            if let Some(hop) = self.session.hop.as_mut() {
                if let Some(head) = hop.heads.pop_front() {
                    hop.head = head.clone();
                    hop.relation = hop.hypothesis.clone();
                    hop.waiting = Waiting::Relations;
                    let hypothesis = hop.hypothesis.clone();
                    let action = self.relation_search(&head, &hypothesis);
                    return self.with_notes(action);
                }
                let hop = self.session.hop.take().expect("checked above");
                self.session.bindings.insert(hop.id, hop.found);
                continue;
            }
            let Some(id) = self.session.queue.pop_front() else {
                return self.final_answer();
            };
            let plan = self.session.plan.as_ref().expect("queue implies plan");
            let expr = plan.get(&id).expect("queued ids are declared").expr.clone();
            match expr {
                Expr::Ans { head, relation, .. } => {
                    let heads: VecDeque<String> = match head {
                        Head::Entity(e) => VecDeque::from([e]),
                        Head::SubQuestion(r) => self
                            .session
                            .bindings
                            .get(&r)
                            .into_iter()
                            .flatten()
                            .map(|n| self.display(n))
                            .collect(),
                    };
                    self.session.hop = Some(Hop {
                        id,
                        hypothesis: relation,
                        heads,
                        head: String::new(),
                        relation: String::new(),
                        waiting: Waiting::Relations,
                        found: BTreeSet::new(),
                    });
                }
                other => {
                    let result = eval_expr(&other, &self.session.bindings).unwrap_or_default();
                    let shown: Vec<String> = result.iter().map(|n| self.display(n)).collect();
                    self.session
                        .notes
                        .push(format!("{id} = {other} = {{{}}}", shown.join("; ")));
                    self.session.bindings.insert(id, result);
                }
            }
        }
    }

    fn with_notes(&mut self, action: String) -> String {
        if self.session.notes.is_empty() {
            return action;
        }
        let notes = std::mem::take(&mut self.session.notes).join("\n");
        format!("{}\n{action}", Tag::Think.wrap(&notes))
    }

    fn final_answer(&mut self) -> String {
        let plan = self.session.plan.as_ref();
        let answers: Vec<String> = plan
            .and_then(|p| p.final_id())
            .and_then(|f| self.session.bindings.get(f))
            .into_iter()
            .flatten()
            .map(|n| self.display(n))
            .collect();
        let action = Tag::Answer.wrap(&answers.join("; "));
        self.with_notes(action)
    }

    fn on_information(&mut self, conversation: &str) -> String {
        let Some(hop) = self.session.hop.as_mut() else {
            return self.advance();
        };
        match hop.waiting {
            Waiting::Relations => {
                let listed = last_information(conversation, Tag::RelationInformation).unwrap_or_default();
                if let Some(best) = listed
                    .split(',')
                    .map(str::trim)
                    .find(|r| TokenJaccard.score(&hop.hypothesis, r) == 1.0)
                {
                    hop.relation = best.to_string();
                }
                hop.waiting = Waiting::Neighbors;
                Tag::NeighborSearch.wrap(&format!("{} | {}", hop.head, hop.relation))
            }
            Waiting::Neighbors => {
                let info = last_information(conversation, Tag::NeighborInformation).unwrap_or_default();
                if is_sentinel(&info) {
                    hop.waiting = Waiting::Web;
                    return Tag::WebSearch.wrap(&format!("{} | {}", hop.head, hop.relation));
                }
                let labels: Vec<String> = info
                    .split(';')
                    .map(str::trim)
                    .filter(|l| !l.is_empty())
                    .map(String::from)
                    .collect();
                for l in labels {
                    let n = self.remember(&l);
                    self.session.hop.as_mut().expect("hop in progress").found.insert(n);
                }
                self.advance()
            }
            Waiting::Web => {
                let docs = last_information(conversation, Tag::WebInformation).unwrap_or_default();
                let (head, relation) = (hop.head.clone(), hop.relation.clone());
                for label in self.recall(&head, &relation) {
                    if contains_phrase(&docs, &label) {
                        let n = self.remember(&label);
                        self.session.hop.as_mut().expect("hop in progress").found.insert(n);
                    }
                }
                self.advance()
            }
        }
    }
}

impl Policy for ScriptedOracle {
    fn reset(&mut self, question: &QaExample, _seed: u64) {
        let plan_text = question
            .plan
            .clone()
            .unwrap_or_else(|| self.derived_plan(question));
        let plan = parse_plan(&plan_text).ok();
        let queue = plan
            .as_ref()
            .and_then(|p| p.execution_order().ok())
            .unwrap_or_default()
            .into();
        let recalled = plan.as_ref().map(|p| self.recall_plan(p)).unwrap_or_default();
        self.session = Session {
            plan_text,
            plan,
            queue,
            recalled,
            ..Session::default()
        };
    }

    fn next_segment(&mut self, conversation: &str) -> Result<String, PolicyError> {
        if conversation.trim_end().ends_with(FORCE_ANSWER_DIRECTIVE) {
            return Ok(Tag::Answer.wrap(&self.session.recalled.join("; ")));
        }
        if !self.session.planned {
            self.session.planned = true;
            return Ok(Tag::Plan.wrap(&self.session.plan_text));
        }
        Ok(self.on_information(conversation))
    }
}
