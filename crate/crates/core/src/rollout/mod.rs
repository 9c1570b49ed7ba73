//! The generate-retrieve loop: the policy writes up to an action, the engine
//! executes the tool and appends the information block.

pub mod policy;
pub mod remote;
pub mod web;

use crate::kg::{
    rank_relations, KnowledgeGraph, NeighborAnswer, TokenJaccard, DEFAULT_TOP_K_RELATIONS,
};
use crate::qa::QaExample;
use crate::text::normalize;
use crate::trajectory::{parse_trajectory_with, ParseError, ParseOptions, Span, Step, Tag, Trajectory};
use policy::{Policy, PolicyError};
use std::collections::BTreeSet;
use thiserror::Error;
use web::WebSearch;

pub use policy::{NullPolicy, ReplayPolicy, ScriptedOracle};
pub use remote::{RemotePolicy, RemoteWeb};
pub use web::{CorpusRecord, OfflineCorpus, WebError};

pub const DEFAULT_MAX_ITERATIONS: usize = 10;
pub const DEFAULT_TOP_K_DOCS: usize = 3;

pub const FORCE_ANSWER_DIRECTIVE: &str =
    "Iteration limit reached. Provide your final answer now inside <answer></answer> using your own knowledge.";
pub const WEB_UNAVAILABLE: &str = "web tool unavailable";
pub const MALFORMED_TOOL_CALL: &str = "malformed tool call";

const SYSTEM_INSTRUCTIONS: &str = "\
Answer the question by reasoning step by step and searching a knowledge graph.
Start with a <plan></plan> that breaks the question into sub-questions.
Use <relation_search>entity | relation</relation_search> to list the relations of an entity, \
<neighbor_search>entity | relation</neighbor_search> to follow one, and \
<web_search>entity | relation</web_search> when the knowledge graph has no information.
Results come back inside information blocks. Think inside <think></think>.
Give the final answers inside <answer></answer>, separated by \";\".";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RolloutConfig {
    /// Tool calls allowed before the answer is forced.
    pub max_iterations: usize,
    pub top_k_relations: usize,
    pub top_k_docs: usize,
    pub seed: u64,
    pub strict_format: bool,
}

impl Default for RolloutConfig {
    fn default() -> Self {
        Self {
            max_iterations: DEFAULT_MAX_ITERATIONS,
            top_k_relations: DEFAULT_TOP_K_RELATIONS,
            top_k_docs: DEFAULT_TOP_K_DOCS,
            seed: 0,
            strict_format: false,
        }
    }
}

#[derive(Debug, Error)]
pub enum RolloutError {
    #[error("question {id}: {source}")]
    Policy {
        id: String,
        #[source]
        source: PolicyError,
        /// Text generated before the failure.
        partial: String,
    },
    #[error("question {id}: unparseable policy output: {source}")]
    Unparseable {
        id: String,
        #[source]
        source: ParseError,
        partial: String,
    },
}

impl RolloutError {
    pub fn partial(&self) -> &str {
        match self {
            RolloutError::Policy { partial, .. } | RolloutError::Unparseable { partial, .. } => partial,
        }
    }
}

pub fn build_prompt(question: &QaExample) -> String {
    let mut prompt = format!("{SYSTEM_INSTRUCTIONS}\nQuestion: {}", question.question);
    if !question.topic_entities.is_empty() {
        prompt.push_str(&format!("\nTopic entities: {}", question.topic_entities.join(", ")));
    }
    prompt
}

/// Content of the last `tag` block in `text`.
pub(crate) fn last_information(text: &str, tag: Tag) -> Option<String> {
    let open = tag.open();
    let close = tag.close();
    let start = text.rfind(&open)? + open.len();
    let end = text[start..].find(&close)? + start;
    Some(text[start..end].to_string())
}

fn detached(tag: Tag, content: String) -> Step {
    let open = tag.open().len();
    let close = tag.close().len();
    Step {
        tag,
        span: Span::new(open, open + content.len()),
        block_span: Span::new(0, open + content.len() + close),
        content,
        implicit: false,
    }
}

fn split_call(content: &str) -> Option<(&str, &str)> {
    let (head, rel) = content.split_once('|')?;
    let (head, rel) = (head.trim(), rel.trim());
    (!head.is_empty() && !rel.is_empty()).then_some((head, rel))
}

/// Executes a search step and returns its information block, detached from
/// any text. Non-search steps yield `None`.
pub fn dispatch_action(
    step: &Step,
    kg: &KnowledgeGraph,
    web: &dyn WebSearch,
    cfg: &RolloutConfig,
) -> Option<Step> {
    let info = step.tag.information_for()?;
    let Some((head, rel)) = split_call(&step.content) else {
        return Some(detached(info, MALFORMED_TOOL_CALL.to_string()));
    };
    let content = match step.tag {
        Tag::RelationSearch => {
            let attached: BTreeSet<&str> = kg
                .resolve_entity(head)
                .iter()
                .filter_map(|id| kg.relations_of(id))
                .flatten()
                .map(String::as_str)
                .collect();
            rank_relations(&TokenJaccard, rel, attached.into_iter(), cfg.top_k_relations).join(", ")
        }
        Tag::NeighborSearch => {
            let mut tails: Vec<String> = Vec::new();
            for id in kg.resolve_entity(head) {
                if let NeighborAnswer::Found(found) = kg.neighbor_search(&id, rel) {
                    for t in found {
                        if !tails.contains(&t) {
                            tails.push(t);
                        }
                    }
                }
            }
            if tails.is_empty() {
                NeighborAnswer::Missing.render()
            } else {
                NeighborAnswer::Found(tails).render()
            }
        }
        Tag::WebSearch => {
            let query = normalize(&format!("{head} {rel}"));
            match web.search(&query, cfg.top_k_docs) {
                Ok(docs) => docs.join("\n"),
                Err(e) => {
                    log::warn!("web search for {query:?} failed: {e}");
                    WEB_UNAVAILABLE.to_string()
                }
            }
        }
        _ => unreachable!("only search tags have information blocks"),
    };
    Some(detached(info, content))
}

/// Cuts a segment right after its first closing search or answer delimiter.
fn truncate_at_action(segment: &str) -> (&str, Option<Tag>) {
    let first = [Tag::RelationSearch, Tag::NeighborSearch, Tag::WebSearch, Tag::Answer]
        .into_iter()
        .filter_map(|t| segment.find(&t.close()).map(|i| (i + t.close().len(), t)))
        .min_by_key(|&(end, _)| end);
    match first {
        Some((end, tag)) => (&segment[..end], Some(tag)),
        None => (segment, None),
    }
}

struct Session<'a> {
    prompt: String,
    text: String,
    id: &'a str,
    opts: ParseOptions,
}

impl Session<'_> {
    fn conversation(&self) -> String {
        if self.text.is_empty() {
            self.prompt.clone()
        } else {
            format!("{}\n{}", self.prompt, self.text)
        }
    }

    fn push(&mut self, piece: &str) -> Result<(), RolloutError> {
        let piece = piece.trim();
        if piece.is_empty() {
            return Ok(());
        }
        let before = self.text.len();
        if !self.text.is_empty() {
            self.text.push('\n');
        }
        self.text.push_str(piece);
        if let Err(source) = parse_trajectory_with(&self.text, self.id, self.opts) {
            self.text.truncate(before);
            return Err(RolloutError::Unparseable {
                id: self.id.to_string(),
                source,
                partial: self.text.clone(),
            });
        }
        Ok(())
    }

    fn finish(self) -> Result<Trajectory, RolloutError> {
        parse_trajectory_with(&self.text, self.id, self.opts).map_err(|source| RolloutError::Unparseable {
            id: self.id.to_string(),
            source,
            partial: self.text.clone(),
        })
    }

    fn policy_error(&self, source: PolicyError) -> RolloutError {
        RolloutError::Policy {
            id: self.id.to_string(),
            source,
            partial: self.text.clone(),
        }
    }
}

/// Runs one rollout. The trajectory's question id is `question.id`.
pub fn run_rollout(
    policy: &mut dyn Policy,
    kg: &KnowledgeGraph,
    web: &dyn WebSearch,
    question: &QaExample,
    cfg: &RolloutConfig,
) -> Result<Trajectory, RolloutError> {
    policy.reset(question, cfg.seed);
    let mut s = Session {
        prompt: build_prompt(question),
        text: String::new(),
        id: &question.id,
        opts: ParseOptions {
            strict: cfg.strict_format,
        },
    };
    let mut iterations = 0;
    // segments without an action, such as a lone plan, still consume turns
    let mut idle_turns = 0;
    loop {
        if iterations >= cfg.max_iterations || idle_turns > cfg.max_iterations {
            let answer = force_final_answer(policy, &s.conversation());
            s.push(&answer.tag.wrap(&answer.content))?;
            return s.finish();
        }
        let segment = policy
            .next_segment(&s.conversation())
            .map_err(|e| s.policy_error(e))?;
        let (segment, action) = truncate_at_action(&segment);
        s.push(segment)?;
        match action {
            Some(Tag::Answer) => return s.finish(),
            Some(_) => {
                let traj = parse_trajectory_with(&s.text, s.id, s.opts)
                    .expect("text was validated when pushed");
                let step = traj.steps.last().expect("segment ended in a search block");
                let info = dispatch_action(step, kg, web, cfg).expect("search step");
                s.push(&info.tag.wrap(&info.content))?;
                iterations += 1;
            }
            None if segment.contains(&Tag::Plan.close()) => idle_turns += 1,
            None => iterations = cfg.max_iterations,
        }
    }
}

/// Appends the directive, asks for one more segment and keeps only its
/// answer block, or an empty one.
pub fn force_final_answer(policy: &mut dyn Policy, conversation: &str) -> Step {
    let prompt = format!("{conversation}\n{FORCE_ANSWER_DIRECTIVE}");
    let content = match policy.next_segment(&prompt) {
        Ok(seg) => last_information(&seg, Tag::Answer).unwrap_or_default(),
        Err(e) => {
            log::warn!("policy failed on the forced answer: {e}");
            String::new()
        }
    };
    detached(Tag::Answer, content)
}
