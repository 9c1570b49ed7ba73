//! The plan mini-language: one sub-question per line, `ID: EXPR`, where
//!
//! ```text
//! EXPR := Ans(type | relation(head, ?))
//!       | inter(ID, ID, ...)
//!       | union(ID, ID, ...)
//!       | negation(ID; ID, ...)
//!       | ID
//! ```
//!
//! An `Ans` head is either literal entity text or the id of another
//! sub-question, meaning "each answer of that sub-question". Set operations
//! are evaluated over normalized answer texts; `Ans` is resolved by tool
//! calls during a rollout, never here.

use crate::text::normalize;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PlanError {
    #[error("plan line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("plan line {line}: duplicate sub-question id {id}")]
    DuplicateId { line: usize, id: String },
    #[error("plan line {line}: {id} refers to itself")]
    SelfReference { line: usize, id: String },
    #[error("plan line {line}: reference to undeclared sub-question {id}")]
    Undeclared { line: usize, id: String },
    #[error("dependency cycle among {0:?}")]
    Cycle(Vec<String>),
    #[error("Ans expressions are resolved by tool calls, not by set evaluation")]
    AnsNotEvaluable,
    #[error("sub-question {0} has no bound answers")]
    Unbound(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Head {
    Entity(String),
    SubQuestion(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Expr {
    Ans {
        target_type: String,
        head: Head,
        relation: String,
    },
    Inter(Vec<String>),
    Union(Vec<String>),
    /// First set minus the union of the rest.
    Negation {
        primary: String,
        subtract: Vec<String>,
    },
    Ref(String),
}

impl Expr {
    /// Sub-question ids this expression depends on, in argument order.
    pub fn refs(&self) -> Vec<&str> {
        match self {
            Expr::Ans { head, .. } => match head {
                Head::SubQuestion(id) => vec![id.as_str()],
                Head::Entity(_) => vec![],
            },
            Expr::Inter(ids) | Expr::Union(ids) => ids.iter().map(String::as_str).collect(),
            Expr::Negation { primary, subtract } => std::iter::once(primary.as_str())
                .chain(subtract.iter().map(String::as_str))
                .collect(),
            Expr::Ref(id) => vec![id.as_str()],
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Ans {
                target_type,
                head,
                relation,
            } => {
                let head = match head {
                    Head::Entity(e) => e,
                    Head::SubQuestion(id) => id,
                };
                write!(f, "Ans({target_type} | {relation}({head}, ?))")
            }
            Expr::Inter(ids) => write!(f, "inter({})", ids.join(", ")),
            Expr::Union(ids) => write!(f, "union({})", ids.join(", ")),
            Expr::Negation { primary, subtract } => {
                write!(f, "negation({primary}; {})", subtract.join(", "))
            }
            Expr::Ref(id) => f.write_str(id),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubQuestion {
    pub id: String,
    /// Source text of the expression.
    pub text: String,
    pub expr: Expr,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Plan {
    pub sub_questions: Vec<SubQuestion>,
}

/// Sub-question id to its normalized answer set.
pub type Binding = BTreeMap<String, BTreeSet<String>>;

fn is_id(s: &str) -> bool {
    let mut chars = s.chars();
    chars.next().is_some_and(|c| c.is_ascii_alphabetic())
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Looks like an auto-numbered step label (`S3`), which must not silently
/// fall back to being an entity name.
fn looks_like_step_label(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some('S' | 's'))
        && !s[1..].is_empty()
        && chars.all(|c| c.is_ascii_digit())
}

/// `name(args)` with the closing paren at the very end.
fn split_call(src: &str) -> Option<(&str, &str)> {
    let open = src.find('(')?;
    let inner = src[open + 1..].strip_suffix(')')?;
    Some((src[..open].trim(), inner))
}

struct Parser<'a> {
    declared: &'a HashMap<String, usize>,
    line: usize,
    id: &'a str,
}

impl Parser<'_> {
    fn syntax(&self, message: impl Into<String>) -> PlanError {
        PlanError::Syntax {
            line: self.line,
            message: message.into(),
        }
    }

    fn reference(&self, raw: &str) -> Result<String, PlanError> {
        let r = raw.trim();
        if !is_id(r) {
            return Err(self.syntax(format!("expected a sub-question id, found {r:?}")));
        }
        if r == self.id {
            return Err(PlanError::SelfReference {
                line: self.line,
                id: r.to_string(),
            });
        }
        if !self.declared.contains_key(r) {
            return Err(PlanError::Undeclared {
                line: self.line,
                id: r.to_string(),
            });
        }
        Ok(r.to_string())
    }

    fn ref_list(&self, raw: &str) -> Result<Vec<String>, PlanError> {
        raw.split(',').map(|r| self.reference(r)).collect()
    }

    fn expr(&self, src: &str) -> Result<Expr, PlanError> {
        let src = src.trim();
        let Some((name, args)) = split_call(src) else {
            return self.reference(src).map(Expr::Ref);
        };
        match name.to_ascii_lowercase().as_str() {
            "ans" => self.ans(args),
            "inter" | "union" => {
                let ids = self.ref_list(args)?;
                if ids.len() < 2 {
                    return Err(self.syntax(format!("{name} needs at least two arguments")));
                }
                Ok(if name.eq_ignore_ascii_case("inter") {
                    Expr::Inter(ids)
                } else {
                    Expr::Union(ids)
                })
            }
            "negation" => {
                let (primary, rest) = args
                    .split_once(';')
                    .ok_or_else(|| self.syntax("negation expects `primary; subtracted, ...`"))?;
                Ok(Expr::Negation {
                    primary: self.reference(primary)?,
                    subtract: self.ref_list(rest)?,
                })
            }
            other => Err(self.syntax(format!("unknown function {other:?}"))),
        }
    }

    fn ans(&self, args: &str) -> Result<Expr, PlanError> {
        let (target_type, call) = args
            .split_once('|')
            .ok_or_else(|| self.syntax("Ans expects `type | relation(head, ?)`"))?;
        let (relation, inner) = split_call(call.trim())
            .ok_or_else(|| self.syntax("Ans expects `relation(head, ?)` after `|`"))?;
        let (head, slot) = inner
            .rsplit_once(',')
            .ok_or_else(|| self.syntax("relation call expects `(head, ?)`"))?;
        let head = head.trim();
        if slot.trim() != "?" || head.is_empty() || relation.is_empty() {
            return Err(self.syntax("relation call expects `(head, ?)`"));
        }
        let head = if self.declared.contains_key(head) || looks_like_step_label(head) {
            Head::SubQuestion(self.reference(head)?)
        } else {
            Head::Entity(head.to_string())
        };
        Ok(Expr::Ans {
            target_type: target_type.trim().to_string(),
            head,
            relation: relation.to_string(),
        })
    }
}

/// Parses the content of a plan block.
pub fn parse_plan(content: &str) -> Result<Plan, PlanError> {
    let mut lines = Vec::new();
    let mut declared: HashMap<String, usize> = HashMap::new();
    for (idx, raw) in content.lines().enumerate() {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let (id, body) = raw.split_once(':').ok_or(PlanError::Syntax {
            line,
            message: "expected `ID: EXPR`".into(),
        })?;
        let id = id.trim();
        if !is_id(id) {
            return Err(PlanError::Syntax {
                line,
                message: format!("invalid sub-question id {id:?}"),
            });
        }
        if declared.insert(id.to_string(), line).is_some() {
            return Err(PlanError::DuplicateId {
                line,
                id: id.to_string(),
            });
        }
        lines.push((line, id, body.trim()));
    }

    let mut sub_questions = Vec::with_capacity(lines.len());
    for (line, id, body) in lines {
        let parser = Parser {
            declared: &declared,
            line,
            id,
        };
        sub_questions.push(SubQuestion {
            id: id.to_string(),
            text: body.to_string(),
            expr: parser.expr(body)?,
        });
    }
    let plan = Plan { sub_questions };
    plan.execution_order()?;
    Ok(plan)
}

impl Plan {
    pub fn get(&self, id: &str) -> Option<&SubQuestion> {
        self.sub_questions.iter().find(|s| s.id == id)
    }

    pub fn ids(&self) -> Vec<&str> {
        self.sub_questions.iter().map(|s| s.id.as_str()).collect()
    }

    /// The last declared sub-question, whose answers answer the question.
    pub fn final_id(&self) -> Option<&str> {
        self.sub_questions.last().map(|s| s.id.as_str())
    }

    pub fn is_referenced(&self, id: &str) -> bool {
        self.sub_questions
            .iter()
            .any(|s| s.expr.refs().contains(&id))
    }

    /// Dependency-respecting order; among ready sub-questions the earliest
    /// declared goes first.
    pub fn execution_order(&self) -> Result<Vec<String>, PlanError> {
        let n = self.sub_questions.len();
        let index: HashMap<&str, usize> = self
            .sub_questions
            .iter()
            .enumerate()
            .map(|(i, s)| (s.id.as_str(), i))
            .collect();
        let deps: Vec<BTreeSet<usize>> = self
            .sub_questions
            .iter()
            .map(|s| s.expr.refs().iter().filter_map(|r| index.get(r).copied()).collect())
            .collect();
        let mut done = vec![false; n];
        let mut order = Vec::with_capacity(n);
        while order.len() < n {
            let next = (0..n).find(|&i| !done[i] && deps[i].iter().all(|&d| done[d]));
            match next {
                Some(i) => {
                    done[i] = true;
                    order.push(self.sub_questions[i].id.clone());
                }
                None => {
                    let stuck = (0..n)
                        .filter(|&i| !done[i])
                        .map(|i| self.sub_questions[i].id.clone())
                        .collect();
                    return Err(PlanError::Cycle(stuck));
                }
            }
        }
        Ok(order)
    }

    /// Renders back to the mini-language.
    pub fn render(&self) -> String {
        self.sub_questions
            .iter()
            .map(|s| format!("{}: {}", s.id, s.expr))
            .collect::<Vec<_>>()
            .join("\n")
    }
}

fn bound(bindings: &Binding, id: &str) -> Result<BTreeSet<String>, PlanError> {
    bindings
        .get(id)
        .map(|set| set.iter().map(|a| normalize(a)).collect())
        .ok_or_else(|| PlanError::Unbound(id.to_string()))
}

/// Evaluates a set expression over bound sub-answers.
pub fn eval_expr(expr: &Expr, bindings: &Binding) -> Result<BTreeSet<String>, PlanError> {
    match expr {
        Expr::Ans { .. } => Err(PlanError::AnsNotEvaluable),
        Expr::Ref(id) => bound(bindings, id),
        Expr::Inter(ids) => {
            let mut sets = ids.iter().map(|id| bound(bindings, id));
            let mut acc = match sets.next() {
                Some(first) => first?,
                None => return Ok(BTreeSet::new()),
            };
            for s in sets {
                let s = s?;
                acc.retain(|a| s.contains(a));
            }
            Ok(acc)
        }
        Expr::Union(ids) => {
            let mut acc = BTreeSet::new();
            for id in ids {
                acc.extend(bound(bindings, id)?);
            }
            Ok(acc)
        }
        Expr::Negation { primary, subtract } => {
            let mut acc = bound(bindings, primary)?;
            for id in subtract {
                for a in bound(bindings, id)? {
                    acc.remove(&a);
                }
            }
            Ok(acc)
        }
    }
}
