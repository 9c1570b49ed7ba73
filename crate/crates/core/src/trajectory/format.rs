use super::{parse_trajectory_with, ParseError, ParseOptions, Tag, Trajectory};
use serde::{Deserialize, Serialize};
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ViolationCode {
    UnknownTag,
    UnclosedTag,
    NestedTag,
    StrayClosingTag,
    StrayText,
    PlanCount,
    PlanNotFirstAction,
    AnswerCount,
    OrphanInfo,
}

impl fmt::Display for ViolationCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ViolationCode::UnknownTag => "UNKNOWN_TAG",
            ViolationCode::UnclosedTag => "UNCLOSED_TAG",
            ViolationCode::NestedTag => "NESTED_TAG",
            ViolationCode::StrayClosingTag => "STRAY_CLOSING_TAG",
            ViolationCode::StrayText => "STRAY_TEXT",
            ViolationCode::PlanCount => "PLAN_COUNT",
            ViolationCode::PlanNotFirstAction => "PLAN_NOT_FIRST_ACTION",
            ViolationCode::AnswerCount => "ANSWER_COUNT",
            ViolationCode::OrphanInfo => "ORPHAN_INFO",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub code: ViolationCode,
    pub message: String,
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FormatReport {
    pub valid: bool,
    pub violations: Vec<Violation>,
}

impl FormatReport {
    fn from_violations(violations: Vec<Violation>) -> Self {
        Self {
            valid: violations.is_empty(),
            violations,
        }
    }

    pub fn codes(&self) -> Vec<ViolationCode> {
        self.violations.iter().map(|v| v.code).collect()
    }
}

impl From<&ParseError> for Violation {
    fn from(err: &ParseError) -> Self {
        let code = match err {
            ParseError::UnknownTag { .. } => ViolationCode::UnknownTag,
            ParseError::Unclosed { .. } => ViolationCode::UnclosedTag,
            ParseError::Nested { .. } => ViolationCode::NestedTag,
            ParseError::StrayClose { .. } => ViolationCode::StrayClosingTag,
            ParseError::StrayText { .. } => ViolationCode::StrayText,
        };
        Violation {
            code,
            message: err.to_string(),
            offset: err.offset(),
        }
    }
}

/// Structural checks on a parsed trajectory: exactly one plan, no search
/// before it, exactly one answer and it is last, and every information
/// block directly follows its own search block.
pub fn validate_format(traj: &Trajectory) -> FormatReport {
    let mut violations = Vec::new();
    let steps = &traj.steps;

    let plans: Vec<usize> = (0..steps.len()).filter(|&i| steps[i].tag == Tag::Plan).collect();
    if plans.len() != 1 {
        let offset = plans.get(1).map_or(0, |&i| steps[i].block_span.start);
        violations.push(Violation {
            code: ViolationCode::PlanCount,
            message: format!("expected exactly one plan block, found {}", plans.len()),
            offset,
        });
    }
    if let Some(&first_plan) = plans.first() {
        if let Some(s) = steps[..first_plan].iter().find(|s| s.tag.is_search()) {
            violations.push(Violation {
                code: ViolationCode::PlanNotFirstAction,
                message: format!("<{}> issued before the plan", s.tag),
                offset: s.block_span.start,
            });
        }
    }

    let answers: Vec<usize> = (0..steps.len()).filter(|&i| steps[i].tag == Tag::Answer).collect();
    let answer_last = steps.last().is_some_and(|s| s.tag == Tag::Answer);
    if answers.len() != 1 || !answer_last {
        let offset = answers.first().map_or(traj.raw.len(), |&i| steps[i].block_span.start);
        violations.push(Violation {
            code: ViolationCode::AnswerCount,
            message: format!(
                "expected one trailing answer block, found {} (last step is {})",
                answers.len(),
                steps.last().map_or("none".to_string(), |s| s.tag.to_string())
            ),
            offset,
        });
    }

    for (i, s) in steps.iter().enumerate() {
        if let Some(search) = s.tag.search_for() {
            if i == 0 || steps[i - 1].tag != search {
                violations.push(Violation {
                    code: ViolationCode::OrphanInfo,
                    message: format!("<{}> is not directly preceded by <{}>", s.tag, search),
                    offset: s.block_span.start,
                });
            }
        }
    }

    FormatReport::from_violations(violations)
}

/// Parses and validates raw text; parse failures become a single violation.
pub fn check_format(text: &str, strict: bool) -> FormatReport {
    match parse_trajectory_with(text, "", ParseOptions { strict }) {
        Ok(traj) => validate_format(&traj),
        Err(err) => FormatReport::from_violations(vec![Violation::from(&err)]),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::parse_trajectory;

    const CONFORMING: &str = "<plan>S1: Ans(country | currency_of(Iranian rial, ?))</plan>\
        <relation_search>Iranian rial | currency_of</relation_search>\
        <relation_information>currency_of, issued_by</relation_information>\
        <neighbor_search>Iranian rial | currency_of</neighbor_search>\
        <neighbor_information>Iran</neighbor_information>\
        <answer>Iran</answer>";

    fn codes(text: &str) -> Vec<ViolationCode> {
        validate_format(&parse_trajectory(text, "q").unwrap()).codes()
    }

    #[test]
    fn conforming_is_valid() {
        let r = validate_format(&parse_trajectory(CONFORMING, "q").unwrap());
        assert!(r.valid);
        assert!(r.violations.is_empty());
    }

    #[test]
    fn two_plans() {
        let text = format!("<plan>a</plan>{CONFORMING}");
        assert_eq!(codes(&text), vec![ViolationCode::PlanCount]);
    }

    #[test]
    fn orphan_neighbor_information() {
        let text = "<plan>p</plan><neighbor_information>Iran</neighbor_information><answer>Iran</answer>";
        assert_eq!(codes(text), vec![ViolationCode::OrphanInfo]);
        let mismatched = "<plan>p</plan><web_search>a | b</web_search>\
            <neighbor_information>x</neighbor_information><answer>x</answer>";
        assert_eq!(codes(mismatched), vec![ViolationCode::OrphanInfo]);
    }

    #[test]
    fn search_before_plan() {
        let text = "<web_search>a | b</web_search><web_information>x</web_information>\
            <plan>p</plan><answer>x</answer>";
        assert_eq!(codes(text), vec![ViolationCode::PlanNotFirstAction]);
    }

    #[test]
    fn answer_must_be_single_and_last() {
        assert_eq!(codes("<plan>p</plan>"), vec![ViolationCode::AnswerCount]);
        assert_eq!(
            codes("<plan>p</plan><answer>a</answer><answer>b</answer>"),
            vec![ViolationCode::AnswerCount]
        );
        assert_eq!(
            codes("<plan>p</plan><answer>a</answer><think>hm</think>"),
            vec![ViolationCode::AnswerCount]
        );
    }

    #[test]
    fn empty_trajectory() {
        assert_eq!(codes(""), vec![ViolationCode::PlanCount, ViolationCode::AnswerCount]);
    }

    #[test]
    fn unparseable_text_reports_parse_violation() {
        let r = check_format("<plan>p</plan><lookup>x</lookup><answer>a</answer>", false);
        assert_eq!(r.codes(), vec![ViolationCode::UnknownTag]);
        assert!(!r.valid);
    }

    #[test]
    fn validation_is_pure() {
        let t = parse_trajectory(CONFORMING, "q").unwrap();
        assert_eq!(validate_format(&t), validate_format(&t));
    }
}
