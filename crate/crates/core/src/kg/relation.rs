use std::cmp::Ordering;
use std::collections::BTreeSet;

/// Number of candidate relations returned by relation search unless configured.
pub const DEFAULT_TOP_K_RELATIONS: usize = 15;

/// Similarity between a hypothesized relation and a relation name.
/// Higher is more similar.
pub trait RelationScorer: Send + Sync {
    fn score(&self, hypothesis: &str, relation: &str) -> f64;
}

/// Jaccard overlap of lowercase word tokens, splitting on `.`, `_` and whitespace.
#[derive(Debug, Clone, Copy, Default)]
pub struct TokenJaccard;

fn relation_tokens(text: &str) -> BTreeSet<String> {
    text.split(|c: char| c == '.' || c == '_' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

impl RelationScorer for TokenJaccard {
    fn score(&self, hypothesis: &str, relation: &str) -> f64 {
        let a = relation_tokens(hypothesis);
        let b = relation_tokens(relation);
        let union = a.union(&b).count();
        if union == 0 {
            return 0.0;
        }
        a.intersection(&b).count() as f64 / union as f64
    }
}

/// Sorts candidates by score (descending), then edit distance to the
/// hypothesis, then name; keeps the first `k`.
pub fn rank_relations<'a>(
    scorer: &dyn RelationScorer,
    hypothesis: &str,
    candidates: impl IntoIterator<Item = &'a str>,
    k: usize,
) -> Vec<String> {
    let hyp = hypothesis.trim().to_lowercase();
    let mut scored: Vec<(f64, usize, &str)> = candidates
        .into_iter()
        .map(|r| {
            (
                scorer.score(hypothesis, r),
                strsim::levenshtein(&hyp, &r.to_lowercase()),
                r,
            )
        })
        .collect();
    scored.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .unwrap_or(Ordering::Equal)
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(b.2))
    });
    scored.into_iter().take(k).map(|(_, _, r)| r.to_string()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jaccard_on_dotted_names() {
        let s = TokenJaccard.score("used in country", "location.country.currency_used");
        // {used, in, country} vs {location, country, currency, used}: 2 / 5
        assert!((s - 0.4).abs() < 1e-12);
        assert_eq!(TokenJaccard.score("", ""), 0.0);
        assert_eq!(TokenJaccard.score("currency_of", "currency of"), 1.0);
    }

    #[test]
    fn ties_fall_back_to_edit_distance_then_name() {
        // both score 0 against the hypothesis
        let ranked = rank_relations(&TokenJaccard, "zzz", ["bbbb", "aaaa", "zz"], 3);
        assert_eq!(ranked, vec!["zz", "aaaa", "bbbb"]);
    }

    #[test]
    fn truncates_to_k() {
        let ranked = rank_relations(&TokenJaccard, "x", ["a", "b", "c"], 2);
        assert_eq!(ranked.len(), 2);
    }
}
