//! Text normalization shared by alias matching, answer parsing and reward
//! containment checks.

/// Lowercase, trim, collapse internal whitespace and strip surrounding
/// punctuation.
pub fn normalize(text: &str) -> String {
    let collapsed = text
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase();
    collapsed
        .trim_matches(|c: char| is_punctuation(c) || c.is_whitespace())
        .to_string()
}

fn is_punctuation(c: char) -> bool {
    c.is_ascii_punctuation()
        || matches!(
            c,
            '\u{2018}' | '\u{2019}' | '\u{201C}' | '\u{201D}' | '\u{00AB}' | '\u{00BB}' | '\u{2026}'
        )
}

/// Split on anything that is not alphanumeric and lowercase the pieces.
pub fn word_tokens(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Entity identifier to its default surface text (`Iranian_rial` -> `Iranian rial`).
pub fn label_from_id(id: &str) -> String {
    id.replace('_', " ")
}

/// Word-bounded phrase test: every token of `needle` appears contiguously in
/// `haystack`'s token stream.
pub fn contains_phrase(haystack: &str, needle: &str) -> bool {
    let hay = word_tokens(haystack);
    let pat = word_tokens(needle);
    if pat.is_empty() {
        return false;
    }
    hay.windows(pat.len()).any(|w| w == pat.as_slice())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalize_collapses_and_strips() {
        assert_eq!(normalize("  The   Islamic Republic of Iran. "), "the islamic republic of iran");
        assert_eq!(normalize("\"Harold Ramis\""), "harold ramis");
        assert_eq!(normalize("Anni-Frid"), "anni-frid");
        assert_eq!(normalize("..."), "");
    }

    #[test]
    fn normalize_is_idempotent() {
        for s in ["  A  b ", "«Tokyo»", "x.y_z", ""] {
            let once = normalize(s);
            assert_eq!(normalize(&once), once);
        }
    }

    #[test]
    fn phrase_respects_word_boundaries() {
        assert!(contains_phrase("The Iranian rial is the currency of Iran.", "Iran"));
        assert!(!contains_phrase("The Iranian rial", "Iran"));
        assert!(contains_phrase("a national of the United Kingdom", "united kingdom"));
    }
}
