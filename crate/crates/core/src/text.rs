//! Rule-based sentence segmentation and tokenization.
//!
//! A boundary is placed after a run of `.`, `!` or `?` when the run is
//! followed by the end of the text, or by whitespace and then an uppercase
//! letter. A period between two digits is never followed by whitespace, so
//! decimals such as `5.50` never split.

use std::collections::HashSet;

/// Default English stopword list, one word per line.
pub const DEFAULT_STOPWORDS: &str = include_str!("../data/stopwords_en.txt");

fn is_terminator(c: char) -> bool {
    matches!(c, '.' | '!' | '?')
}

/// Split `text` into sentences. Whitespace-only text yields no segments.
pub fn segment_sentences(text: &str) -> Vec<String> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut out = Vec::new();
    let mut start = 0usize;
    let mut i = 0usize;
    while i < chars.len() {
        if !is_terminator(chars[i].1) {
            i += 1;
            continue;
        }
        let mut j = i;
        while j < chars.len() && is_terminator(chars[j].1) {
            j += 1;
        }
        let end_byte = if j < chars.len() { chars[j].0 } else { text.len() };
        let mut k = j;
        while k < chars.len() && chars[k].1.is_whitespace() {
            k += 1;
        }
        let boundary = k == chars.len() || (k > j && chars[k].1.is_uppercase());
        if boundary {
            push_segment(&mut out, &text[start..end_byte]);
            start = end_byte;
        }
        i = j;
    }
    push_segment(&mut out, &text[start..]);
    out
}

fn push_segment(out: &mut Vec<String>, raw: &str) {
    let trimmed = raw.trim();
    if !trimmed.is_empty() {
        out.push(trimmed.to_string());
    }
}

/// Lowercase, split on non-alphanumeric characters, keep tokens of length >= 2.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| t.chars().count() >= 2)
        .map(str::to_lowercase)
        .collect()
}

/// Parse a stopword file: one word per line, `#` starts a comment.
pub fn parse_stopwords(contents: &str) -> HashSet<String> {
    contents
        .lines()
        .map(|l| l.split('#').next().unwrap_or("").trim().to_lowercase())
        .filter(|l| !l.is_empty())
        .collect()
}

pub fn default_stopwords() -> HashSet<String> {
    parse_stopwords(DEFAULT_STOPWORDS)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_on_period_boundary() {
        assert_eq!(
            segment_sentences("Great taste. Bad smell."),
            vec!["Great taste.", "Bad smell."]
        );
    }

    #[test]
    fn single_segment_without_punctuation() {
        assert_eq!(
            segment_sentences("No punctuation here"),
            vec!["No punctuation here"]
        );
    }

    #[test]
    fn decimal_point_does_not_split() {
        // Rule trace: '.' at "5.50" is followed by '5' (not whitespace) so no
        // boundary; '!' is followed by " W" (uppercase) so boundary; '?' is
        // followed by end of text so boundary.
        assert_eq!(
            segment_sentences("Cost $5.50 today! Worth it?"),
            vec!["Cost $5.50 today!", "Worth it?"]
        );
    }

    #[test]
    fn whitespace_only_is_empty() {
        assert!(segment_sentences("   \n\t ").is_empty());
        assert!(segment_sentences("").is_empty());
    }

    #[test]
    fn lowercase_continuation_does_not_split() {
        assert_eq!(segment_sentences("ok. fine then"), vec!["ok. fine then"]);
    }

    #[test]
    fn terminator_runs_stay_together() {
        assert_eq!(
            segment_sentences("Wow!!! Really?! Yes..."),
            vec!["Wow!!!", "Really?!", "Yes..."]
        );
    }

    #[test]
    fn tokenizer_rules() {
        assert_eq!(
            tokenize("A Dark-brown beer, 5% ABV; I'd rate it 4/5"),
            vec!["dark", "brown", "beer", "abv", "rate", "it"]
        );
    }

    #[test]
    fn stopword_file_parsing() {
        let set = parse_stopwords("the\n# comment\n And \n\n");
        assert_eq!(set.len(), 2);
        assert!(set.contains("and"));
        assert!(default_stopwords().contains("the"));
    }

    proptest::proptest! {
        #[test]
        fn segments_cover_non_whitespace(text in "[a-zA-Z0-9 .!?$]{0,80}") {
            let segs = segment_sentences(&text);
            for s in &segs {
                proptest::prop_assert!(!s.trim().is_empty());
            }
            let strip = |s: &str| s.chars().filter(|c| !c.is_whitespace()).collect::<String>();
            proptest::prop_assert_eq!(strip(&segs.concat()), strip(&text));
        }
    }
}
