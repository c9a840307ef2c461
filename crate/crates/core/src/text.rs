//! Whitespace helpers shared by prompt rendering, parsing and anchoring.

/// Collapses every whitespace run to a single space and trims both ends.
pub fn collapse_whitespace(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

pub fn word_count(s: &str) -> usize {
    s.split_whitespace().count()
}

/// Returns the prefix of `s` that ends with its `max_words`-th
/// whitespace-delimited word. Inputs with at most `max_words` words are
/// returned unchanged.
pub fn truncate_words(s: &str, max_words: usize) -> &str {
    if max_words == 0 {
        return "";
    }
    let mut seen = 0;
    let mut in_word = false;
    let mut word_end = 0;
    for (i, c) in s.char_indices() {
        if c.is_whitespace() {
            if in_word {
                in_word = false;
                word_end = i;
            }
        } else if !in_word {
            if seen == max_words {
                return &s[..word_end];
            }
            in_word = true;
            seen += 1;
        }
    }
    s
}

/// True if `needle` occurs in `haystack` once both are whitespace-collapsed.
pub fn contains_normalized(haystack: &str, needle: &str) -> bool {
    let needle = collapse_whitespace(needle);
    !needle.is_empty() && collapse_whitespace(haystack).contains(&needle)
}
