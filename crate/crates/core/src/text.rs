//! Text normalization used for uniqueness and answer equality.

/// Case-folds and collapses runs of whitespace to single spaces.
pub fn normalize_lemma(text: &str) -> String {
    text.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

fn is_terminal_punctuation(c: char) -> bool {
    c.is_ascii_punctuation() || matches!(c, '。' | '؟' | '،' | '؛' | '۔' | '…' | '！' | '？')
}

/// [`normalize_lemma`] plus stripping of trailing punctuation.
pub fn normalize_gloss(text: &str) -> String {
    let folded = normalize_lemma(text);
    folded
        .trim_end_matches(|c: char| is_terminal_punctuation(c) || c.is_whitespace())
        .to_string()
}
