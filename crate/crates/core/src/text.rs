//! Headline normalization shared by the tf-idf vectorizer and the encoder vocabulary.

/// Lowercases, drops punctuation and splits on whitespace.
pub fn normalize_tokens(headline: &str) -> Vec<String> {
    headline
        .chars()
        .filter(|c| c.is_alphanumeric() || c.is_whitespace())
        .collect::<String>()
        .to_lowercase()
        .split_whitespace()
        .map(str::to_string)
        .collect()
}
