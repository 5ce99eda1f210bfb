use rust_stemmers::{Algorithm, Stemmer};

/// Lowercases, strips every non-alphanumeric character and optionally stems.
pub struct Normalizer {
    stemmer: Option<Stemmer>,
}

impl Normalizer {
    pub fn new(stem: bool) -> Self {
        Self {
            stemmer: stem.then(|| Stemmer::create(Algorithm::English)),
        }
    }

    /// Normalizes a single word; returns `None` if nothing alphanumeric is left.
    pub fn word(&self, raw: &str) -> Option<String> {
        let cleaned: String = raw
            .chars()
            .filter(|c| c.is_alphanumeric())
            .flat_map(char::to_lowercase)
            .collect();
        if cleaned.is_empty() {
            return None;
        }
        Some(match &self.stemmer {
            Some(s) => s.stem(&cleaned).into_owned(),
            None => cleaned,
        })
    }

    pub fn text(&self, raw: &str) -> Vec<String> {
        raw.split_whitespace()
            .filter_map(|w| self.word(w))
            .collect()
    }
}
