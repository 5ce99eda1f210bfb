//! Transcript data model, preprocessing pipeline and transcript file I/O.
//!
//! Times inside a [`Transcript`] are dimensionless and, after
//! [`preprocess`], lie in `(0, horizon]`. An utterance influences others only
//! once it has ended, so both start and end times are kept.

mod io;
mod preprocess;
mod text;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hawkes::EventTimes;

pub use io::{load_raw, load_transcript, save_transcript, RawFormat, TRANSCRIPT_VERSION};
pub use preprocess::{
    build_vocabulary, preprocess, PreprocessConfig, PreprocessStats, Preprocessed, TimeMap,
    VocabularyBuild,
};
pub use text::Normalizer;

/// Horizon used by every dataset after rescaling.
pub const DEFAULT_HORIZON: f64 = 100.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Utterance {
    pub person: usize,
    pub start: f64,
    pub duration: f64,
    pub tokens: Vec<u32>,
}

impl Utterance {
    #[inline]
    pub fn end(&self) -> f64 {
        self.start + self.duration
    }
}

/// Word types sorted by descending corpus frequency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vocabulary {
    pub types: Vec<String>,
    pub counts: Vec<u64>,
}

impl Vocabulary {
    pub fn len(&self) -> usize {
        self.types.len()
    }

    pub fn is_empty(&self) -> bool {
        self.types.is_empty()
    }

    /// Synthetic vocabulary `w0, w1, ...` with zero counts.
    pub fn synthetic(size: usize) -> Self {
        Self {
            types: (0..size).map(|v| format!("w{v}")).collect(),
            counts: vec![0; size],
        }
    }

    pub fn index(&self) -> HashMap<&str, u32> {
        self.types
            .iter()
            .enumerate()
            .map(|(i, t)| (t.as_str(), i as u32))
            .collect()
    }
}

/// Raw utterance text, either free text or already tokenized.
#[derive(Debug, Clone, PartialEq)]
pub enum RawText {
    Text(String),
    Tokens(Vec<String>),
}

/// One ingested turn before preprocessing.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTurn {
    pub speaker: String,
    pub start: f64,
    pub duration: Option<f64>,
    pub text: RawText,
}

/// A preprocessed multi-party transcript.
#[derive(Debug, Clone, PartialEq)]
pub struct Transcript {
    utterances: Vec<Utterance>,
    persons: Vec<String>,
    vocabulary: Vocabulary,
    horizon: f64,
}

impl Transcript {
    /// Builds a transcript, checking structural invariants. Utterances are
    /// reordered by `(start, person)`.
    pub fn new(
        mut utterances: Vec<Utterance>,
        persons: Vec<String>,
        vocabulary: Vocabulary,
        horizon: f64,
    ) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::Data(format!(
                "horizon must be positive, got {horizon}"
            )));
        }
        if persons.is_empty() {
            return Err(Error::Data("transcript has no persons".into()));
        }
        let v = vocabulary.len();
        if vocabulary.counts.len() != v {
            return Err(Error::Data(
                "vocabulary counts/types length mismatch".into(),
            ));
        }
        for (i, u) in utterances.iter().enumerate() {
            if u.person >= persons.len() {
                return Err(Error::Data(format!(
                    "utterance {i}: person {} out of range",
                    u.person
                )));
            }
            if !u.start.is_finite() || !u.duration.is_finite() || u.duration < 0.0 {
                return Err(Error::Data(format!(
                    "utterance {i}: invalid start/duration"
                )));
            }
            if !u.end().is_finite() {
                return Err(Error::Data(format!("utterance {i}: end time overflows")));
            }
            if u.tokens.is_empty() {
                return Err(Error::Data(format!("utterance {i}: no tokens")));
            }
            if let Some(&t) = u.tokens.iter().find(|&&t| t as usize >= v) {
                return Err(Error::Data(format!(
                    "utterance {i}: token {t} outside vocabulary of {v}"
                )));
            }
        }
        utterances.sort_by(|a, b| a.start.total_cmp(&b.start).then(a.person.cmp(&b.person)));
        Ok(Self {
            utterances,
            persons,
            vocabulary,
            horizon,
        })
    }

    pub fn utterances(&self) -> &[Utterance] {
        &self.utterances
    }

    pub fn persons(&self) -> &[String] {
        &self.persons
    }

    pub fn num_persons(&self) -> usize {
        self.persons.len()
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocabulary
    }

    pub fn vocab_size(&self) -> usize {
        self.vocabulary.len()
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn num_tokens(&self) -> usize {
        self.utterances.iter().map(|u| u.tokens.len()).sum()
    }

    /// Number of utterances per person.
    pub fn counts_per_person(&self) -> Vec<usize> {
        let mut c = vec![0; self.persons.len()];
        for u in &self.utterances {
            c[u.person] += 1;
        }
        c
    }

    /// Keeps the utterances for which `keep` returns true; persons and
    /// vocabulary are unchanged.
    pub fn filtered(&self, mut keep: impl FnMut(&Utterance) -> bool) -> Transcript {
        Transcript {
            utterances: self
                .utterances
                .iter()
                .filter(|u| keep(u))
                .cloned()
                .collect(),
            persons: self.persons.clone(),
            vocabulary: self.vocabulary.clone(),
            horizon: self.horizon,
        }
    }

    /// Start/end pairs per person, for the turn-taking model.
    pub fn events(&self) -> EventTimes {
        let mut per = vec![Vec::new(); self.persons.len()];
        for u in &self.utterances {
            per[u.person].push((u.start, u.end()));
        }
        EventTimes::new(per, self.horizon).expect("transcript times are already validated")
    }

    /// Fails unless every person speaks at least once and there are two or more persons.
    pub fn check_all_persons_present(&self) -> Result<()> {
        if self.persons.len() < 2 {
            return Err(Error::Data("need at least two persons".into()));
        }
        if let Some(p) = self.counts_per_person().iter().position(|&c| c == 0) {
            return Err(Error::Data(format!(
                "person {} never speaks",
                self.persons[p]
            )));
        }
        Ok(())
    }
}
