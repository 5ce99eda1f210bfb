use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::text::Normalizer;
use super::{RawText, RawTurn, Transcript, Utterance, Vocabulary, DEFAULT_HORIZON};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessConfig {
    /// Persons with fewer post-merge utterances are dropped.
    pub min_utterances: usize,
    pub max_vocab: usize,
    pub stem: bool,
    pub horizon: f64,
    /// Fraction of the horizon filled by speech when durations are synthesized.
    pub busy_fraction: f64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            min_utterances: 10,
            max_vocab: 600,
            stem: true,
            horizon: DEFAULT_HORIZON,
            busy_fraction: 0.5,
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_vocab == 0 {
            return Err(Error::Usage("max_vocab must be at least 1".into()));
        }
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(Error::Usage("horizon must be positive".into()));
        }
        if !(self.busy_fraction > 0.0 && self.busy_fraction <= 1.0) {
            return Err(Error::Usage("busy_fraction must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessStats {
    pub persons: usize,
    pub utterances: usize,
    pub tokens: usize,
    /// Fraction of tokens discarded by the vocabulary restriction.
    pub tokens_removed: f64,
    pub synthetic_durations: bool,
}

#[derive(Debug, Clone)]
pub struct Preprocessed {
    pub transcript: Transcript,
    pub stats: PreprocessStats,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VocabularyBuild {
    pub vocabulary: Vocabulary,
    pub removed_fraction: f64,
}

/// Keeps the `v_max` most frequent types, breaking count ties lexicographically.
pub fn build_vocabulary<'a, I>(tokens: I, v_max: usize) -> Result<VocabularyBuild>
where
    I: IntoIterator<Item = &'a str>,
{
    if v_max == 0 {
        return Err(Error::Usage("v_max must be at least 1".into()));
    }
    let mut counts: HashMap<&str, u64> = HashMap::new();
    let mut total = 0u64;
    for t in tokens {
        *counts.entry(t).or_default() += 1;
        total += 1;
    }
    if total == 0 {
        return Err(Error::Preprocess(
            "cannot build a vocabulary from zero tokens".into(),
        ));
    }
    let mut ranked: Vec<(&str, u64)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    ranked.truncate(v_max);
    let kept: u64 = ranked.iter().map(|(_, c)| c).sum();
    Ok(VocabularyBuild {
        vocabulary: Vocabulary {
            types: ranked.iter().map(|(t, _)| (*t).to_owned()).collect(),
            counts: ranked.iter().map(|(_, c)| *c).collect(),
        },
        removed_fraction: 1.0 - kept as f64 / total as f64,
    })
}

/// Affine map of source times onto `(0, horizon]`; the latest start maps to
/// the horizon exactly and the earliest start lands one average gap above zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeMap {
    t_min: f64,
    span: f64,
    eps: f64,
    horizon: f64,
}

impl TimeMap {
    pub fn fit(starts: &[f64], horizon: f64) -> Self {
        let t_min = starts.iter().copied().fold(f64::INFINITY, f64::min);
        let t_max = starts.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let span = if starts.is_empty() {
            0.0
        } else {
            t_max - t_min
        };
        let eps = if starts.is_empty() {
            0.0
        } else {
            span / starts.len() as f64
        };
        Self {
            t_min,
            span,
            eps,
            horizon,
        }
    }

    pub fn apply(&self, t: f64) -> f64 {
        if self.span == 0.0 {
            return self.horizon + (t - self.t_min);
        }
        self.horizon * (((t - self.t_min) + self.eps) / (self.span + self.eps))
    }

    /// Multiplier applied to durations.
    pub fn scale(&self) -> f64 {
        if self.span == 0.0 {
            1.0
        } else {
            self.horizon / (self.span + self.eps)
        }
    }
}

#[derive(Debug, Clone)]
struct Turn {
    speaker: String,
    start: f64,
    end: Option<f64>,
    words: Vec<String>,
}

/// Concatenates consecutive turns by the same speaker.
fn merge_consecutive(turns: Vec<Turn>) -> Vec<Turn> {
    let mut out: Vec<Turn> = Vec::with_capacity(turns.len());
    for t in turns {
        match out.last_mut() {
            Some(last) if last.speaker == t.speaker => {
                last.words.extend(t.words);
                last.end = match (last.end, t.end) {
                    (Some(_), Some(e)) => Some(e),
                    _ => None,
                };
            }
            _ => out.push(t),
        }
    }
    out
}

fn drop_rare_speakers(turns: Vec<Turn>, min: usize) -> Vec<Turn> {
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in &turns {
        *counts.entry(t.speaker.as_str()).or_default() += 1;
    }
    let keep: HashSet<String> = counts
        .into_iter()
        .filter(|&(_, c)| c >= min)
        .map(|(s, _)| s.to_owned())
        .collect();
    turns
        .into_iter()
        .filter(|t| keep.contains(&t.speaker))
        .collect()
}

/// Runs the full preprocessing pipeline on raw turns given in time order.
pub fn preprocess(turns: &[RawTurn], cfg: &PreprocessConfig) -> Result<Preprocessed> {
    cfg.validate()?;
    let with_dur = turns.iter().filter(|t| t.duration.is_some()).count();
    if with_dur != 0 && with_dur != turns.len() {
        return Err(Error::Data(format!(
            "{with_dur} of {} turns carry durations; durations must be all present or all absent",
            turns.len()
        )));
    }
    let synthetic_durations = with_dur == 0;

    let norm = Normalizer::new(cfg.stem);
    let mut work: Vec<Turn> = turns
        .iter()
        .map(|t| Turn {
            speaker: t.speaker.clone(),
            start: t.start,
            end: t.duration.map(|d| t.start + d),
            words: match &t.text {
                RawText::Text(s) => norm.text(s),
                RawText::Tokens(ws) => ws.iter().filter_map(|w| norm.word(w)).collect(),
            },
        })
        .collect();

    // Merging, speaker filtering and vocabulary restriction interact (removing
    // a speaker or an emptied utterance can make neighbours mergeable), so the
    // three are iterated until nothing changes. Each pass that changes anything
    // removes at least one turn, so this terminates.
    let (vocab_build, utter_words) = loop {
        let before = work.len();
        work = merge_consecutive(work);
        work = drop_rare_speakers(work, cfg.min_utterances);
        let build = build_vocabulary(
            work.iter().flat_map(|t| t.words.iter().map(String::as_str)),
            cfg.max_vocab,
        )
        .map_err(|e| match e {
            Error::Preprocess(_) => Error::Preprocess("no tokens left after filtering".into()),
            e => e,
        })?;
        let index = build.vocabulary.index();
        let mapped: Vec<Vec<u32>> = work
            .iter()
            .map(|t| {
                t.words
                    .iter()
                    .filter_map(|w| index.get(w.as_str()).copied())
                    .collect()
            })
            .collect();
        let nonempty = mapped.iter().all(|m| !m.is_empty());
        if nonempty && work.len() == before {
            break (build, mapped);
        }
        work = work
            .into_iter()
            .zip(mapped)
            .filter(|(_, m)| !m.is_empty())
            .map(|(t, _)| t)
            .collect();
    };

    if let Some(w) = work.windows(2).find(|w| w[1].start < w[0].start) {
        return Err(Error::Data(format!(
            "merged turn times are not monotone ({} then {})",
            w[0].start, w[1].start
        )));
    }

    let mut persons: Vec<String> = Vec::new();
    let mut person_index: HashMap<&str, usize> = HashMap::new();
    for t in &work {
        if !person_index.contains_key(t.speaker.as_str()) {
            person_index.insert(t.speaker.as_str(), persons.len());
            persons.push(t.speaker.clone());
        }
    }
    if persons.len() < 2 {
        return Err(Error::Preprocess(format!(
            "{} person(s) survive filtering; at least two are required",
            persons.len()
        )));
    }

    let starts: Vec<f64> = work.iter().map(|t| t.start).collect();
    let map = TimeMap::fit(&starts, cfg.horizon);
    let total_tokens: usize = utter_words.iter().map(Vec::len).sum();
    let per_token = cfg.busy_fraction * cfg.horizon / total_tokens as f64;

    let utterances: Vec<Utterance> = work
        .iter()
        .zip(utter_words)
        .map(|(t, tokens)| {
            let duration = match t.end {
                Some(end) if !synthetic_durations => (end - t.start).max(0.0) * map.scale(),
                _ => per_token * tokens.len() as f64,
            };
            Utterance {
                person: person_index[t.speaker.as_str()],
                start: map.apply(t.start),
                duration,
                tokens,
            }
        })
        .collect();

    let stats = PreprocessStats {
        persons: persons.len(),
        utterances: utterances.len(),
        tokens: total_tokens,
        tokens_removed: vocab_build.removed_fraction,
        synthetic_durations,
    };
    let transcript = Transcript::new(utterances, persons, vocab_build.vocabulary, cfg.horizon)?;
    Ok(Preprocessed { transcript, stats })
}
