use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{RawText, RawTurn, Transcript, Utterance, Vocabulary};
use crate::error::{Error, Result};

pub const TRANSCRIPT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RawFormat {
    Jsonl,
    Csv,
}

impl FromStr for RawFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "jsonl" => Ok(RawFormat::Jsonl),
            "csv" => Ok(RawFormat::Csv),
            other => Err(Error::Usage(format!(
                "unknown raw format `{other}` (expected jsonl or csv)"
            ))),
        }
    }
}

/// Reads raw turns in file order.
pub fn load_raw(path: &Path, format: RawFormat) -> Result<Vec<RawTurn>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    match format {
        RawFormat::Jsonl => load_jsonl(path, BufReader::new(file)),
        RawFormat::Csv => load_csv(path, file),
    }
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn load_jsonl(path: &Path, reader: impl BufRead) -> Result<Vec<RawTurn>> {
    let mut turns = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let value: Value =
            serde_json::from_str(&line).map_err(|e| parse_err(path, lineno, e.to_string()))?;
        let obj = value
            .as_object()
            .ok_or_else(|| parse_err(path, lineno, "record is not a JSON object"))?;
        let speaker = obj
            .get("speaker")
            .and_then(Value::as_str)
            .ok_or_else(|| parse_err(path, lineno, "missing string field `speaker`"))?
            .to_owned();
        let start = obj
            .get("start")
            .and_then(Value::as_f64)
            .ok_or_else(|| parse_err(path, lineno, "missing numeric field `start`"))?;
        let duration = match obj.get("duration") {
            None | Some(Value::Null) => None,
            Some(v) => Some(
                v.as_f64()
                    .ok_or_else(|| parse_err(path, lineno, "`duration` is not a number"))?,
            ),
        };
        let text = match (obj.get("text"), obj.get("tokens")) {
            (Some(Value::String(s)), _) => RawText::Text(s.clone()),
            (_, Some(Value::Array(items))) => RawText::Tokens(
                items
                    .iter()
                    .map(|t| t.as_str().map(str::to_owned))
                    .collect::<Option<Vec<_>>>()
                    .ok_or_else(|| {
                        parse_err(path, lineno, "`tokens` must be an array of strings")
                    })?,
            ),
            _ => {
                return Err(parse_err(
                    path,
                    lineno,
                    "need string `text` or array `tokens`",
                ))
            }
        };
        turns.push(check_turn(path, lineno, speaker, start, duration, text)?);
    }
    Ok(turns)
}

fn check_turn(
    path: &Path,
    line: usize,
    speaker: String,
    start: f64,
    duration: Option<f64>,
    text: RawText,
) -> Result<RawTurn> {
    if !start.is_finite() {
        return Err(parse_err(path, line, "`start` is not finite"));
    }
    if let Some(d) = duration {
        if !(d.is_finite() && d >= 0.0) {
            return Err(parse_err(
                path,
                line,
                "`duration` must be finite and non-negative",
            ));
        }
    }
    let empty = match &text {
        RawText::Text(s) => s.trim().is_empty(),
        RawText::Tokens(t) => t.is_empty(),
    };
    if empty {
        return Err(parse_err(path, line, "empty text"));
    }
    Ok(RawTurn {
        speaker,
        start,
        duration,
        text,
    })
}

#[derive(Deserialize)]
struct CsvRow {
    speaker: String,
    start: f64,
    duration: Option<f64>,
    text: String,
}

fn load_csv(path: &Path, file: fs::File) -> Result<Vec<RawTurn>> {
    let mut rdr = csv::Reader::from_reader(file);
    let headers = rdr
        .headers()
        .map_err(|e| parse_err(path, 1, e.to_string()))?
        .clone();
    let expected = ["speaker", "start", "duration", "text"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(parse_err(
            path,
            1,
            "header must be `speaker,start,duration,text`",
        ));
    }
    let mut turns = Vec::new();
    for row in rdr.deserialize::<CsvRow>() {
        let row = row.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            parse_err(path, line, e.to_string())
        })?;
        let line = turns.len() + 2;
        turns.push(check_turn(
            path,
            line,
            row.speaker,
            row.start,
            row.duration,
            RawText::Text(row.text),
        )?);
    }
    Ok(turns)
}

#[derive(Serialize, Deserialize)]
struct TranscriptFile {
    version: u32,
    persons: Vec<String>,
    vocabulary: Vocabulary,
    horizon: f64,
    utterances: Vec<Utterance>,
}

pub fn save_transcript(t: &Transcript, path: &Path) -> Result<()> {
    if t.utterances().is_empty() {
        return Err(Error::Data(
            "refusing to save a transcript with no utterances".into(),
        ));
    }
    let file = TranscriptFile {
        version: TRANSCRIPT_VERSION,
        persons: t.persons().to_vec(),
        vocabulary: t.vocabulary().clone(),
        horizon: t.horizon(),
        utterances: t.utterances().to_vec(),
    };
    let f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    serde_json::to_writer(&mut w, &file)?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_transcript(path: &Path) -> Result<Transcript> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let probe: Value = serde_json::from_slice(&bytes)?;
    let version = probe.get("version").and_then(Value::as_u64).unwrap_or(0) as u32;
    if version != TRANSCRIPT_VERSION {
        return Err(Error::SchemaVersion {
            found: version,
            expected: TRANSCRIPT_VERSION,
        });
    }
    let file: TranscriptFile = serde_json::from_value(probe)?;
    Transcript::new(file.utterances, file.persons, file.vocabulary, file.horizon)
}
