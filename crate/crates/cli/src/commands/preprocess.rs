use std::fs;
use std::path::PathBuf;

use anyhow::{Context, Result};
use echochamber::corpus::{
    load_raw, preprocess, save_transcript, PreprocessConfig, PreprocessStats, RawFormat,
};
use serde::Serialize;

use super::create_dir;
use crate::cli::{PreprocessArgs, RawFormatArg};
use crate::config::{write_resolved, FileConfig};

#[derive(Serialize)]
struct Settings<'a> {
    input: &'a PathBuf,
    format: &'a str,
    preprocess: &'a PreprocessConfig,
}

fn detect(args: &PreprocessArgs) -> RawFormatArg {
    args.format
        .unwrap_or_else(|| match args.input.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => RawFormatArg::Csv,
            _ => RawFormatArg::Jsonl,
        })
}

pub fn run(args: &PreprocessArgs, file: &FileConfig) -> Result<PreprocessStats> {
    let mut cfg = file.preprocess.clone();
    if let Some(n) = args.min_utterances {
        cfg.min_utterances = n;
    }
    if let Some(v) = args.max_vocab {
        cfg.max_vocab = v;
    }
    if args.no_stem {
        cfg.stem = false;
    }
    if let Some(h) = args.horizon {
        cfg.horizon = h;
    }
    cfg.validate()?;
    let (format, name) = match detect(args) {
        RawFormatArg::Jsonl => (RawFormat::Jsonl, "jsonl"),
        RawFormatArg::Csv => (RawFormat::Csv, "csv"),
    };

    let turns = load_raw(&args.input, format)?;
    let out = preprocess(&turns, &cfg)?;
    create_dir(&args.out)?;
    save_transcript(&out.transcript, &args.out.join("transcript.json"))?;
    let stats_path = args.out.join("stats.json");
    fs::write(
        &stats_path,
        serde_json::to_string_pretty(&out.stats)? + "\n",
    )
    .with_context(|| format!("writing {}", stats_path.display()))?;
    write_resolved(
        &args.out,
        "preprocess",
        &Settings {
            input: &args.input,
            format: name,
            preprocess: &cfg,
        },
    )?;
    Ok(out.stats)
}
