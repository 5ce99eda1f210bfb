use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use echochamber::corpus::load_transcript;
use echochamber::eval::{
    compare_table, heldout_log_prob_threaded, load_external_scores, make_split, EvalReport,
};
use echochamber::sampler::Model;
use echochamber::Error;
use serde::Serialize;

use super::{create_dir, pool};
use crate::cli::EvaluateArgs;
use crate::config::write_resolved_as;

pub const EXTERNAL_FILE: &str = "external.csv";

#[derive(Serialize)]
struct Settings<'a> {
    transcript: &'a PathBuf,
    chains: &'a [PathBuf],
    model: Model,
    fitted_model: Model,
    fraction: f64,
    dataset: &'a str,
    t_star: f64,
    threads: usize,
}

fn file_safe(s: &str) -> String {
    s.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '.' || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// Reports already present in `dir`, in file-name order.
fn existing_reports(dir: &Path) -> Result<Vec<EvalReport>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
            name.starts_with("report-") && name.ends_with(".json")
        })
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            Ok(serde_json::from_str(&text).map_err(Error::from)?)
        })
        .collect()
}

pub fn run(args: &EvaluateArgs) -> Result<EvalReport> {
    let transcript = load_transcript(&args.transcript)?;
    let pooled = pool(&args.chains)?;
    let model = args.model.map(Model::from).unwrap_or(pooled.model);
    if transcript.persons() != pooled.persons.as_slice() {
        return Err(Error::Data(
            "chains were fitted on a transcript with different persons".into(),
        )
        .into());
    }
    let fraction = match (args.fraction, pooled.train_fraction) {
        (Some(a), Some(b)) if (a - b).abs() > 1e-12 => {
            return Err(Error::Usage(format!(
                "chains were fitted with test fraction {b}, not {a}"
            ))
            .into())
        }
        (_, Some(b)) => b,
        (Some(_), None) | (None, None) => return Err(Error::Usage(
            "chains were fitted on the whole transcript; refit with --train-fraction to evaluate"
                .into(),
        )
        .into()),
    };
    let dataset = args.dataset.clone().unwrap_or_else(|| {
        args.transcript
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("dataset")
            .to_owned()
    });

    let split = make_split(&transcript, fraction)?;
    let mut report = heldout_log_prob_threaded(model, &pooled.draws, &split, args.threads)?;
    report.dataset = dataset.clone();

    create_dir(&args.out)?;
    let stem = format!("report-{}-{}-{}", file_safe(&dataset), model, fraction);
    let path = args.out.join(format!("{stem}.json"));
    fs::write(&path, serde_json::to_string_pretty(&report)? + "\n")
        .with_context(|| format!("writing {}", path.display()))?;
    write_resolved_as(
        &args.out,
        &format!("{stem}.config.toml"),
        "evaluate",
        &Settings {
            transcript: &args.transcript,
            chains: &args.chains,
            model,
            fitted_model: pooled.model,
            fraction,
            dataset: &dataset,
            t_star: split.t_star,
            threads: args.threads,
        },
    )?;

    let external_copy = args.out.join(EXTERNAL_FILE);
    if let Some(ext) = &args.external {
        load_external_scores(ext)?;
        if ext.canonicalize().ok() != external_copy.canonicalize().ok() {
            fs::copy(ext, &external_copy).with_context(|| format!("copying {}", ext.display()))?;
        }
    }
    let external = if external_copy.is_file() {
        load_external_scores(&external_copy)?
    } else {
        Vec::new()
    };
    let table = compare_table(&existing_reports(&args.out)?, &external);
    for (name, body) in [
        ("comparison.md", table.to_markdown()),
        ("comparison.csv", table.to_csv()),
    ] {
        let p = args.out.join(name);
        fs::write(&p, body).with_context(|| format!("writing {}", p.display()))?;
    }
    println!(
        "{dataset} {model} test fraction {fraction}: {:.2} ± {:.2} over {} draws",
        report.mean, report.sd, report.draws
    );
    Ok(report)
}
