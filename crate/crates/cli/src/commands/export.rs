use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use echochamber::network::{
    aggregate, draw_matrices, export, summarize, ExportFormat, InfluenceSummary, MatrixKind,
};
use echochamber::Error;
use serde::{Deserialize, Serialize};

use super::{create_dir, pool};
use crate::cli::{ExportArgs, FormatArg, MatrixArg};
use crate::config::{write_resolved, FileConfig};

/// Meeting groups to aggregate, e.g.
///
/// ```toml
/// [[group]]
/// name = "early"
/// runs = ["fits/m1", "fits/m2"]
/// ```
///
/// Relative run paths are resolved against the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub group: Vec<Group>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Group {
    pub name: String,
    pub runs: Vec<PathBuf>,
}

#[derive(Serialize)]
struct Settings<'a> {
    chains: &'a [PathBuf],
    manifest: Option<&'a PathBuf>,
    formats: Vec<&'static str>,
    threshold: f64,
    matrix: &'static str,
    levels: &'a [f64],
}

fn load_manifest(path: &Path) -> Result<Manifest> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Usage(format!("cannot read manifest {}: {e}", path.display())))?;
    let mut m: Manifest = toml::from_str(&text)
        .map_err(|e| Error::Usage(format!("manifest {}: {e}", path.display())))?;
    if m.group.is_empty() {
        return Err(Error::Usage("manifest lists no groups".into()).into());
    }
    let base = path.parent().unwrap_or(Path::new(""));
    for g in &mut m.group {
        if g.runs.is_empty() {
            return Err(Error::Usage(format!("group `{}` lists no runs", g.name)).into());
        }
        if g.name.is_empty() || g.name.contains(['/', '\\']) {
            return Err(Error::Usage(format!(
                "group name `{}` cannot be used as a file name",
                g.name
            ))
            .into());
        }
        for r in &mut g.runs {
            if r.is_relative() {
                *r = base.join(&*r);
            }
        }
    }
    Ok(m)
}

fn summary_of(
    inputs: &[PathBuf],
    matrix: Option<MatrixKind>,
    levels: &[f64],
) -> Result<(InfluenceSummary, MatrixKind)> {
    let pooled = pool(inputs)?;
    let kind = matrix.unwrap_or(if pooled.model.uses_words() {
        MatrixKind::Words
    } else {
        MatrixKind::Times
    });
    let mats = draw_matrices(&pooled.draws, kind)?;
    Ok((summarize(&pooled.persons, &mats, levels)?, kind))
}

fn write_all(
    summary: &InfluenceSummary,
    formats: &[ExportFormat],
    threshold: f64,
    dir: &Path,
    stem: &str,
) -> Result<()> {
    for &f in formats {
        let path = dir.join(format!("{stem}.{}", f.extension()));
        export(summary, f, threshold, &path)
            .with_context(|| format!("exporting {}", path.display()))?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

pub fn run(args: &ExportArgs, file: &FileConfig) -> Result<()> {
    let formats: Vec<ExportFormat> = if args.format.is_empty() {
        file.export
            .formats
            .iter()
            .map(|s| s.parse::<ExportFormat>())
            .collect::<echochamber::Result<_>>()?
    } else {
        args.format
            .iter()
            .map(|f| match f {
                FormatArg::Json => ExportFormat::Json,
                FormatArg::Dot => ExportFormat::Dot,
                FormatArg::Csv => ExportFormat::Csv,
            })
            .collect()
    };
    if formats.is_empty() {
        return Err(Error::Usage("no export formats selected".into()).into());
    }
    let threshold = args.threshold.unwrap_or(file.export.threshold);
    if !(threshold.is_finite() && threshold >= 0.0) {
        return Err(
            Error::Usage(format!("threshold must be non-negative, got {threshold}")).into(),
        );
    }
    let levels = if args.levels.is_empty() {
        file.export.levels.clone()
    } else {
        args.levels.clone()
    };
    let matrix = args.matrix.map(|m| match m {
        MatrixArg::Rho => MatrixKind::Words,
        MatrixArg::Nu => MatrixKind::Times,
    });

    create_dir(&args.out)?;
    match (&args.manifest, args.chains.is_empty()) {
        (Some(_), false) => {
            return Err(Error::Usage("give either --chains or --manifest, not both".into()).into())
        }
        (None, true) => return Err(Error::Usage("give --chains or --manifest".into()).into()),
        (None, false) => {
            let (summary, _) = summary_of(&args.chains, matrix, &levels)?;
            write_all(&summary, &formats, threshold, &args.out, "network")?;
        }
        (Some(path), true) => {
            let manifest = load_manifest(path)?;
            for g in &manifest.group {
                let mut kind = None;
                let mut parts = Vec::with_capacity(g.runs.len());
                for run in &g.runs {
                    let (s, k) = summary_of(std::slice::from_ref(run), matrix, &levels)?;
                    if kind.is_some_and(|prev| prev != k) {
                        return Err(Error::Usage(format!(
                            "group `{}` mixes language and turn-taking runs; pass --matrix",
                            g.name
                        ))
                        .into());
                    }
                    kind = Some(k);
                    parts.push(s);
                }
                let summary = aggregate(&parts)?;
                write_all(&summary, &formats, threshold, &args.out, &g.name)?;
            }
        }
    }

    write_resolved(
        &args.out,
        "export",
        &Settings {
            chains: &args.chains,
            manifest: args.manifest.as_ref(),
            formats: formats.iter().map(|f| f.extension()).collect(),
            threshold,
            matrix: match args.matrix {
                Some(MatrixArg::Rho) => "rho",
                Some(MatrixArg::Nu) => "nu",
                None => "auto",
            },
            levels: &levels,
        },
    )?;
    Ok(())
}
