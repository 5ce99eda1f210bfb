pub mod evaluate;
pub mod export;
pub mod fit;
pub mod preprocess;
pub mod simulate;

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use echochamber::sampler::{load_draws, Draw, Model};
use echochamber::Error;
use serde::{Deserialize, Serialize};

pub const RUN_FILE: &str = "run.json";
pub const RUN_VERSION: u32 = 1;

/// Written by `fit`; lets later commands find chains and person names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub version: u32,
    pub tool_version: String,
    pub model: Model,
    pub persons: Vec<String>,
    pub vocab_size: usize,
    pub transcript: Option<PathBuf>,
    pub events: Option<PathBuf>,
    pub train_fraction: Option<f64>,
    pub chains: Vec<ChainMeta>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainMeta {
    pub stem: String,
    pub seed: u64,
    pub status: String,
    pub draws: usize,
}

impl RunMeta {
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(RUN_FILE);
        let text = fs::read_to_string(&path).map_err(|e| {
            Error::Data(format!(
                "{}: {e} (is this a `fit` output directory?)",
                path.display()
            ))
        })?;
        let meta: RunMeta = serde_json::from_str(&text).map_err(Error::from)?;
        if meta.version != RUN_VERSION {
            return Err(Error::SchemaVersion {
                found: meta.version,
                expected: RUN_VERSION,
            }
            .into());
        }
        Ok(meta)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let path = dir.join(RUN_FILE);
        let text = serde_json::to_string_pretty(self)?;
        fs::write(&path, text + "\n").with_context(|| format!("writing {}", path.display()))
    }
}

/// Posterior draws gathered from fit directories and chain files.
#[derive(Debug)]
pub struct Pooled {
    pub model: Model,
    pub persons: Vec<String>,
    pub train_fraction: Option<f64>,
    pub draws: Vec<Draw>,
}

/// Resolves one `--chains` argument: a fit directory (all its chains) or a
/// single `.jsonl` chain file inside one.
fn resolve(input: &Path) -> Result<(RunMeta, Vec<PathBuf>)> {
    if input.is_dir() {
        let meta = RunMeta::load(input)?;
        let files = meta
            .chains
            .iter()
            .map(|c| input.join(format!("{}.jsonl", c.stem)))
            .collect();
        return Ok((meta, files));
    }
    if !input.is_file() {
        return Err(Error::Data(format!("chain input {} does not exist", input.display())).into());
    }
    let dir = input
        .parent()
        .filter(|d| !d.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    Ok((RunMeta::load(dir)?, vec![input.to_path_buf()]))
}

pub fn pool(inputs: &[PathBuf]) -> Result<Pooled> {
    let mut pooled: Option<Pooled> = None;
    for input in inputs {
        let (meta, files) = resolve(input)?;
        let mut draws = Vec::new();
        for f in &files {
            draws.extend(load_draws(f)?);
        }
        match &mut pooled {
            None => {
                pooled = Some(Pooled {
                    model: meta.model,
                    persons: meta.persons,
                    train_fraction: meta.train_fraction,
                    draws,
                })
            }
            Some(p) => {
                if p.model != meta.model
                    || p.persons != meta.persons
                    || p.train_fraction != meta.train_fraction
                {
                    return Err(Error::Usage(format!(
                        "{} was fitted with a different model, person list or split than the other chains",
                        input.display()
                    ))
                    .into());
                }
                p.draws.extend(draws);
            }
        }
    }
    let pooled = pooled.ok_or_else(|| Error::Usage("no chain inputs given".into()))?;
    if pooled.draws.is_empty() {
        return Err(Error::Data("chains contain no retained draws".into()).into());
    }
    Ok(pooled)
}

pub fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

pub fn persons(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("P{}", i + 1)).collect()
}
