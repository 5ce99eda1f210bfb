use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use echochamber::corpus::PreprocessConfig;
use echochamber::hawkes::{DurationModel, DEFAULT_EVENT_CAP};
use echochamber::sampler::{Priors, SamplerConfig};
use echochamber::Error;
use serde::{Deserialize, Serialize};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Contents of a `--config` file. Every section is optional.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub preprocess: PreprocessConfig,
    pub fit: FitConfig,
    pub sampler: SamplerConfig,
    pub priors: Priors,
    pub simulate: SimulateConfig,
    pub export: ExportConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub model: Option<String>,
    pub chains: usize,
    pub threads: Option<usize>,
    pub train_fraction: Option<f64>,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            model: None,
            chains: 1,
            threads: None,
            train_fraction: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Protocol {
    RoundRobin,
    Hawkes,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub protocol: Protocol,
    pub persons: usize,
    pub utterances: usize,
    pub vocab: usize,
    pub mean_length: f64,
    pub horizon: f64,
    pub seed: u64,
    /// Utterance durations under the Hawkes protocol.
    pub durations: DurationModel,
    pub event_cap: usize,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            protocol: Protocol::RoundRobin,
            persons: 3,
            utterances: 300,
            vocab: 20,
            mean_length: 50.0,
            horizon: 100.0,
            seed: 0,
            durations: DurationModel::Exponential { mean: 0.1 },
            event_cap: DEFAULT_EVENT_CAP,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExportConfig {
    pub formats: Vec<String>,
    pub threshold: f64,
    pub levels: Vec<f64>,
}

impl Default for ExportConfig {
    fn default() -> Self {
        Self {
            formats: vec!["json".into(), "dot".into(), "csv".into()],
            threshold: 0.0,
            levels: echochamber::network::DEFAULT_LEVELS.to_vec(),
        }
    }
}

pub fn load(path: Option<&Path>) -> Result<FileConfig> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Usage(format!("cannot read config {}: {e}", path.display())))?;
    let cfg = toml::from_str(&text)
        .map_err(|e| Error::Usage(format!("config {}: {e}", path.display())))?;
    Ok(cfg)
}

#[derive(Serialize)]
struct Resolved<'a, T: Serialize> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    settings: &'a T,
}

/// Writes the fully resolved settings of a command next to its outputs.
pub fn write_resolved<T: Serialize>(dir: &Path, command: &str, settings: &T) -> Result<PathBuf> {
    write_resolved_as(dir, "config.toml", command, settings)
}

pub fn write_resolved_as<T: Serialize>(
    dir: &Path,
    file: &str,
    command: &str,
    settings: &T,
) -> Result<PathBuf> {
    let doc = Resolved {
        tool: "echochamber",
        version: TOOL_VERSION,
        command,
        settings,
    };
    let text = toml::to_string_pretty(&doc).context("serializing resolved configuration")?;
    let path = dir.join(file);
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}
