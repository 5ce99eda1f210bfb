use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::gibbs::{ModelData, Sampler};
use super::state::{ChainState, SliceStats};
use super::{Model, Priors, SamplerConfig};
use crate::bec::BecParams;
use crate::error::{Error, Result};
use crate::hawkes::HawkesParams;

pub const CHAIN_VERSION: u32 = 1;

/// One retained posterior sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Draw {
    /// Number of completed sweeps when the draw was taken.
    pub sweep: usize,
    pub loglik: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bec: Option<BecParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hawkes: Option<HawkesParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
}

impl Draw {
    fn of(state: &ChainState) -> Self {
        Self {
            sweep: state.sweep,
            loglik: state.loglik.last().copied().unwrap_or(f64::NAN),
            bec: state.bec.clone(),
            hawkes: state.hawkes.clone(),
            r: state.r,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ChainStatus {
    Complete,
    /// Halted on request; resumable from the checkpoint.
    Stopped,
    /// A sweep failed; draws up to the last valid state are kept.
    Failed(String),
}

#[derive(Debug, Clone)]
pub struct ChainOutput {
    pub model: Model,
    pub draws: Vec<Draw>,
    /// Log-likelihood after every completed sweep, burn-in included.
    pub loglik: Vec<f64>,
    pub stats: SliceStats,
    /// Wall time of this invocation in seconds.
    pub seconds: f64,
    pub status: ChainStatus,
    pub state: ChainState,
}

impl ChainOutput {
    pub fn is_complete(&self) -> bool {
        self.status == ChainStatus::Complete
    }
}

/// Files backing one persisted chain: `<stem>.jsonl` (draws),
/// `<stem>.state.json` (checkpoint) and `<stem>.diagnostics.csv`.
#[derive(Debug, Clone)]
pub struct ChainStore {
    dir: PathBuf,
    stem: String,
}

impl ChainStore {
    pub fn new(dir: impl Into<PathBuf>, stem: impl Into<String>) -> Self {
        Self {
            dir: dir.into(),
            stem: stem.into(),
        }
    }

    pub fn draws_path(&self) -> PathBuf {
        self.dir.join(format!("{}.jsonl", self.stem))
    }

    pub fn state_path(&self) -> PathBuf {
        self.dir.join(format!("{}.state.json", self.stem))
    }

    pub fn diagnostics_path(&self) -> PathBuf {
        self.dir.join(format!("{}.diagnostics.csv", self.stem))
    }
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    version: u32,
    config: SamplerConfig,
    priors: Priors,
    seconds: f64,
    state: ChainState,
}

/// Runs `burn_in + samples` sweeps in memory.
pub fn run_chain(
    model: Model,
    data: ModelData<'_>,
    priors: &Priors,
    cfg: &SamplerConfig,
) -> Result<ChainOutput> {
    let mut sampler = Sampler::new(model, data, priors, cfg)?;
    let mut state = sampler.init_state()?;
    let mut draws = Vec::new();
    let start = Instant::now();
    let status = drive(&mut sampler, &mut state, cfg, None, |s| {
        if s.sweep > cfg.burn_in {
            draws.push(Draw::of(s));
        }
        Ok(())
    });
    Ok(ChainOutput {
        model,
        draws,
        loglik: state.loglik.clone(),
        stats: state.stats,
        seconds: start.elapsed().as_secs_f64(),
        status: status?,
        state,
    })
}

/// Sweeps until done, `stop_at` completed sweeps, or a failure. Sweep
/// failures become [`ChainStatus::Failed`]; `Err` is reserved for I/O.
fn drive(
    sampler: &mut Sampler,
    state: &mut ChainState,
    cfg: &SamplerConfig,
    stop_at: Option<usize>,
    mut on_sweep: impl FnMut(&ChainState) -> Result<()>,
) -> Result<ChainStatus> {
    let total = cfg.total_sweeps();
    while state.sweep < total {
        if stop_at.is_some_and(|s| state.sweep >= s) {
            return Ok(ChainStatus::Stopped);
        }
        if let Err(e) = sampler.sweep(state) {
            return Ok(ChainStatus::Failed(e.to_string()));
        }
        on_sweep(state)?;
    }
    Ok(ChainStatus::Complete)
}

/// Runs a chain whose draws, diagnostics and checkpoints live in `store`.
///
/// With `resume`, continues from the checkpoint; the continuation is
/// bit-identical to an uninterrupted run. `stop_after` halts once that many
/// sweeps are complete, leaving a checkpoint behind.
pub fn run_chain_persisted(
    model: Model,
    data: ModelData<'_>,
    priors: &Priors,
    cfg: &SamplerConfig,
    store: &ChainStore,
    resume: bool,
    stop_after: Option<usize>,
) -> Result<ChainOutput> {
    let mut sampler = Sampler::new(model, data, priors, cfg)?;
    fs::create_dir_all(&store.dir).map_err(|e| Error::io(&store.dir, e))?;
    let (mut state, prior_seconds) = if resume {
        let cp = read_checkpoint(&store.state_path())?;
        if cp.state.model != model || cp.config != *cfg || cp.priors != *priors {
            return Err(Error::Usage(
                "checkpoint was written with a different model, configuration or priors".into(),
            ));
        }
        truncate_lines(&store.draws_path(), |line| {
            let d: Draw = serde_json::from_str(line)?;
            Ok(d.sweep <= cp.state.sweep)
        })?;
        truncate_lines(&store.diagnostics_path(), |line| {
            let sweep = line.split(',').next().and_then(|s| s.parse::<usize>().ok());
            Ok(sweep.is_none_or(|s| s <= cp.state.sweep))
        })?;
        (cp.state, cp.seconds)
    } else {
        let state = sampler.init_state()?;
        create_empty(&store.draws_path())?;
        fs::write(store.diagnostics_path(), "sweep,loglik,seconds\n")
            .map_err(|e| Error::io(store.diagnostics_path(), e))?;
        (state, 0.0)
    };

    let draws_path = store.draws_path();
    let diag_path = store.diagnostics_path();
    let mut draws_out = append(&draws_path)?;
    let mut diag_out = append(&diag_path)?;
    let start = Instant::now();
    let elapsed = |start: &Instant| prior_seconds + start.elapsed().as_secs_f64();

    let status = drive(&mut sampler, &mut state, cfg, stop_after, |s| {
        let ll = s.loglik.last().copied().unwrap_or(f64::NAN);
        writeln!(diag_out, "{},{},{:.6}", s.sweep, ll, elapsed(&start))
            .map_err(|e| Error::io(&diag_path, e))?;
        if s.sweep > cfg.burn_in {
            serde_json::to_writer(&mut draws_out, &Draw::of(s))?;
            draws_out
                .write_all(b"\n")
                .map_err(|e| Error::io(&draws_path, e))?;
        }
        if s.sweep % cfg.checkpoint_every == 0 {
            draws_out.flush().map_err(|e| Error::io(&draws_path, e))?;
            diag_out.flush().map_err(|e| Error::io(&diag_path, e))?;
            write_checkpoint(store, cfg, priors, s, elapsed(&start))?;
        }
        Ok(())
    })?;
    draws_out.flush().map_err(|e| Error::io(&draws_path, e))?;
    diag_out.flush().map_err(|e| Error::io(&diag_path, e))?;
    write_checkpoint(store, cfg, priors, &state, elapsed(&start))?;

    Ok(ChainOutput {
        model,
        draws: load_draws(&draws_path)?,
        loglik: state.loglik.clone(),
        stats: state.stats,
        seconds: start.elapsed().as_secs_f64(),
        status,
        state,
    })
}

fn create_empty(path: &Path) -> Result<()> {
    fs::File::create(path)
        .map(drop)
        .map_err(|e| Error::io(path, e))
}

fn append(path: &Path) -> Result<BufWriter<fs::File>> {
    let f = fs::OpenOptions::new()
        .append(true)
        .create(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    Ok(BufWriter::new(f))
}

fn write_checkpoint(
    store: &ChainStore,
    cfg: &SamplerConfig,
    priors: &Priors,
    state: &ChainState,
    seconds: f64,
) -> Result<()> {
    let cp = Checkpoint {
        version: CHAIN_VERSION,
        config: cfg.clone(),
        priors: priors.clone(),
        seconds,
        state: state.clone(),
    };
    let path = store.state_path();
    let tmp = path.with_extension("json.tmp");
    let bytes = serde_json::to_vec(&cp)?;
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))
}

fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let probe: serde_json::Value = serde_json::from_slice(&bytes)?;
    let version = probe.get("version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
    if version != CHAIN_VERSION {
        return Err(Error::SchemaVersion {
            found: version,
            expected: CHAIN_VERSION,
        });
    }
    Ok(serde_json::from_value(probe)?)
}

/// Keeps the leading lines for which `keep` holds, dropping the rest along
/// with any torn final line.
fn truncate_lines(path: &Path, mut keep: impl FnMut(&str) -> Result<bool>) -> Result<()> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(()),
        Err(e) => return Err(Error::io(path, e)),
    };
    let mut out = String::with_capacity(text.len());
    for line in text.split_inclusive('\n') {
        if !line.ends_with('\n') || !keep(line.trim_end())? {
            break;
        }
        out.push_str(line);
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Reads a draws file written by [`run_chain_persisted`].
pub fn load_draws(path: &Path) -> Result<Vec<Draw>> {
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut draws = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let d = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        draws.push(d);
    }
    Ok(draws)
}
