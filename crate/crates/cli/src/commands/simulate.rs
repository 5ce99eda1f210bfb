use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use echochamber::bec::{simulate_contents, simulate_round_robin};
use echochamber::corpus::save_transcript;
use echochamber::hawkes::simulate;
use echochamber::sampler::Priors;
use echochamber::{BecParams, Error, HawkesParams, Transcript};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{create_dir, persons};
use crate::cli::{ProtocolArg, SimulateArgs};
use crate::config::{write_resolved, FileConfig, Protocol, SimulateConfig};

/// Generating parameters, as read from `--params` and written to `truth.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Truth {
    pub bec: Option<BecParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hawkes: Option<HawkesParams>,
}

#[derive(Serialize)]
struct Settings<'a> {
    params: Option<&'a PathBuf>,
    simulate: &'a SimulateConfig,
    priors: &'a Priors,
}

fn read_truth(path: &Path) -> Result<Truth> {
    let text =
        fs::read_to_string(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    Ok(serde_json::from_str(&text).map_err(Error::from)?)
}

pub fn run(args: &SimulateArgs, file: &FileConfig) -> Result<Transcript> {
    let mut cfg = file.simulate.clone();
    if let Some(p) = args.protocol {
        cfg.protocol = match p {
            ProtocolArg::RoundRobin => Protocol::RoundRobin,
            ProtocolArg::Hawkes => Protocol::Hawkes,
        };
    }
    if let Some(v) = args.persons {
        cfg.persons = v;
    }
    if let Some(v) = args.utterances {
        cfg.utterances = v;
    }
    if let Some(v) = args.vocab {
        cfg.vocab = v;
    }
    if let Some(v) = args.mean_length {
        cfg.mean_length = v;
    }
    if let Some(v) = args.horizon {
        cfg.horizon = v;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let given = args.params.as_deref().map(read_truth).transpose()?;
    let (bec, hawkes) = match given {
        Some(t) => (t.bec, t.hawkes),
        None => (None, None),
    };
    if let (None, Some(h)) = (&bec, &hawkes) {
        cfg.persons = h.num_persons();
    }
    let bec = match bec {
        Some(b) => {
            cfg.persons = b.num_persons();
            cfg.vocab = b.vocab_size();
            b
        }
        None => {
            if cfg.persons == 0 || cfg.vocab == 0 {
                return Err(
                    Error::Usage("need at least one person and one word type".into()).into(),
                );
            }
            file.priors
                .resolve()?
                .sample_bec(cfg.persons, cfg.vocab, &mut rng)
        }
    };
    bec.validate()?;
    let names = persons(cfg.persons);

    let (transcript, hawkes) = match cfg.protocol {
        Protocol::RoundRobin => (
            simulate_round_robin(
                &bec,
                cfg.utterances,
                cfg.mean_length,
                cfg.horizon,
                names,
                &mut rng,
            )?,
            None,
        ),
        Protocol::Hawkes => {
            let h = hawkes.ok_or_else(|| {
                Error::Usage("the hawkes protocol needs `hawkes` parameters in --params".into())
            })?;
            if h.num_persons() != cfg.persons {
                return Err(Error::InvalidParams(
                    "language and turn-taking parameters disagree on the person count".into(),
                )
                .into());
            }
            let times = simulate(&h, cfg.horizon, &cfg.durations, cfg.event_cap, &mut rng)?;
            (
                simulate_contents(&bec, &times, cfg.mean_length, names, &mut rng)?,
                Some(h),
            )
        }
    };

    create_dir(&args.out)?;
    save_transcript(&transcript, &args.out.join("transcript.json"))?;
    let truth = Truth {
        bec: Some(bec),
        hawkes,
    };
    let truth_path = args.out.join("truth.json");
    fs::write(&truth_path, serde_json::to_string_pretty(&truth)? + "\n")
        .with_context(|| format!("writing {}", truth_path.display()))?;
    write_resolved(
        &args.out,
        "simulate",
        &Settings {
            params: args.params.as_ref(),
            simulate: &cfg,
            priors: &file.priors,
        },
    )?;
    Ok(transcript)
}
