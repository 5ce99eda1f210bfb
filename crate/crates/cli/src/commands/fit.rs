use std::path::PathBuf;
use std::thread;

use anyhow::{Context, Result};
use echochamber::corpus::load_transcript;
use echochamber::eval::make_split;
use echochamber::hawkes::load_events;
use echochamber::sampler::{
    load_draws, run_chain_persisted, ChainOutput, ChainStatus, ChainStore, GammaConvention, Model,
    ModelData, Priors, SamplerConfig,
};
use echochamber::{Error, EventTimes, Transcript};
use serde::Serialize;

use super::{create_dir, ChainMeta, RunMeta, RUN_VERSION};
use crate::cli::{ConventionArg, FitArgs};
use crate::config::{write_resolved, FileConfig, TOOL_VERSION};

#[derive(Debug, Serialize)]
struct Settings<'a> {
    model: Model,
    transcript: Option<&'a PathBuf>,
    events: Option<&'a PathBuf>,
    train_fraction: Option<f64>,
    chains: usize,
    seeds: Vec<u64>,
    threads: usize,
    resume: bool,
    stop_after: Option<usize>,
    sampler: &'a SamplerConfig,
    priors: &'a Priors,
}

struct Data {
    persons: Vec<String>,
    vocab_size: usize,
    transcript: Option<Transcript>,
    events: Option<EventTimes>,
}

impl Data {
    fn model_data(&self) -> ModelData<'_> {
        ModelData {
            transcript: self.transcript.as_ref(),
            events: self.events.as_ref(),
        }
    }
}

pub fn resolve_model(arg: Option<Model>, file: Option<&str>) -> Result<Model> {
    match (arg, file) {
        (Some(m), _) => Ok(m),
        (None, Some(name)) => Ok(name.parse::<Model>()?),
        (None, None) => {
            Err(Error::Usage("no model given (use --model or `model` under [fit])".into()).into())
        }
    }
}

/// Training events of a split, observed up to the split time.
fn train_events(train: &Transcript, t_star: f64) -> Result<EventTimes> {
    let mut per = vec![Vec::new(); train.num_persons()];
    for u in train.utterances() {
        per[u.person].push((u.start, u.end()));
    }
    Ok(EventTimes::new(per, t_star)?)
}

fn load_data(model: Model, args: &FitArgs, train_fraction: Option<f64>) -> Result<Data> {
    let transcript = args
        .transcript
        .as_deref()
        .map(load_transcript)
        .transpose()?;
    let events = args.events.as_deref().map(load_events).transpose()?;
    if model.uses_words() && transcript.is_none() {
        return Err(Error::Usage(format!("model `{model}` needs --transcript")).into());
    }
    if transcript.is_none() && events.is_none() {
        return Err(Error::Usage("give --transcript or --events".into()).into());
    }
    if let (Some(t), Some((_, names))) = (&transcript, &events) {
        if t.persons() != names.as_slice() {
            return Err(
                Error::Data("transcript and event file list different persons".into()).into(),
            );
        }
    }

    match (train_fraction, transcript) {
        (Some(f), Some(t)) => {
            if events.is_some() {
                return Err(Error::Usage(
                    "--train-fraction splits the transcript; do not also pass --events".into(),
                )
                .into());
            }
            let split = make_split(&t, f)?;
            let ev = model
                .uses_times()
                .then(|| train_events(&split.train, split.t_star))
                .transpose()?;
            Ok(Data {
                persons: t.persons().to_vec(),
                vocab_size: t.vocab_size(),
                transcript: Some(split.train),
                events: ev,
            })
        }
        (Some(_), None) => Err(Error::Usage("--train-fraction needs --transcript".into()).into()),
        (None, Some(t)) => Ok(Data {
            persons: t.persons().to_vec(),
            vocab_size: t.vocab_size(),
            events: events.map(|(e, _)| e),
            transcript: Some(t),
        }),
        (None, None) => {
            let (e, names) = events.expect("checked above");
            Ok(Data {
                persons: names,
                vocab_size: 0,
                transcript: None,
                events: Some(e),
            })
        }
    }
}

fn status_text(s: &ChainStatus) -> String {
    match s {
        ChainStatus::Complete => "complete".into(),
        ChainStatus::Stopped => "stopped".into(),
        ChainStatus::Failed(m) => format!("failed: {m}"),
    }
}

pub fn run(args: &FitArgs, file: &FileConfig) -> Result<()> {
    let model = resolve_model(args.model.map(Into::into), file.fit.model.as_deref())?;
    let mut sampler = file.sampler.clone();
    if let Some(v) = args.burn_in {
        sampler.burn_in = v;
    }
    if let Some(v) = args.samples {
        sampler.samples = v;
    }
    if let Some(v) = args.beta_inner_loops {
        sampler.beta_inner_loops = v;
    }
    if let Some(v) = args.seed {
        sampler.seed = v;
    }
    if args.fixed_r.is_some() {
        sampler.fixed_r = args.fixed_r;
    }
    sampler.validate()?;
    let mut priors = file.priors.clone();
    if let Some(c) = args.gamma_convention {
        priors.convention = match c {
            ConventionArg::ShapeScale => GammaConvention::ShapeScale,
            ConventionArg::ShapeRate => GammaConvention::ShapeRate,
        };
    }
    priors.resolve()?;
    let chains = args.chains.unwrap_or(file.fit.chains);
    if chains == 0 {
        return Err(Error::Usage("--chains must be at least 1".into()).into());
    }
    let threads = args.threads.or(file.fit.threads).unwrap_or(chains).max(1);
    let train_fraction = args.train_fraction.or(file.fit.train_fraction);
    let seeds: Vec<u64> = (0..chains as u64)
        .map(|i| sampler.seed.wrapping_add(i))
        .collect();

    let data = load_data(model, args, train_fraction)?;
    create_dir(&args.out)?;
    let stems: Vec<String> = (0..chains).map(|i| format!("chain-{i}")).collect();
    if args.resume {
        let prev = RunMeta::load(&args.out)
            .context("--resume needs an earlier run in the output directory")?;
        let prev_stems: Vec<&str> = prev.chains.iter().map(|c| c.stem.as_str()).collect();
        if prev.model != model
            || prev.persons != data.persons
            || prev_stems != stems
            || prev.train_fraction != train_fraction
        {
            return Err(Error::Usage(
                "--resume: the earlier run used a different model, data, split or chain count"
                    .into(),
            )
            .into());
        }
    }

    write_resolved(
        &args.out,
        "fit",
        &Settings {
            model,
            transcript: args.transcript.as_ref(),
            events: args.events.as_ref(),
            train_fraction,
            chains,
            seeds: seeds.clone(),
            threads,
            resume: args.resume,
            stop_after: args.stop_after,
            sampler: &sampler,
            priors: &priors,
        },
    )?;

    let run_one = |i: usize| -> echochamber::Result<ChainOutput> {
        let cfg = SamplerConfig {
            seed: seeds[i],
            ..sampler.clone()
        };
        let store = ChainStore::new(&args.out, stems[i].clone());
        run_chain_persisted(
            model,
            data.model_data(),
            &priors,
            &cfg,
            &store,
            args.resume,
            args.stop_after,
        )
    };
    let mut outputs = Vec::with_capacity(chains);
    for batch in (0..chains).collect::<Vec<_>>().chunks(threads) {
        let results: Vec<echochamber::Result<ChainOutput>> = thread::scope(|s| {
            let handles: Vec<_> = batch.iter().map(|&i| s.spawn(move || run_one(i))).collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("chain thread panicked"))
                .collect()
        });
        for r in results {
            outputs.push(r?);
        }
    }

    let mut metas = Vec::with_capacity(chains);
    for (i, out) in outputs.iter().enumerate() {
        let draws = load_draws(&ChainStore::new(&args.out, stems[i].clone()).draws_path())?.len();
        metas.push(ChainMeta {
            stem: stems[i].clone(),
            seed: seeds[i],
            status: status_text(&out.status),
            draws,
        });
        println!(
            "{}: seed {}, {}, {} draws, mean shrinks {:.2}, {:.1} s",
            stems[i],
            seeds[i],
            status_text(&out.status),
            draws,
            out.stats.mean_shrinks(),
            out.seconds
        );
    }
    RunMeta {
        version: RUN_VERSION,
        tool_version: TOOL_VERSION.into(),
        model,
        persons: data.persons.clone(),
        vocab_size: data.vocab_size,
        transcript: args.transcript.clone(),
        events: args.events.clone(),
        train_fraction,
        chains: metas,
    }
    .save(&args.out)?;

    if let Some(failed) = outputs.iter().find_map(|o| match &o.status {
        ChainStatus::Failed(m) => Some(m.clone()),
        _ => None,
    }) {
        return Err(Error::Numerical(format!("chain failed; partial draws kept: {failed}")).into());
    }
    Ok(())
}
