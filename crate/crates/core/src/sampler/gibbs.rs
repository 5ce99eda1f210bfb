use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::priors::ResolvedPriors;
use super::slice::{slice_sample_1d, slice_sample_hyperrect, Interval};
use super::state::{Adaptation, ChainState, SliceStats, Tracker};
use super::{Model, Priors, SamplerConfig, MIN_BASE_RATE};
use crate::bec::{BecIndex, BecParams, PersonPsi};
use crate::corpus::Transcript;
use crate::error::{Error, Result};
use crate::hawkes::{stationarity_margin, EventTimes, HawkesIndex, HawkesParams};
use crate::matrix::SquareMatrix;

/// Observed data for a chain. Models that need event times derive them from
/// the transcript when `events` is absent.
#[derive(Debug, Clone, Copy, Default)]
pub struct ModelData<'a> {
    pub transcript: Option<&'a Transcript>,
    pub events: Option<&'a EventTimes>,
}

impl<'a> ModelData<'a> {
    pub fn transcript(t: &'a Transcript) -> Self {
        Self {
            transcript: Some(t),
            events: None,
        }
    }

    pub fn events(e: &'a EventTimes) -> Self {
        Self {
            transcript: None,
            events: Some(e),
        }
    }
}

const INITIAL_INFLUENCE: f64 = 0.01;

struct Ctx<'s> {
    rng: &'s mut ChaCha8Rng,
    stats: &'s mut SliceStats,
    adapting: bool,
    max_steps: u32,
}

impl Ctx<'_> {
    fn step(
        &mut self,
        f: impl FnMut(f64) -> f64,
        x0: f64,
        domain: Interval,
        tracker: &mut Tracker,
        what: &str,
        p: usize,
    ) -> Result<f64> {
        let s = slice_sample_1d(f, x0, tracker.width, domain, self.max_steps, self.rng)
            .map_err(|e| context(e, what, p))?;
        self.stats.record(s.shrinks, s.evaluations);
        if self.adapting {
            tracker.record(x0, s.value);
        }
        Ok(s.value)
    }

    fn step_rect(
        &mut self,
        f: impl FnMut(&[f64]) -> f64,
        x0: &[f64],
        trackers: &mut [Tracker],
        what: &str,
        p: usize,
    ) -> Result<Vec<f64>> {
        let widths: Vec<f64> = trackers.iter().map(|t| t.width).collect();
        let s = slice_sample_hyperrect(f, x0, &widths, Interval::POSITIVE, self.rng)
            .map_err(|e| context(e, what, p))?;
        self.stats.record(s.shrinks, s.evaluations);
        if self.adapting {
            for (t, (&a, &b)) in trackers.iter_mut().zip(x0.iter().zip(&s.value)) {
                t.record(a, b);
                if s.shrinks == 0 {
                    t.width *= 1.5;
                }
            }
        }
        Ok(s.value)
    }
}

fn context(e: Error, what: &str, p: usize) -> Error {
    match e {
        Error::Numerical(m) => Error::Numerical(format!("updating {what} of person {p}: {m}")),
        other => other,
    }
}

/// Reusable likelihood caches for repeated sweeps over one data set.
pub struct Sampler {
    model: Model,
    priors: ResolvedPriors,
    cfg: SamplerConfig,
    persons: usize,
    vocab: usize,
    words: Option<BecIndex>,
    psi: Vec<Option<PersonPsi>>,
    times: Option<HawkesIndex>,
}

impl Sampler {
    pub fn new(
        model: Model,
        data: ModelData<'_>,
        priors: &Priors,
        cfg: &SamplerConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        let priors = priors.resolve()?;
        let words = if model.uses_words() {
            let t = data
                .transcript
                .ok_or_else(|| Error::Usage(format!("model `{model}` needs a transcript")))?;
            Some(BecIndex::new(t))
        } else {
            None
        };
        let times = if model.uses_times() {
            let owned;
            let events = match (data.events, data.transcript) {
                (Some(e), _) => e,
                (None, Some(t)) => {
                    owned = t.events();
                    &owned
                }
                (None, None) => {
                    return Err(Error::Usage(format!("model `{model}` needs event times")))
                }
            };
            Some(HawkesIndex::new(events))
        } else {
            None
        };
        let persons = match (&words, &times) {
            (Some(w), Some(h)) if w.num_persons() != h.num_persons() => {
                return Err(Error::Data(
                    "transcript and events disagree on the number of persons".into(),
                ))
            }
            (Some(w), _) => w.num_persons(),
            (None, Some(h)) => h.num_persons(),
            (None, None) => unreachable!("every model uses words or times"),
        };
        if persons == 0 {
            return Err(Error::Data("no persons to model".into()));
        }
        Ok(Self {
            model,
            priors,
            cfg: cfg.clone(),
            persons,
            vocab: words.as_ref().map_or(0, BecIndex::vocab_size),
            words,
            psi: vec![None; persons],
            times,
        })
    }

    pub fn model(&self) -> Model {
        self.model
    }

    pub fn config(&self) -> &SamplerConfig {
        &self.cfg
    }

    /// Starting state: concentrations and language decays drawn from their
    /// priors, inherent weights at their prior mean, influence and excitation
    /// small, base rates at the observed event rate.
    pub fn init_state(&self) -> Result<ChainState> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
        let n = self.persons;
        let r = (self.model == Model::Tied).then(|| self.cfg.fixed_r.unwrap_or(1.0));
        let bec = self.words.as_ref().map(|_| {
            let concentration = (0..n).map(|_| self.priors.alpha.sample(&mut rng)).collect();
            let decay = (0..n).map(|_| self.priors.tau_l.sample(&mut rng)).collect();
            let influence = match self.model {
                Model::Unigram => SquareMatrix::zeros(n),
                Model::Tied => SquareMatrix::off_diagonal(n, r.unwrap_or(1.0) * INITIAL_INFLUENCE),
                _ => SquareMatrix::off_diagonal(n, INITIAL_INFLUENCE),
            };
            BecParams {
                concentration,
                inherent: vec![vec![self.priors.beta.mean(); self.vocab]; n],
                influence,
                decay,
            }
        });
        let hawkes = self.times.as_ref().map(|h| {
            let horizon = h.horizon();
            let base_rate = (0..n).map(|p| h.count(p).max(1) as f64 / horizon).collect();
            let incoming = INITIAL_INFLUENCE * (n - 1) as f64;
            let tau = if incoming > 0.0 {
                (0.5 / incoming).min(1.0)
            } else {
                1.0
            };
            HawkesParams {
                base_rate,
                excitation: SquareMatrix::off_diagonal(n, INITIAL_INFLUENCE),
                decay: vec![tau; n],
            }
        });
        let state = ChainState {
            model: self.model,
            bec,
            hawkes,
            r,
            rng,
            sweep: 0,
            loglik: Vec::new(),
            adaptation: Adaptation::new(&self.cfg.widths, n, self.vocab),
            stats: SliceStats::default(),
        };
        self.check_state(&state)?;
        Ok(state)
    }

    fn check_state(&self, st: &ChainState) -> Result<()> {
        if st.model != self.model {
            return Err(Error::Usage(format!(
                "chain state is for model `{}`, sampler is for `{}`",
                st.model, self.model
            )));
        }
        if self.model.uses_words() {
            let b = st
                .bec
                .as_ref()
                .ok_or_else(|| Error::InvalidParams("state lacks language parameters".into()))?;
            b.validate()?;
            if b.num_persons() != self.persons || b.vocab_size() != self.vocab {
                return Err(Error::InvalidParams(
                    "language parameters do not match the data".into(),
                ));
            }
        }
        if self.model.uses_times() {
            let h = st
                .hawkes
                .as_ref()
                .ok_or_else(|| Error::InvalidParams("state lacks turn-taking parameters".into()))?;
            h.validate()?;
            if h.num_persons() != self.persons {
                return Err(Error::InvalidParams(
                    "turn-taking parameters do not match the data".into(),
                ));
            }
            if stationarity_margin(h) <= 0.0 {
                return Err(Error::Numerical(
                    "turn-taking parameters are not stationary".into(),
                ));
            }
        }
        if self.model == Model::Tied && !st.r.is_some_and(|r| r.is_finite() && r >= 0.0) {
            return Err(Error::InvalidParams(
                "tied model needs a non-negative scale factor".into(),
            ));
        }
        Ok(())
    }

    fn sync_psi(&mut self, bec: &BecParams) {
        if let Some(index) = &self.words {
            for (p, slot) in self.psi.iter_mut().enumerate() {
                let tau = bec.decay[p];
                if slot.as_ref().is_none_or(|s| s.tau() != tau) {
                    *slot = Some(index.person_psi(p, tau));
                }
            }
        }
    }

    /// Log-likelihood of the data under the state's parameters.
    pub fn log_likelihood(&mut self, st: &ChainState) -> Result<f64> {
        let mut total = 0.0;
        if self.model != Model::Unigram {
            if let Some(bec) = &st.bec {
                self.sync_psi(bec);
            }
        }
        if let (Some(index), Some(bec)) = (&self.words, &st.bec) {
            if self.model == Model::Unigram {
                total += index.unigram_log_likelihood(bec)?;
            } else {
                for p in 0..self.persons {
                    let psi = self.psi[p].as_ref().expect("psi synced");
                    total += index.person_log_likelihood(
                        psi,
                        bec.concentration[p],
                        &bec.inherent[p],
                        &bec.influence.column(p),
                    );
                }
            }
        }
        if let (Some(index), Some(h)) = (&self.times, &st.hawkes) {
            total += index.log_likelihood(h)?;
        }
        if total.is_finite() {
            Ok(total)
        } else {
            Err(Error::Numerical(format!("log-likelihood is {total}")))
        }
    }

    /// One full Gibbs sweep. On error the state is left as it was before the
    /// sweep.
    pub fn sweep(&mut self, st: &mut ChainState) -> Result<()> {
        self.check_state(st)?;
        let backup = st.clone();
        match self.sweep_inner(st) {
            Ok(()) => Ok(()),
            Err(e) => {
                *st = backup;
                Err(e)
            }
        }
    }

    fn sweep_inner(&mut self, st: &mut ChainState) -> Result<()> {
        let adapting = self.cfg.adapt && st.sweep < self.cfg.burn_in;
        if let Some(bec) = &st.bec {
            let bec = bec.clone();
            self.sync_psi(&bec);
        }
        {
            let ChainState {
                bec,
                hawkes,
                r,
                rng,
                adaptation,
                stats,
                ..
            } = st;
            let mut cx = Ctx {
                rng,
                stats,
                adapting,
                max_steps: self.cfg.max_step_out,
            };
            match self.model {
                Model::Bec | Model::Unigram => {
                    let bec = bec.as_mut().expect("checked");
                    for p in 0..self.persons {
                        self.bec_person(p, bec, adaptation, &mut cx, self.model == Model::Bec)?;
                    }
                }
                Model::Hawkes => {
                    let h = hawkes.as_mut().expect("checked");
                    for p in 0..self.persons {
                        self.hawkes_person(p, h, None, adaptation, &mut cx)?;
                    }
                }
                Model::Untied => {
                    let bec = bec.as_mut().expect("checked");
                    for p in 0..self.persons {
                        self.bec_person(p, bec, adaptation, &mut cx, true)?;
                    }
                    let h = hawkes.as_mut().expect("checked");
                    for p in 0..self.persons {
                        self.hawkes_person(p, h, None, adaptation, &mut cx)?;
                    }
                }
                Model::Tied => {
                    let bec = bec.as_mut().expect("checked");
                    let h = hawkes.as_mut().expect("checked");
                    let scale = r.as_mut().expect("checked");
                    for p in 0..self.persons {
                        self.hawkes_person(p, h, Some((&mut *bec, *scale)), adaptation, &mut cx)?;
                        self.bec_person(p, bec, adaptation, &mut cx, false)?;
                    }
                    if self.cfg.fixed_r.is_none() {
                        *scale = self.update_r(*scale, bec, h, &mut adaptation.r, &mut cx)?;
                        bec.influence = h.excitation.map(|v| *scale * v);
                    }
                }
            }
        }
        if let Some(h) = &st.hawkes {
            let margin = stationarity_margin(h);
            if margin <= 0.0 {
                return Err(Error::Numerical(format!(
                    "stationarity margin {margin} after sweep"
                )));
            }
        }
        let ll = self.log_likelihood(st)?;
        st.loglik.push(ll);
        st.sweep += 1;
        if adapting && st.sweep.is_multiple_of(self.cfg.adapt_interval) {
            st.adaptation.retune();
        }
        Ok(())
    }

    fn bec_person(
        &mut self,
        p: usize,
        bec: &mut BecParams,
        ad: &mut Adaptation,
        cx: &mut Ctx<'_>,
        sample_rho: bool,
    ) -> Result<()> {
        let index = self.words.as_ref().expect("language data");
        let pr = self.priors;
        let unigram = self.model == Model::Unigram;
        let mut alpha = bec.concentration[p];
        let mut beta = bec.inherent[p].clone();
        let mut incoming = bec.influence.column(p);

        let ll = |psi: &PersonPsi, a: f64, b: &[f64], inc: &[f64]| {
            if unigram {
                index.person_unigram_log_likelihood(p, a, b)
            } else {
                index.person_log_likelihood(psi, a, b, inc)
            }
        };

        {
            let psi = self.psi[p].as_ref().expect("psi synced");
            alpha = cx.step(
                |a| ll(psi, a, &beta, &incoming) + pr.alpha.log_density(a),
                alpha,
                Interval::POSITIVE,
                &mut ad.alpha[p],
                "alpha",
                p,
            )?;
        }

        if !unigram {
            let tau = cx.step(
                |t| {
                    index.person_log_likelihood(&index.person_psi(p, t), alpha, &beta, &incoming)
                        + pr.tau_l.log_density(t)
                },
                bec.decay[p],
                Interval::POSITIVE,
                &mut ad.tau_l[p],
                "tau_l",
                p,
            )?;
            bec.decay[p] = tau;
            self.psi[p] = Some(index.person_psi(p, tau));
        }
        let psi = self.psi[p].as_ref().expect("psi synced");

        if sample_rho {
            let n = self.persons;
            for q in (0..n).filter(|&q| q != p) {
                let mut trial = incoming.clone();
                incoming[q] = cx.step(
                    |x| {
                        trial[q] = x;
                        ll(psi, alpha, &beta, &trial) + pr.rho.log_density(x)
                    },
                    incoming[q],
                    Interval::POSITIVE,
                    &mut ad.rho[q * n + p],
                    "rho",
                    p,
                )?;
                bec.influence[(q, p)] = incoming[q];
            }
        }

        for _ in 0..self.cfg.beta_inner_loops {
            beta = cx.step_rect(
                |b| {
                    ll(psi, alpha, b, &incoming)
                        + b.iter().map(|&x| pr.beta.log_density(x)).sum::<f64>()
                },
                &beta,
                &mut ad.beta[p],
                "beta",
                p,
            )?;
        }

        bec.concentration[p] = alpha;
        bec.inherent[p] = beta;
        Ok(())
    }

    /// Base rate, incoming excitation and decay for person `p`. In the tied
    /// model the excitation update also carries the language factor with
    /// `ρ = r ν`.
    fn hawkes_person(
        &self,
        p: usize,
        h: &mut HawkesParams,
        mut tied: Option<(&mut BecParams, f64)>,
        ad: &mut Adaptation,
        cx: &mut Ctx<'_>,
    ) -> Result<()> {
        let index = self.times.as_ref().expect("event data");
        let n = self.persons;
        let mut base = h.base_rate[p];
        let mut tau = h.decay[p];
        let mut incoming = h.excitation.column(p);

        base = cx.step(
            |b| index.person_log_likelihood(p, b, &incoming, tau),
            base,
            Interval::new(MIN_BASE_RATE, f64::INFINITY),
            &mut ad.base_rate[p],
            "base rate",
            p,
        )?;

        for q in (0..n).filter(|&q| q != p) {
            let others: f64 = (0..n)
                .filter(|&s| s != p && s != q)
                .map(|s| incoming[s])
                .sum();
            let hi = 1.0 / tau - others;
            if !(hi > incoming[q]) {
                continue;
            }
            let mut trial = incoming.clone();
            let x = match &tied {
                None => cx.step(
                    |x| {
                        trial[q] = x;
                        index.person_log_likelihood(p, base, &trial, tau)
                    },
                    incoming[q],
                    Interval::new(0.0, hi),
                    &mut ad.nu[q * n + p],
                    "nu",
                    p,
                )?,
                Some((bec, r)) => {
                    let words = self.words.as_ref().expect("language data");
                    let psi = self.psi[p].as_ref().expect("psi synced");
                    let (alpha, beta, r) = (bec.concentration[p], &bec.inherent[p], *r);
                    let mut rho = vec![0.0; n];
                    cx.step(
                        |x| {
                            trial[q] = x;
                            for (dst, &v) in rho.iter_mut().zip(&trial) {
                                *dst = r * v;
                            }
                            index.person_log_likelihood(p, base, &trial, tau)
                                + words.person_log_likelihood(psi, alpha, beta, &rho)
                        },
                        incoming[q],
                        Interval::new(0.0, hi),
                        &mut ad.nu[q * n + p],
                        "nu",
                        p,
                    )?
                }
            };
            incoming[q] = x;
            h.excitation[(q, p)] = x;
            if let Some((bec, r)) = tied.as_mut() {
                bec.influence[(q, p)] = *r * x;
            }
        }

        let total: f64 = incoming.iter().sum();
        if total > 0.0 {
            tau = cx.step(
                |t| index.person_log_likelihood(p, base, &incoming, t),
                tau,
                Interval::new(0.0, 1.0 / total),
                &mut ad.tau_t[p],
                "tau_t",
                p,
            )?;
        }

        h.base_rate[p] = base;
        h.decay[p] = tau;
        Ok(())
    }

    fn update_r(
        &self,
        r: f64,
        bec: &BecParams,
        h: &HawkesParams,
        tracker: &mut Tracker,
        cx: &mut Ctx<'_>,
    ) -> Result<f64> {
        let words = self.words.as_ref().expect("language data");
        let prior = self.priors.r;
        let columns: Vec<Vec<f64>> = (0..self.persons).map(|p| h.excitation.column(p)).collect();
        let mut rho = vec![0.0; self.persons];
        cx.step(
            |x| {
                let mut total = prior.log_density(x);
                for (p, col) in columns.iter().enumerate() {
                    for (dst, &v) in rho.iter_mut().zip(col) {
                        *dst = x * v;
                    }
                    let psi = self.psi[p].as_ref().expect("psi synced");
                    total += words.person_log_likelihood(
                        psi,
                        bec.concentration[p],
                        &bec.inherent[p],
                        &rho,
                    );
                }
                total
            },
            r,
            Interval::POSITIVE,
            tracker,
            "r",
            0,
        )
    }
}

/// One language-model sweep over `transcript`.
pub fn gibbs_sweep_bec(
    state: &mut ChainState,
    transcript: &Transcript,
    priors: &Priors,
    cfg: &SamplerConfig,
) -> Result<()> {
    if !matches!(state.model, Model::Bec | Model::Unigram) {
        return Err(Error::Usage(format!(
            "state for `{}` is not a language-model state",
            state.model
        )));
    }
    Sampler::new(state.model, ModelData::transcript(transcript), priors, cfg)?.sweep(state)
}

/// One turn-taking sweep over `events`.
pub fn gibbs_sweep_hawkes(
    state: &mut ChainState,
    events: &EventTimes,
    cfg: &SamplerConfig,
) -> Result<()> {
    Sampler::new(
        Model::Hawkes,
        ModelData::events(events),
        &Priors::default(),
        cfg,
    )?
    .sweep(state)
}

/// One sweep of the tied model.
pub fn gibbs_sweep_tied(
    state: &mut ChainState,
    transcript: &Transcript,
    events: &EventTimes,
    priors: &Priors,
    cfg: &SamplerConfig,
) -> Result<()> {
    let data = ModelData {
        transcript: Some(transcript),
        events: Some(events),
    };
    Sampler::new(Model::Tied, data, priors, cfg)?.sweep(state)
}
