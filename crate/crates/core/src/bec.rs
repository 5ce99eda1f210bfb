//! The Bayesian Echo Chamber: a dynamic Dirichlet–multinomial language model
//! in which each utterance's word distribution is pulled towards the recent,
//! exponentially decayed word counts of the other speakers.
//!
//! For the `n`-th utterance of person `p` starting at `t`, with
//! `ψ_qp[v] = Σ_{m: end_m^q < t} count_v(q, m) · exp(-(t - end_m^q) / τ_p)`,
//! the base measure is `B ∝ β_p + Σ_{q≠p} ρ_qp ψ_qp` and tokens are drawn from
//! `φ ~ Dirichlet(α_p B)`, `w ~ Categorical(φ)`. `φ` is integrated out, giving
//! the collapsed per-token factor `(c_<l(w_l) + α B[w_l]) / (l - 1 + α)`.

use rand::distr::weighted::WeightedIndex;
use rand::Rng;
use rand_distr::{Distribution, Gamma, Poisson};
use serde::{Deserialize, Serialize};

use crate::corpus::{Transcript, Utterance, Vocabulary};
use crate::error::{Error, Result};
use crate::hawkes::EventTimes;
use crate::math::{decay, log_rising};
use crate::matrix::SquareMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BecParams {
    /// Per-person Dirichlet concentration `α`.
    pub concentration: Vec<f64>,
    /// Per-person inherent word weights `β`, each of length `V`.
    pub inherent: Vec<Vec<f64>>,
    /// `ρ`, indexed `(from, to)`.
    pub influence: SquareMatrix,
    /// Per-person decay time `τ_L`.
    pub decay: Vec<f64>,
}

impl BecParams {
    pub fn num_persons(&self) -> usize {
        self.concentration.len()
    }

    pub fn vocab_size(&self) -> usize {
        self.inherent.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.concentration.len();
        if self.inherent.len() != n || self.decay.len() != n || self.influence.dim() != n {
            return Err(Error::InvalidParams(
                "BEC parameter dimensions disagree".into(),
            ));
        }
        let v = self.vocab_size();
        if v == 0 || self.inherent.iter().any(|b| b.len() != v) {
            return Err(Error::InvalidParams(
                "inherent weights must share one non-zero length".into(),
            ));
        }
        let pos = |x: f64| x.is_finite() && x > 0.0;
        if !self.concentration.iter().all(|&a| pos(a)) {
            return Err(Error::InvalidParams(
                "concentrations must be positive".into(),
            ));
        }
        if !self.decay.iter().all(|&d| pos(d)) {
            return Err(Error::InvalidParams("decay times must be positive".into()));
        }
        if !self.inherent.iter().flatten().all(|&b| pos(b)) {
            return Err(Error::InvalidParams(
                "inherent weights must be positive".into(),
            ));
        }
        if self
            .influence
            .as_slice()
            .iter()
            .any(|&r| !(r.is_finite() && r >= 0.0))
        {
            return Err(Error::InvalidParams(
                "influence must be finite and non-negative".into(),
            ));
        }
        if !self.influence.diagonal_is_zero() {
            return Err(Error::InvalidParams("self-influence must be zero".into()));
        }
        Ok(())
    }

    /// The same parameters with every influence weight set to zero.
    pub fn without_influence(&self) -> Self {
        Self {
            influence: SquareMatrix::zeros(self.num_persons()),
            ..self.clone()
        }
    }
}

/// Normalized base measure of one utterance.
#[derive(Debug, Clone, PartialEq)]
pub struct BaseMeasure {
    pub probs: Vec<f64>,
}

/// Indices into `transcript.utterances()` of person `p`'s utterances, in order.
pub fn utterance_positions(transcript: &Transcript, p: usize) -> Vec<usize> {
    transcript
        .utterances()
        .iter()
        .enumerate()
        .filter(|(_, u)| u.person == p)
        .map(|(i, _)| i)
        .collect()
}

fn nth_of(transcript: &Transcript, p: usize, n: usize) -> &Utterance {
    transcript
        .utterances()
        .iter()
        .filter(|u| u.person == p)
        .nth(n)
        .unwrap_or_else(|| panic!("person {p} has no utterance {n}"))
}

/// Decayed pseudocounts from `q` seen by `p`'s `n`-th utterance, computed
/// directly from the transcript.
pub fn pseudocounts(
    q: usize,
    p: usize,
    n: usize,
    transcript: &Transcript,
    params: &BecParams,
) -> Vec<f64> {
    let target = nth_of(transcript, p, n);
    let tau = params.decay[p];
    let mut psi = vec![0.0; transcript.vocab_size()];
    for u in transcript.utterances().iter().filter(|u| u.person == q) {
        let end = u.end();
        if end < target.start {
            let w = decay(target.start - end, tau);
            for &tok in &u.tokens {
                psi[tok as usize] += w;
            }
        }
    }
    psi
}

pub fn base_measure(
    p: usize,
    n: usize,
    transcript: &Transcript,
    params: &BecParams,
) -> Result<BaseMeasure> {
    let mut u = params.inherent[p].clone();
    for q in 0..params.num_persons() {
        if q == p {
            continue;
        }
        let rho = params.influence[(q, p)];
        if rho == 0.0 {
            continue;
        }
        for (acc, psi) in u.iter_mut().zip(pseudocounts(q, p, n, transcript, params)) {
            *acc += rho * psi;
        }
    }
    let total: f64 = u.iter().sum();
    if !total.is_finite() || total <= 0.0 {
        return Err(Error::Numerical(format!(
            "base measure normalizer is {total}"
        )));
    }
    Ok(BaseMeasure {
        probs: u.into_iter().map(|x| x / total).collect(),
    })
}

/// Collapsed Dirichlet–multinomial log probability of a token sequence,
/// evaluated token by token.
pub fn token_sequence_log_prob(tokens: &[u32], alpha: f64, base: &[f64]) -> f64 {
    let mut seen = vec![0u32; base.len()];
    let mut lp = 0.0;
    for (l, &w) in tokens.iter().enumerate() {
        let c = seen[w as usize];
        lp += ((c as f64 + alpha * base[w as usize]) / (l as f64 + alpha)).ln();
        seen[w as usize] += 1;
    }
    lp
}

/// Log probability of `p`'s `n`-th utterance given everything said before it.
pub fn utterance_log_prob(
    p: usize,
    n: usize,
    transcript: &Transcript,
    params: &BecParams,
) -> Result<f64> {
    let b = base_measure(p, n, transcript, params)?;
    let u = nth_of(transcript, p, n);
    Ok(token_sequence_log_prob(
        &u.tokens,
        params.concentration[p],
        &b.probs,
    ))
}

/// Token counts of one utterance in sparse form.
#[derive(Debug, Clone)]
struct SparseCounts {
    types: Vec<u32>,
    counts: Vec<u32>,
}

impl SparseCounts {
    fn from_tokens(tokens: &[u32]) -> Self {
        let mut sorted = tokens.to_vec();
        sorted.sort_unstable();
        let mut types = Vec::new();
        let mut counts: Vec<u32> = Vec::new();
        for t in sorted {
            if types.last() == Some(&t) {
                *counts.last_mut().unwrap() += 1;
            } else {
                types.push(t);
                counts.push(1);
            }
        }
        Self { types, counts }
    }
}

#[derive(Debug, Clone)]
struct Target {
    start: f64,
    len: u32,
    words: SparseCounts,
}

#[derive(Debug, Clone)]
struct Source {
    end: f64,
    words: SparseCounts,
}

/// Per-person layout of a transcript for fast likelihood evaluation.
///
/// Every utterance is a potential source of pseudocounts; only utterances
/// selected as targets contribute likelihood terms (all of them for fitting,
/// the held-out ones for evaluation).
#[derive(Debug, Clone)]
pub struct BecIndex {
    persons: usize,
    vocab: usize,
    targets: Vec<Vec<Target>>,
    sources: Vec<Vec<Source>>,
}

impl BecIndex {
    pub fn new(transcript: &Transcript) -> Self {
        Self::with_targets(transcript, |_| true)
    }

    pub fn with_targets(
        transcript: &Transcript,
        mut is_target: impl FnMut(&Utterance) -> bool,
    ) -> Self {
        let persons = transcript.num_persons();
        let mut targets = vec![Vec::new(); persons];
        let mut sources = vec![Vec::new(); persons];
        for u in transcript.utterances() {
            let words = SparseCounts::from_tokens(&u.tokens);
            if is_target(u) {
                targets[u.person].push(Target {
                    start: u.start,
                    len: u.tokens.len() as u32,
                    words: words.clone(),
                });
            }
            sources[u.person].push(Source {
                end: u.end(),
                words,
            });
        }
        for s in &mut sources {
            s.sort_by(|a, b| a.end.total_cmp(&b.end));
        }
        Self {
            persons,
            vocab: transcript.vocab_size(),
            targets,
            sources,
        }
    }

    pub fn num_persons(&self) -> usize {
        self.persons
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab
    }

    pub fn num_targets(&self, p: usize) -> usize {
        self.targets[p].len()
    }

    /// Pseudocounts seen by every target utterance of `p` under decay `tau`.
    pub fn person_psi(&self, p: usize, tau: f64) -> PersonPsi {
        let targets = &self.targets[p];
        let others: Vec<usize> = (0..self.persons).filter(|&q| q != p).collect();
        let slots = others.len();
        let mut offsets = Vec::with_capacity(targets.len() + 1);
        offsets.push(0);
        for t in targets {
            offsets.push(offsets.last().unwrap() + t.words.types.len() * slots);
        }
        let mut values = vec![0.0; *offsets.last().unwrap()];
        let mut totals = vec![0.0; targets.len() * slots];
        let mut running = vec![0.0; self.vocab];

        for (slot, &q) in others.iter().enumerate() {
            running.iter_mut().for_each(|x| *x = 0.0);
            let mut running_total = 0.0;
            let mut t_prev = f64::NEG_INFINITY;
            let src = &self.sources[q];
            let mut j = 0;
            for (n, target) in targets.iter().enumerate() {
                let t = target.start;
                if t_prev.is_finite() && running_total > 0.0 {
                    let f = decay(t - t_prev, tau);
                    running.iter_mut().for_each(|x| *x *= f);
                    running_total *= f;
                }
                while j < src.len() && src[j].end < t {
                    let s = &src[j];
                    let w = decay(t - s.end, tau);
                    for (&v, &c) in s.words.types.iter().zip(&s.words.counts) {
                        running[v as usize] += c as f64 * w;
                        running_total += c as f64 * w;
                    }
                    j += 1;
                }
                t_prev = t;
                let k = target.words.types.len();
                let base = offsets[n] + slot * k;
                for (i, &v) in target.words.types.iter().enumerate() {
                    values[base + i] = running[v as usize];
                }
                totals[n * slots + slot] = running_total;
            }
        }
        PersonPsi {
            person: p,
            tau,
            others,
            offsets,
            values,
            totals,
        }
    }

    /// Sum of log probabilities of `p`'s target utterances.
    ///
    /// `incoming[q]` is `ρ_qp`; `psi` must come from [`Self::person_psi`] for
    /// the same person.
    pub fn person_log_likelihood(
        &self,
        psi: &PersonPsi,
        alpha: f64,
        beta: &[f64],
        incoming: &[f64],
    ) -> f64 {
        let p = psi.person;
        let slots = psi.others.len();
        let beta_sum: f64 = beta.iter().sum();
        let rho: Vec<f64> = psi.others.iter().map(|&q| incoming[q]).collect();
        let mut lp = 0.0;
        for (n, target) in self.targets[p].iter().enumerate() {
            let mut total = beta_sum;
            for s in 0..slots {
                total += rho[s] * psi.totals[n * slots + s];
            }
            let k = target.words.types.len();
            let base = psi.offsets[n];
            let scale = alpha / total;
            for (i, (&v, &c)) in target
                .words
                .types
                .iter()
                .zip(&target.words.counts)
                .enumerate()
            {
                let mut u = beta[v as usize];
                for s in 0..slots {
                    u += rho[s] * psi.values[base + s * k + i];
                }
                lp += log_rising(scale * u, c);
            }
            lp -= log_rising(alpha, target.len);
        }
        lp
    }

    /// Log probability of `p`'s targets under `B = β / Σβ` (no influence).
    pub fn person_unigram_log_likelihood(&self, p: usize, alpha: f64, beta: &[f64]) -> f64 {
        let beta_sum: f64 = beta.iter().sum();
        let scale = alpha / beta_sum;
        self.targets[p]
            .iter()
            .map(|t| {
                let num: f64 = t
                    .words
                    .types
                    .iter()
                    .zip(&t.words.counts)
                    .map(|(&v, &c)| log_rising(scale * beta[v as usize], c))
                    .sum();
                num - log_rising(alpha, t.len)
            })
            .sum()
    }

    pub fn log_likelihood(&self, params: &BecParams) -> Result<f64> {
        let mut total = 0.0;
        for p in 0..self.persons {
            let psi = self.person_psi(p, params.decay[p]);
            total += self.person_log_likelihood(
                &psi,
                params.concentration[p],
                &params.inherent[p],
                &params.influence.column(p),
            );
        }
        if total.is_finite() {
            Ok(total)
        } else {
            Err(Error::Numerical(format!("BEC log-likelihood is {total}")))
        }
    }

    pub fn unigram_log_likelihood(&self, params: &BecParams) -> Result<f64> {
        let total: f64 = (0..self.persons)
            .map(|p| {
                self.person_unigram_log_likelihood(p, params.concentration[p], &params.inherent[p])
            })
            .sum();
        if total.is_finite() {
            Ok(total)
        } else {
            Err(Error::Numerical(format!(
                "unigram log-likelihood is {total}"
            )))
        }
    }
}

/// Cached pseudocounts for one target person at one decay value, restricted
/// to the word types that occur in each target utterance.
#[derive(Debug, Clone)]
pub struct PersonPsi {
    person: usize,
    tau: f64,
    others: Vec<usize>,
    offsets: Vec<usize>,
    values: Vec<f64>,
    totals: Vec<f64>,
}

impl PersonPsi {
    pub fn tau(&self) -> f64 {
        self.tau
    }
}

/// Collapsed BEC log-likelihood of the whole transcript.
pub fn log_likelihood(params: &BecParams, transcript: &Transcript) -> Result<f64> {
    BecIndex::new(transcript).log_likelihood(params)
}

/// Draws an utterance length from a Poisson with the given mean, rejecting zero.
pub fn draw_length<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> Result<usize> {
    let pois =
        Poisson::new(mean).map_err(|e| Error::InvalidParams(format!("length mean {mean}: {e}")))?;
    loop {
        let l: f64 = pois.sample(rng);
        if l >= 1.0 {
            return Ok(l as usize);
        }
    }
}

struct Slot {
    person: usize,
    start: f64,
    end: f64,
    length: Option<usize>,
}

fn generate<R: Rng + ?Sized>(
    params: &BecParams,
    mut slots: Vec<Slot>,
    mean_length: f64,
    persons: Vec<String>,
    horizon: f64,
    rng: &mut R,
) -> Result<Transcript> {
    params.validate()?;
    if persons.len() != params.num_persons() {
        return Err(Error::InvalidParams(
            "person names do not match parameters".into(),
        ));
    }
    let v = params.vocab_size();
    slots.sort_by(|a, b| a.start.total_cmp(&b.start).then(a.person.cmp(&b.person)));
    let mut done: Vec<(usize, f64, SparseCounts)> = Vec::with_capacity(slots.len());
    let mut utterances = Vec::with_capacity(slots.len());
    for slot in slots {
        let p = slot.person;
        let tau = params.decay[p];
        let mut u = params.inherent[p].clone();
        for (q, end, words) in &done {
            if *q == p || *end >= slot.start {
                continue;
            }
            let rho = params.influence[(*q, p)];
            if rho == 0.0 {
                continue;
            }
            let w = rho * decay(slot.start - end, tau);
            for (&t, &c) in words.types.iter().zip(&words.counts) {
                u[t as usize] += w * c as f64;
            }
        }
        let total: f64 = u.iter().sum();
        let alpha = params.concentration[p];
        let mut phi = Vec::with_capacity(v);
        for x in &u {
            let g = Gamma::new(alpha * x / total, 1.0)
                .map_err(|e| Error::Numerical(format!("Dirichlet shape: {e}")))?;
            phi.push(g.sample(rng));
        }
        if phi.iter().sum::<f64>() <= 0.0 {
            return Err(Error::Numerical(
                "Dirichlet draw underflowed to zero".into(),
            ));
        }
        let len = match slot.length {
            Some(l) => l,
            None => draw_length(mean_length, rng)?,
        };
        let cat = WeightedIndex::new(&phi)
            .map_err(|e| Error::Numerical(format!("token distribution: {e}")))?;
        let tokens: Vec<u32> = (0..len).map(|_| cat.sample(rng) as u32).collect();
        let u = Utterance {
            person: p,
            start: slot.start,
            duration: slot.end - slot.start,
            tokens,
        };
        done.push((p, u.end(), SparseCounts::from_tokens(&u.tokens)));
        utterances.push(u);
    }
    Transcript::new(utterances, persons, Vocabulary::synthetic(v), horizon)
}

/// Generates utterance contents for the given event times, in time order.
pub fn simulate_contents<R: Rng + ?Sized>(
    params: &BecParams,
    times: &EventTimes,
    mean_length: f64,
    persons: Vec<String>,
    rng: &mut R,
) -> Result<Transcript> {
    let slots = (0..times.num_persons())
        .flat_map(|p| {
            times.person(p).iter().map(move |&(start, end)| Slot {
                person: p,
                start,
                end,
                length: None,
            })
        })
        .collect();
    generate(params, slots, mean_length, persons, times.horizon(), rng)
}

/// Round-robin corpus: persons speak cyclically with no gaps, each
/// utterance's duration proportional to its length so that speech fills the
/// whole horizon.
pub fn simulate_round_robin<R: Rng + ?Sized>(
    params: &BecParams,
    num_utterances: usize,
    mean_length: f64,
    horizon: f64,
    persons: Vec<String>,
    rng: &mut R,
) -> Result<Transcript> {
    let n_persons = params.num_persons();
    if n_persons == 0 || num_utterances == 0 {
        return Err(Error::InvalidParams("need persons and utterances".into()));
    }
    let lengths: Vec<usize> = (0..num_utterances)
        .map(|_| draw_length(mean_length, rng))
        .collect::<Result<_>>()?;
    let total: usize = lengths.iter().sum();
    let per_token = horizon / total as f64;
    let mut t = 0.0;
    let mut slots = Vec::with_capacity(num_utterances);
    let mut cum = 0usize;
    for (i, &l) in lengths.iter().enumerate() {
        cum += l;
        let end = per_token * cum as f64;
        slots.push(Slot {
            person: i % n_persons,
            start: t,
            end,
            length: Some(l),
        });
        t = end;
    }
    generate(params, slots, mean_length, persons, horizon, rng)
}
