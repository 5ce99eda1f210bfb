//! Multivariate Hawkes model of conversational turn-taking.
//!
//! Person `p` speaks with conditional intensity
//!
//! ```text
//! λ_p(t) = λ0_p + Σ_{q≠p} Σ_{m: end_m^q < t} ν_qp · exp(-(t - end_m^q) / τ_p)
//! ```
//!
//! Excitation starts when an utterance *ends*, so an utterance by `q` only
//! raises `p`'s rate once `q` has finished speaking. Events are observed on
//! `(0, T]`; events starting after `T` are ignored and excitation from
//! utterances ending at or after `T` never enters the likelihood.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fs;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Exp, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::decay;
use crate::matrix::SquareMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HawkesParams {
    /// Per-person base rate `λ0`.
    pub base_rate: Vec<f64>,
    /// `ν`, indexed `(from, to)`.
    pub excitation: SquareMatrix,
    /// Per-person decay time `τ_T`.
    pub decay: Vec<f64>,
}

impl HawkesParams {
    pub fn num_persons(&self) -> usize {
        self.base_rate.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.base_rate.len();
        if self.decay.len() != n || self.excitation.dim() != n {
            return Err(Error::InvalidParams(
                "Hawkes parameter dimensions disagree".into(),
            ));
        }
        if self.base_rate.iter().any(|&b| !(b.is_finite() && b > 0.0)) {
            return Err(Error::InvalidParams("base rates must be positive".into()));
        }
        if self.decay.iter().any(|&d| !(d.is_finite() && d > 0.0)) {
            return Err(Error::InvalidParams("decay times must be positive".into()));
        }
        if self
            .excitation
            .as_slice()
            .iter()
            .any(|&v| !(v.is_finite() && v >= 0.0))
        {
            return Err(Error::InvalidParams(
                "excitation must be finite and non-negative".into(),
            ));
        }
        if !self.excitation.diagonal_is_zero() {
            return Err(Error::InvalidParams("self-excitation must be zero".into()));
        }
        Ok(())
    }

    /// Total incoming excitation `Σ_{q≠p} ν_qp`.
    pub fn incoming(&self, p: usize) -> f64 {
        (0..self.num_persons())
            .filter(|&q| q != p)
            .map(|q| self.excitation[(q, p)])
            .sum()
    }
}

/// `1 - max_p τ_p Σ_{q≠p} ν_qp`: positive exactly when the column-sum norm
/// of the branching matrix is below one.
pub fn stationarity_margin(params: &HawkesParams) -> f64 {
    let worst = (0..params.num_persons())
        .map(|p| params.decay[p] * params.incoming(p))
        .fold(0.0, f64::max);
    1.0 - worst
}

/// Per-person `(start, end)` pairs over a horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventTimes {
    per_person: Vec<Vec<(f64, f64)>>,
    horizon: f64,
}

impl EventTimes {
    pub fn new(per_person: Vec<Vec<(f64, f64)>>, horizon: f64) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::Data("horizon must be positive".into()));
        }
        for (p, evs) in per_person.iter().enumerate() {
            for &(s, e) in evs {
                if !(s.is_finite() && e.is_finite() && e >= s) {
                    return Err(Error::Data(format!("person {p}: invalid event ({s}, {e})")));
                }
            }
            if evs.windows(2).any(|w| w[1].0 < w[0].0) {
                return Err(Error::Data(format!("person {p}: starts are not sorted")));
            }
        }
        Ok(Self {
            per_person,
            horizon,
        })
    }

    pub fn num_persons(&self) -> usize {
        self.per_person.len()
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn person(&self, p: usize) -> &[(f64, f64)] {
        &self.per_person[p]
    }

    pub fn total(&self) -> usize {
        self.per_person.iter().map(Vec::len).sum()
    }

    /// Count of starts in `(0, T]` per person.
    pub fn counts(&self) -> Vec<usize> {
        self.per_person
            .iter()
            .map(|e| e.iter().filter(|&&(s, _)| s <= self.horizon).count())
            .collect()
    }

    /// Adds an event, keeping starts sorted.
    pub fn push(&mut self, p: usize, start: f64, end: f64) {
        let evs = &mut self.per_person[p];
        let at = evs.partition_point(|&(s, _)| s <= start);
        evs.insert(at, (start, end));
    }
}

/// Intensity of person `p` at time `t`, summing over every earlier end time.
pub fn rate(p: usize, t: f64, params: &HawkesParams, events: &EventTimes) -> f64 {
    let tau = params.decay[p];
    let mut excite = 0.0;
    for q in 0..events.num_persons() {
        if q == p {
            continue;
        }
        let nu = params.excitation[(q, p)];
        for &(_, end) in events.person(q) {
            if end < t {
                excite += nu * decay(t - end, tau);
            }
        }
    }
    params.base_rate[p] + excite
}

/// Closed-form `∫_0^T λ_p(t) dt`.
pub fn compensator(p: usize, params: &HawkesParams, events: &EventTimes, horizon: f64) -> f64 {
    let tau = params.decay[p];
    let mut acc = params.base_rate[p] * horizon;
    for q in 0..events.num_persons() {
        if q == p {
            continue;
        }
        let nu = params.excitation[(q, p)];
        for &(_, end) in events.person(q) {
            if end < horizon {
                acc += nu
                    * tau
                    * -(-(horizon - end) / tau)
                        .max(crate::math::MIN_EXP_ARG)
                        .exp_m1();
            }
        }
    }
    acc
}

/// Precomputed event layout that makes each person's likelihood factor a
/// single linear pass.
#[derive(Debug, Clone)]
pub struct HawkesIndex {
    horizon: f64,
    starts: Vec<Vec<f64>>,
    /// For each target `p`: end times (`< T`) of other persons' events, sorted,
    /// with the source person.
    sources: Vec<Vec<(f64, usize)>>,
}

impl HawkesIndex {
    pub fn new(events: &EventTimes) -> Self {
        let n = events.num_persons();
        let t_max = events.horizon();
        let starts: Vec<Vec<f64>> = (0..n)
            .map(|p| {
                events
                    .person(p)
                    .iter()
                    .map(|&(s, _)| s)
                    .filter(|&s| s <= t_max)
                    .collect()
            })
            .collect();
        let sources = (0..n)
            .map(|p| {
                let mut src: Vec<(f64, usize)> = (0..n)
                    .filter(|&q| q != p)
                    .flat_map(|q| events.person(q).iter().map(move |&(_, e)| (e, q)))
                    .filter(|&(e, _)| e < t_max)
                    .collect();
                src.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                src
            })
            .collect();
        Self {
            horizon: t_max,
            starts,
            sources,
        }
    }

    pub fn num_persons(&self) -> usize {
        self.starts.len()
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn count(&self, p: usize) -> usize {
        self.starts[p].len()
    }

    /// Intensity at each of `p`'s starts via the decay recurrence.
    pub fn rates(&self, p: usize, base: f64, incoming: &[f64], tau: f64) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.starts[p].len());
        self.walk(p, base, incoming, tau, |r| out.push(r));
        out
    }

    #[inline]
    fn walk(&self, p: usize, base: f64, incoming: &[f64], tau: f64, mut each: impl FnMut(f64)) {
        let src = &self.sources[p];
        let mut j = 0;
        let mut excite = 0.0;
        let mut t_prev = 0.0;
        for &t in &self.starts[p] {
            excite *= decay(t - t_prev, tau);
            while j < src.len() && src[j].0 < t {
                let (e, q) = src[j];
                excite += incoming[q] * decay(t - e, tau);
                j += 1;
            }
            t_prev = t;
            each(base + excite);
        }
    }

    pub fn compensator(&self, p: usize, base: f64, incoming: &[f64], tau: f64) -> f64 {
        let mut tail = 0.0;
        for &(e, q) in &self.sources[p] {
            tail += incoming[q]
                * -(-(self.horizon - e) / tau)
                    .max(crate::math::MIN_EXP_ARG)
                    .exp_m1();
        }
        base * self.horizon + tau * tail
    }

    /// `-Λ_p(T) + Σ_n ln λ_p(t_n)` for one person; `incoming[q] = ν_qp`.
    pub fn person_log_likelihood(&self, p: usize, base: f64, incoming: &[f64], tau: f64) -> f64 {
        let mut acc = 0.0;
        self.walk(p, base, incoming, tau, |r| acc += r.ln());
        acc - self.compensator(p, base, incoming, tau)
    }

    pub fn log_likelihood(&self, params: &HawkesParams) -> Result<f64> {
        let mut total = 0.0;
        for p in 0..self.num_persons() {
            let col = params.excitation.column(p);
            total += self.person_log_likelihood(p, params.base_rate[p], &col, params.decay[p]);
        }
        if total.is_finite() {
            Ok(total)
        } else {
            Err(Error::Numerical(format!(
                "Hawkes log-likelihood is {total}"
            )))
        }
    }
}

/// Intensities at each of `p`'s starts in `(0, T]`, computed by recurrence.
pub fn rate_all_recursive(p: usize, params: &HawkesParams, events: &EventTimes) -> Vec<f64> {
    HawkesIndex::new(events).rates(
        p,
        params.base_rate[p],
        &params.excitation.column(p),
        params.decay[p],
    )
}

pub fn log_likelihood(params: &HawkesParams, events: &EventTimes) -> Result<f64> {
    HawkesIndex::new(events).log_likelihood(params)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DurationModel {
    Constant { value: f64 },
    Exponential { mean: f64 },
}

impl DurationModel {
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            DurationModel::Constant { value } => value,
            DurationModel::Exponential { mean } => {
                let e: f64 = Exp1.sample(rng);
                e * mean
            }
        }
    }
}

pub const DEFAULT_EVENT_CAP: usize = 1_000_000;

#[derive(PartialEq)]
struct PendingEnd(f64, usize);

impl Eq for PendingEnd {}

impl PartialOrd for PendingEnd {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for PendingEnd {
    // Reversed so the max-heap pops the earliest end first.
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then(other.1.cmp(&self.1))
    }
}

/// Ogata thinning over `[0, T)`.
///
/// Between end times every intensity only decays, so the current total rate
/// bounds the rate until the next pending end; candidates that would pass
/// that end are discarded and the clock jumps to the end instead.
pub fn simulate<R: Rng + ?Sized>(
    params: &HawkesParams,
    horizon: f64,
    durations: &DurationModel,
    event_cap: usize,
    rng: &mut R,
) -> Result<EventTimes> {
    params.validate()?;
    let margin = stationarity_margin(params);
    if margin <= 0.0 {
        return Err(Error::InvalidParams(format!(
            "parameters are not stationary (margin {margin})"
        )));
    }
    let n = params.num_persons();
    let mut excite = vec![0.0; n];
    let mut events = vec![Vec::new(); n];
    let mut pending: BinaryHeap<PendingEnd> = BinaryHeap::new();
    let mut t = 0.0;
    let mut total = 0usize;

    let advance = |excite: &mut [f64], dt: f64| {
        for (p, x) in excite.iter_mut().enumerate() {
            *x *= decay(dt, params.decay[p]);
        }
    };

    loop {
        let bound: f64 = (0..n).map(|p| params.base_rate[p] + excite[p]).sum();
        let wait = Exp::new(bound)
            .map_err(|e| Error::Numerical(format!("thinning bound {bound}: {e}")))?
            .sample(rng);
        let cand = t + wait;
        if let Some(&PendingEnd(end, q)) = pending.peek() {
            if end <= cand && end < horizon {
                pending.pop();
                advance(&mut excite, end - t);
                t = end;
                for p in 0..n {
                    if p != q {
                        excite[p] += params.excitation[(q, p)];
                    }
                }
                continue;
            }
        }
        if cand >= horizon {
            break;
        }
        advance(&mut excite, cand - t);
        t = cand;
        let rates: Vec<f64> = (0..n).map(|p| params.base_rate[p] + excite[p]).collect();
        let actual: f64 = rates.iter().sum();
        let u: f64 = rng.random::<f64>() * bound;
        if u >= actual {
            continue;
        }
        let mut pick = u;
        let mut who = n - 1;
        for (p, &r) in rates.iter().enumerate() {
            if pick < r {
                who = p;
                break;
            }
            pick -= r;
        }
        let end = t + durations.draw(rng);
        events[who].push((t, end));
        pending.push(PendingEnd(end, who));
        total += 1;
        if total > event_cap {
            return Err(Error::Simulation(format!(
                "more than {event_cap} events generated"
            )));
        }
    }
    EventTimes::new(events, horizon)
}

#[derive(Serialize, Deserialize)]
struct EventRecord {
    person: usize,
    start: f64,
    duration: f64,
}

#[derive(Serialize, Deserialize)]
struct EventFile {
    version: u32,
    persons: Vec<String>,
    horizon: f64,
    utterances: Vec<EventRecord>,
}

/// Writes events in the transcript JSON layout, without tokens or vocabulary.
pub fn save_events(events: &EventTimes, persons: &[String], path: &Path) -> Result<()> {
    let mut utterances: Vec<EventRecord> = (0..events.num_persons())
        .flat_map(|p| {
            events.person(p).iter().map(move |&(s, e)| EventRecord {
                person: p,
                start: s,
                duration: e - s,
            })
        })
        .collect();
    utterances.sort_by(|a, b| a.start.total_cmp(&b.start).then(a.person.cmp(&b.person)));
    let file = EventFile {
        version: crate::corpus::TRANSCRIPT_VERSION,
        persons: persons.to_vec(),
        horizon: events.horizon(),
        utterances,
    };
    let json = serde_json::to_string(&file)?;
    fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
}

/// Reads events from either an events file or a full transcript file.
pub fn load_events(path: &Path) -> Result<(EventTimes, Vec<String>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let file: EventFile = serde_json::from_slice(&bytes)?;
    if file.version != crate::corpus::TRANSCRIPT_VERSION {
        return Err(Error::SchemaVersion {
            found: file.version,
            expected: crate::corpus::TRANSCRIPT_VERSION,
        });
    }
    let mut per = vec![Vec::new(); file.persons.len()];
    for r in file.utterances {
        if r.person >= per.len() {
            return Err(Error::Data(format!(
                "event person {} out of range",
                r.person
            )));
        }
        per[r.person].push((r.start, r.start + r.duration));
    }
    for evs in &mut per {
        evs.sort_by(|a, b| a.0.total_cmp(&b.0));
    }
    Ok((EventTimes::new(per, file.horizon)?, file.persons))
}
