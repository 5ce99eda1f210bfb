use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Model, SliceWidths};
use crate::bec::BecParams;
use crate::hawkes::HawkesParams;

/// Running summary of slice-sampler work.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SliceStats {
    pub updates: u64,
    pub shrinks: u64,
    pub evaluations: u64,
}

impl SliceStats {
    pub fn record(&mut self, shrinks: u32, evaluations: u32) {
        self.updates += 1;
        self.shrinks += shrinks as u64;
        self.evaluations += evaluations as u64;
    }

    pub fn mean_shrinks(&self) -> f64 {
        if self.updates == 0 {
            0.0
        } else {
            self.shrinks as f64 / self.updates as f64
        }
    }

    pub fn mean_evaluations(&self) -> f64 {
        if self.updates == 0 {
            0.0
        } else {
            self.evaluations as f64 / self.updates as f64
        }
    }
}

/// Slice width for one scalar parameter, with the statistics used to retune
/// it during burn-in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tracker {
    pub width: f64,
    n: u32,
    sum_abs_jump: f64,
    mean: f64,
    m2: f64,
}

impl Tracker {
    pub fn new(width: f64) -> Self {
        Self {
            width,
            n: 0,
            sum_abs_jump: 0.0,
            mean: 0.0,
            m2: 0.0,
        }
    }

    pub(crate) fn record(&mut self, from: f64, to: f64) {
        self.n += 1;
        self.sum_abs_jump += (to - from).abs();
        let delta = to - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (to - self.mean);
    }

    /// Stepping-out updates: width from the mean jump size.
    pub(crate) fn retune_from_jumps(&mut self) {
        if self.n >= 5 && self.sum_abs_jump > 0.0 {
            let w = 2.5 * self.sum_abs_jump / self.n as f64;
            if w.is_finite() {
                self.width = w;
            }
        }
        self.reset();
    }

    /// Hyperrectangle coordinates: width from the spread of recent values.
    pub(crate) fn retune_from_spread(&mut self) {
        if self.n >= 5 {
            let sd = (self.m2 / (self.n - 1) as f64).sqrt();
            if sd.is_finite() && sd > 0.0 {
                self.width = 3.0 * sd;
            }
        }
        self.reset();
    }

    fn reset(&mut self) {
        self.n = 0;
        self.sum_abs_jump = 0.0;
        self.mean = 0.0;
        self.m2 = 0.0;
    }
}

/// Per-parameter slice widths. Pairwise entries are indexed `q * P + p`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adaptation {
    pub alpha: Vec<Tracker>,
    pub tau_l: Vec<Tracker>,
    pub rho: Vec<Tracker>,
    pub beta: Vec<Vec<Tracker>>,
    pub base_rate: Vec<Tracker>,
    pub nu: Vec<Tracker>,
    pub tau_t: Vec<Tracker>,
    pub r: Tracker,
}

impl Adaptation {
    pub fn new(widths: &SliceWidths, persons: usize, vocab: usize) -> Self {
        let many = |w: f64, n: usize| vec![Tracker::new(w); n];
        Self {
            alpha: many(widths.alpha, persons),
            tau_l: many(widths.tau_l, persons),
            rho: many(widths.rho, persons * persons),
            beta: vec![many(widths.beta, vocab); persons],
            base_rate: many(widths.base_rate, persons),
            nu: many(widths.nu, persons * persons),
            tau_t: many(widths.tau_t, persons),
            r: Tracker::new(widths.r),
        }
    }

    pub(crate) fn retune(&mut self) {
        for t in self
            .alpha
            .iter_mut()
            .chain(&mut self.tau_l)
            .chain(&mut self.rho)
            .chain(&mut self.base_rate)
            .chain(&mut self.nu)
            .chain(&mut self.tau_t)
            .chain(std::iter::once(&mut self.r))
        {
            t.retune_from_jumps();
        }
        for t in self.beta.iter_mut().flatten() {
            t.retune_from_spread();
        }
    }
}

/// Complete, serializable state of one Markov chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainState {
    pub model: Model,
    pub bec: Option<BecParams>,
    pub hawkes: Option<HawkesParams>,
    /// Scale factor of the tied model.
    pub r: Option<f64>,
    pub rng: ChaCha8Rng,
    /// Completed sweeps.
    pub sweep: usize,
    /// Log-likelihood after each completed sweep.
    pub loglik: Vec<f64>,
    pub adaptation: Adaptation,
    pub stats: SliceStats,
}
