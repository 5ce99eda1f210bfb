//! Slice-within-Gibbs MCMC for the language model, the turn-taking model and
//! their combinations.

mod chain;
mod gibbs;
mod priors;
mod slice;
mod state;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use chain::{
    load_draws, run_chain, run_chain_persisted, ChainOutput, ChainStatus, ChainStore, Draw,
    CHAIN_VERSION,
};
pub use gibbs::{gibbs_sweep_bec, gibbs_sweep_hawkes, gibbs_sweep_tied, ModelData, Sampler};
pub use priors::{Gamma1, GammaConvention, GammaPrior, Priors, ResolvedPriors};
pub use slice::{slice_sample_1d, slice_sample_hyperrect, Interval, SliceStep};
pub use state::{Adaptation, ChainState, SliceStats, Tracker};

/// Lower truncation of the flat prior on base rates.
pub const MIN_BASE_RATE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Model {
    /// Words only, with cross-speaker influence.
    Bec,
    /// Words only, influence fixed at zero.
    Unigram,
    /// Turn-taking times only.
    Hawkes,
    /// Words and times sharing influence through `ρ = r ν`.
    Tied,
    /// Words and times fitted side by side with separate influence.
    Untied,
}

impl Model {
    pub const ALL: [Model; 5] = [
        Model::Bec,
        Model::Unigram,
        Model::Hawkes,
        Model::Tied,
        Model::Untied,
    ];

    pub fn uses_words(self) -> bool {
        !matches!(self, Model::Hawkes)
    }

    pub fn uses_times(self) -> bool {
        matches!(self, Model::Hawkes | Model::Tied | Model::Untied)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Model::Bec => "bec",
            Model::Unigram => "unigram",
            Model::Hawkes => "hawkes",
            Model::Tied => "tied",
            Model::Untied => "untied",
        }
    }
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Model {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bec" => Ok(Model::Bec),
            "unigram" => Ok(Model::Unigram),
            "hawkes" => Ok(Model::Hawkes),
            "tied" => Ok(Model::Tied),
            "untied" | "untied-combined" => Ok(Model::Untied),
            other => Err(Error::Usage(format!(
                "unknown model `{other}` (expected bec, unigram, hawkes, tied or untied)"
            ))),
        }
    }
}

/// Initial slice widths per parameter family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SliceWidths {
    pub alpha: f64,
    pub tau_l: f64,
    pub rho: f64,
    pub beta: f64,
    pub base_rate: f64,
    pub nu: f64,
    pub tau_t: f64,
    pub r: f64,
}

impl Default for SliceWidths {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            tau_l: 1.0,
            rho: 0.5,
            beta: 0.25,
            base_rate: 0.5,
            nu: 0.5,
            tau_t: 1.0,
            r: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub burn_in: usize,
    pub samples: usize,
    pub beta_inner_loops: usize,
    pub widths: SliceWidths,
    /// Tune widths during burn-in; they are frozen afterwards.
    pub adapt: bool,
    /// Sweeps between width updates while adapting.
    pub adapt_interval: usize,
    /// Cap on stepping-out expansions per univariate update.
    pub max_step_out: u32,
    pub seed: u64,
    /// Hold the tied model's scale factor at this value instead of sampling it.
    pub fixed_r: Option<f64>,
    /// Sweeps between checkpoints of a persisted chain.
    pub checkpoint_every: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            burn_in: 1000,
            samples: 3000,
            beta_inner_loops: 10,
            widths: SliceWidths::default(),
            adapt: true,
            adapt_interval: 50,
            max_step_out: 200,
            seed: 0,
            fixed_r: None,
            checkpoint_every: 100,
        }
    }
}

impl SamplerConfig {
    pub fn total_sweeps(&self) -> usize {
        self.burn_in + self.samples
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples == 0 {
            return Err(Error::Usage("samples must be at least 1".into()));
        }
        if self.beta_inner_loops == 0 {
            return Err(Error::Usage("beta_inner_loops must be at least 1".into()));
        }
        if self.adapt_interval == 0 || self.checkpoint_every == 0 {
            return Err(Error::Usage(
                "adapt_interval and checkpoint_every must be positive".into(),
            ));
        }
        if self.max_step_out == 0 {
            return Err(Error::Usage("max_step_out must be positive".into()));
        }
        let w = &self.widths;
        for (name, x) in [
            ("alpha", w.alpha),
            ("tau_l", w.tau_l),
            ("rho", w.rho),
            ("beta", w.beta),
            ("base_rate", w.base_rate),
            ("nu", w.nu),
            ("tau_t", w.tau_t),
            ("r", w.r),
        ] {
            if !(x.is_finite() && x > 0.0) {
                return Err(Error::Usage(format!(
                    "slice width `{name}` must be positive"
                )));
            }
        }
        if let Some(r) = self.fixed_r {
            if !(r.is_finite() && r >= 0.0) {
                return Err(Error::Usage(
                    "fixed_r must be finite and non-negative".into(),
                ));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests;
