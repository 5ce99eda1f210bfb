use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::bec::BecParams;
use crate::error::{Error, Result};
use crate::matrix::SquareMatrix;

/// How the second parameter of a [`GammaPrior`] is read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GammaConvention {
    #[default]
    ShapeScale,
    ShapeRate,
}

/// Gamma prior as written in configuration: a shape and a second parameter
/// that is a scale or a rate depending on the [`GammaConvention`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaPrior {
    pub shape: f64,
    pub param: f64,
}

impl GammaPrior {
    pub const fn new(shape: f64, param: f64) -> Self {
        Self { shape, param }
    }
}

/// Resolved gamma density with an explicit scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gamma1 {
    pub shape: f64,
    pub scale: f64,
}

impl Gamma1 {
    /// Log density up to an additive constant; `-inf` outside `(0, ∞)`.
    #[inline]
    pub fn log_density(&self, x: f64) -> f64 {
        if x > 0.0 && x.is_finite() {
            (self.shape - 1.0) * x.ln() - x / self.scale
        } else {
            f64::NEG_INFINITY
        }
    }

    pub fn mean(&self) -> f64 {
        self.shape * self.scale
    }

    pub fn variance(&self) -> f64 {
        self.shape * self.scale * self.scale
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        // Parameters are validated on construction through `Priors::resolve`.
        Gamma::new(self.shape, self.scale)
            .expect("valid gamma")
            .sample(rng)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Priors {
    pub convention: GammaConvention,
    pub alpha: GammaPrior,
    pub beta: GammaPrior,
    pub rho: GammaPrior,
    pub tau_l: GammaPrior,
    /// Prior on the scale factor linking word influence to turn-taking
    /// excitation in the tied model.
    pub r: GammaPrior,
}

impl Default for Priors {
    fn default() -> Self {
        Self {
            convention: GammaConvention::ShapeScale,
            alpha: GammaPrior::new(10.0, 10.0),
            beta: GammaPrior::new(10.0, 20.0),
            rho: GammaPrior::new(1.0, 2.0),
            tau_l: GammaPrior::new(10.0, 10.0),
            r: GammaPrior::new(1.0, 2.0),
        }
    }
}

/// Priors with every gamma expressed as shape and scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResolvedPriors {
    pub alpha: Gamma1,
    pub beta: Gamma1,
    pub rho: Gamma1,
    pub tau_l: Gamma1,
    pub r: Gamma1,
}

impl Priors {
    pub fn resolve(&self) -> Result<ResolvedPriors> {
        let conv = self.convention;
        let one = |name: &str, g: GammaPrior| -> Result<Gamma1> {
            if !(g.shape.is_finite() && g.shape > 0.0 && g.param.is_finite() && g.param > 0.0) {
                return Err(Error::InvalidParams(format!(
                    "prior `{name}` needs positive finite parameters, got ({}, {})",
                    g.shape, g.param
                )));
            }
            let scale = match conv {
                GammaConvention::ShapeScale => g.param,
                GammaConvention::ShapeRate => 1.0 / g.param,
            };
            Ok(Gamma1 {
                shape: g.shape,
                scale,
            })
        };
        Ok(ResolvedPriors {
            alpha: one("alpha", self.alpha)?,
            beta: one("beta", self.beta)?,
            rho: one("rho", self.rho)?,
            tau_l: one("tau_l", self.tau_l)?,
            r: one("r", self.r)?,
        })
    }
}

impl ResolvedPriors {
    /// Language-model parameters for `persons` speakers and `vocab` word
    /// types, every coordinate drawn independently from its prior.
    pub fn sample_bec<R: Rng + ?Sized>(
        &self,
        persons: usize,
        vocab: usize,
        rng: &mut R,
    ) -> BecParams {
        let concentration = (0..persons).map(|_| self.alpha.sample(rng)).collect();
        let inherent = (0..persons)
            .map(|_| (0..vocab).map(|_| self.beta.sample(rng)).collect())
            .collect();
        let mut influence = SquareMatrix::zeros(persons);
        for q in 0..persons {
            for p in (0..persons).filter(|&p| p != q) {
                influence[(q, p)] = self.rho.sample(rng);
            }
        }
        let decay = (0..persons).map(|_| self.tau_l.sample(rng)).collect();
        BecParams {
            concentration,
            inherent,
            influence,
            decay,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conventions() {
        let p = Priors::default().resolve().unwrap();
        assert_eq!(p.alpha.mean(), 100.0);
        assert_eq!(p.beta.mean(), 200.0);
        assert_eq!(p.rho.mean(), 2.0);
        let q = Priors {
            convention: GammaConvention::ShapeRate,
            ..Priors::default()
        }
        .resolve()
        .unwrap();
        assert_eq!(q.alpha.mean(), 1.0);
        assert_eq!(q.rho.mean(), 0.5);
    }

    #[test]
    fn rejects_bad_parameters() {
        let p = Priors {
            rho: GammaPrior::new(0.0, 1.0),
            ..Priors::default()
        };
        assert!(p.resolve().is_err());
    }

    #[test]
    fn toml_style_names() {
        let p: Priors =
            serde_json::from_str(r#"{"convention":"shape-rate","alpha":{"shape":2,"param":3}}"#)
                .unwrap();
        assert_eq!(p.convention, GammaConvention::ShapeRate);
        assert_eq!(p.alpha, GammaPrior::new(2.0, 3.0));
        assert_eq!(p.beta, Priors::default().beta);
    }
}
