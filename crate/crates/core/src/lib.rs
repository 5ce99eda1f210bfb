//! Bayesian inference for influence in group discussions.
//!
//! Two generative models are fitted to time-stamped transcripts:
//!
//! * [`hawkes`]: a multivariate Hawkes process for *who speaks when*, where
//!   the end of one person's utterance excites the others' speaking rates;
//! * [`bec`]: the Bayesian Echo Chamber, a dynamic Dirichlet–multinomial
//!   language model where the words of one person's recent utterances pull
//!   the word distribution of the others.
//!
//! Both expose a directed influence network. [`sampler`] draws posterior
//! samples by slice-within-Gibbs, [`eval`] scores held-out text and
//! [`network`] summarizes and exports the posterior networks.

pub mod bec;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod hawkes;
pub mod math;
pub mod matrix;
pub mod network;
pub mod sampler;

pub use bec::BecParams;
pub use corpus::{Transcript, Utterance, Vocabulary};
pub use error::{Error, Result};
pub use hawkes::{EventTimes, HawkesParams};
pub use matrix::SquareMatrix;
