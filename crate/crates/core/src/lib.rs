//! Statistical comparison of paired benchmark measurements and count-outcome
//! experiments, with a frequentist pipeline (rank tests, effect sizes,
//! p-value corrections, least squares) next to a Bayesian one (grid
//! posteriors over inverse speedup, Metropolis sampling of regression
//! posteriors, scenario simulation).
//!
//! The data-parallel inner loops (sampler chains, posterior grid rows,
//! scenario draws, per-pair analyses) run on rayon when the `parallel`
//! feature is enabled and fall back to plain iterators otherwise; see
//! [`Execution`].

pub mod dataio;
mod error;
pub mod freqstats;
pub mod inference;
mod linalg;
pub mod numkernel;
mod par;
pub mod regression;
pub mod report;
pub mod speedup;

pub use error::{Error, Result};
pub use par::Execution;
