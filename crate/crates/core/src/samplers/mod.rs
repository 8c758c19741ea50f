//! Sampling loops: the surrogate-gated sampler plus plain Metropolis-Hastings
//! and DRAM baselines, all producing the same [`Chain`] bookkeeping.
//!
//! Draw order is fixed across samplers — one uniform, then one proposal draw
//! per iteration — so two samplers fed the same RNG stream see identical
//! randomness. The degeneration test (surrogate forced to evaluate
//! everywhere must reproduce plain MH decisions exactly) depends on this.

mod dram;
mod mh;
mod mhgp;


pub use dram::{dram_run, second_stage_log_alpha, DramConfig};
pub use mh::mh_run;
pub use mhgp::{
    acceptance_ratio, get_target_value, mhgp_run, uncertainty_ratio, EvalFlags, MhgpConfig,
    MhgpRun, ProposalScale,
};

pub use crate::targets::Phase;

use crate::bayes_opt::BoError;
use crate::gp::GpError;
use crate::laplace::LaplaceError;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SamplerError {
    #[error("non-finite value in joint prediction")]
    NonFinitePrediction,
    #[error("pair variance {0} is negative beyond the PSD tolerance")]
    NegativePairVariance(f64),
    #[error("target returned a non-finite log-density at an in-support point")]
    NonFiniteTarget,
    #[error("invalid sampler config: {0}")]
    InvalidConfig(&'static str),
    #[error(transparent)]
    Gp(#[from] GpError),
    #[error(transparent)]
    BayesOpt(#[from] BoError),
    #[error(transparent)]
    Laplace(#[from] LaplaceError),
}

/// True target evaluations attributed to each phase of a run. Baselines
/// book everything under `sampling`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseCounts {
    pub bo: u64,
    pub refine: u64,
    pub sampling: u64,
}

impl PhaseCounts {
    pub fn total(&self) -> u64 {
        self.bo + self.refine + self.sampling
    }
}

/// One sampler run: the per-iteration states with accept/evaluate flags and
/// exact evaluation accounting.
///
/// `samples[i]` is the chain state after iteration `i`; a rejected iteration
/// repeats the previous state bit-for-bit.
#[derive(Debug, Clone)]
pub struct Chain {
    /// State the sampling loop started from (not an iteration row).
    pub start: DVector<f64>,
    pub samples: Vec<DVector<f64>>,
    pub accepted: Vec<bool>,
    /// Whether iteration `i` triggered at least one true target evaluation.
    pub evaluated: Vec<bool>,
    /// Total true target evaluations consumed by the run that produced this
    /// chain, all phases included.
    pub eval_count_total: u64,
    pub phase_counts: PhaseCounts,
}

impl Chain {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.start.len()
    }

    /// Samples as an N x d matrix, one row per iteration.
    pub fn to_matrix(&self) -> DMatrix<f64> {
        let n = self.len();
        let d = self.dim();
        DMatrix::from_fn(n, d, |i, j| self.samples[i][j])
    }
}
