//! Surrogate-accelerated Metropolis-Hastings sampling.
//!
//! The expensive part of Metropolis-Hastings is evaluating the target
//! log-density at every proposed point. This crate cuts that cost by
//! emulating the log-target with a Gaussian process and only evaluating the
//! real target when the surrogate is too uncertain to decide acceptance:
//!
//! 1. A short Bayesian-optimization phase ([`bayes_opt`]) locates the
//!    high-probability region from a cold start.
//! 2. A brief isotropic random walk ([`laplace::refine_random_walk`]) densifies
//!    the GP around the mode until the Laplace approximation there yields a
//!    positive-definite covariance, which becomes the proposal covariance.
//! 3. The sampling loop ([`samplers::mhgp_run`]) accepts or rejects proposals
//!    from the log-normal mean of the posterior acceptance ratio, evaluating
//!    the true target only when the coefficient of variation of that ratio
//!    exceeds a threshold.
//!
//! Plain random-walk Metropolis ([`samplers::mh_run`]) and delayed-rejection
//! adaptive Metropolis ([`samplers::dram_run`]) are included as baselines,
//! together with energy-distance two-sample testing ([`diagnostics`]) to
//! compare sample sets, and benchmark targets ([`targets`]): the banana
//! distribution and a two-step reaction-kinetics ODE posterior.

pub mod bayes_opt;
pub mod diagnostics;
pub mod gp;
pub mod laplace;
pub mod rng;
pub mod samplers;
pub mod stats;
pub mod targets;

pub use bayes_opt::{BoConfig, BoResult};
pub use diagnostics::{ChainSummary, EnergyTestResult};
pub use gp::{GaussianProcess, JointPrediction, KernelHyper};
pub use laplace::{ProposalSpec, RefineConfig};
pub use samplers::{Chain, DramConfig, MhgpConfig, Phase, PhaseCounts};
pub use targets::{KineticsDataset, KineticsParams, TargetModel};
