//! Textbook random-walk Metropolis.

use super::{Chain, PhaseCounts, SamplerError};
use crate::laplace::ProposalSpec;
use crate::targets::{Phase, TargetModel};
use nalgebra::DVector;
use rand::Rng;

/// Random-walk Metropolis with a fixed Gaussian proposal, accepting with
/// `min(1, p(x*)/p(x))` computed through log densities.
///
/// One uniform then one proposal draw per iteration. Every in-support
/// proposal costs one target evaluation; out-of-support proposals are
/// rejected for free, so on an unbounded target the run consumes exactly
/// `iterations + 1` evaluations (the `+1` is the starting point).
pub fn mh_run(
    target: &mut TargetModel,
    iterations: usize,
    proposal: &ProposalSpec,
    x0: &DVector<f64>,
    rng: &mut impl Rng,
) -> Result<Chain, SamplerError> {
    if x0.len() != target.dim() {
        return Err(SamplerError::InvalidConfig("x0 dimension mismatch"));
    }
    let count_start = target.eval_count();
    target.set_context(Phase::Sampling, 0);
    let mut x = x0.clone();
    let mut log_p = target.log_density(&x);
    if !log_p.is_finite() {
        return Err(SamplerError::NonFiniteTarget);
    }

    let mut samples = Vec::with_capacity(iterations);
    let mut accepted = Vec::with_capacity(iterations);
    let mut evaluated = Vec::with_capacity(iterations);
    for i in 0..iterations {
        target.set_context(Phase::Sampling, i as u64);
        let u: f64 = rng.random();
        let cand = proposal.sample(&x, rng);
        let mut accept = false;
        let mut spent_eval = false;
        if target.in_support(&cand) {
            let cand_log_p = target.log_density(&cand);
            spent_eval = true;
            if cand_log_p.is_finite() && u < (cand_log_p - log_p).exp().min(1.0) {
                x = cand;
                log_p = cand_log_p;
                accept = true;
            }
        }
        samples.push(x.clone());
        accepted.push(accept);
        evaluated.push(spent_eval);
    }

    let total = target.eval_count() - count_start;
    Ok(Chain {
        start: x0.clone(),
        samples,
        accepted,
        evaluated,
        eval_count_total: total,
        phase_counts: PhaseCounts {
            bo: 0,
            refine: 0,
            sampling: total,
        },
    })
}
