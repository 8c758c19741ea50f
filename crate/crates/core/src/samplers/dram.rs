//! Delayed-rejection adaptive Metropolis.
//!
//! Adaptive Metropolis part: the proposal covariance is periodically replaced
//! by `2.4^2/d` times the empirical covariance of the chain so far, plus a
//! tiny ridge. Delayed-rejection part: a first-stage rejection triggers one
//! more try from a scaled-down proposal, accepted with the standard
//! two-stage probability that preserves the target.

use super::{Chain, PhaseCounts, SamplerError};
use crate::laplace::ProposalSpec;
use crate::targets::{Phase, TargetModel};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

const ADAPT_RIDGE: f64 = 1e-10;

/// DRAM configuration. `adapt_start: None` freezes the proposal;
/// `dr_scale: None` disables the second stage — with both off the sampler
/// reduces exactly to plain Metropolis-Hastings.
#[derive(Debug, Clone)]
pub struct DramConfig {
    pub iterations: usize,
    /// Proposal used until (and unless) adaptation kicks in.
    pub initial: ProposalSpec,
    /// Iteration at which covariance adaptation begins.
    pub adapt_start: Option<usize>,
    /// Iterations between covariance rebuilds once adaptation has begun.
    pub adapt_interval: usize,
    /// Second-stage proposal standard deviations relative to the first
    /// stage (default 1/5).
    pub dr_scale: Option<f64>,
    pub x0: DVector<f64>,
}

impl DramConfig {
    pub fn new(initial: ProposalSpec, x0: DVector<f64>, iterations: usize) -> Self {
        Self {
            iterations,
            initial,
            adapt_start: Some(200),
            adapt_interval: 100,
            dr_scale: Some(0.2),
            x0,
        }
    }
}

/// Log of the two-stage acceptance probability (clamped to <= 0):
///
/// `alpha_2 = min{1, [pi(y2) q1(y2,y1) (1 - alpha_1(y2,y1))] /
///                  [pi(x)  q1(x, y1) (1 - alpha_1(x, y1))]}`
///
/// `logq_*` are the first-stage Gaussian kernels up to their shared
/// normalization. Returns `-inf` when the numerator vanishes — in
/// particular whenever `pi(y2) <= pi(y1)`, which forces
/// `alpha_1(y2, y1) = 1`.
pub fn second_stage_log_alpha(
    lp_x: f64,
    lp_y1: f64,
    lp_y2: f64,
    logq_y2_y1: f64,
    logq_x_y1: f64,
) -> f64 {
    if lp_y2 == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    // alpha_1(y2, y1) in log space, clamped at 0.
    let log_a1_rev = (lp_y1 - lp_y2).min(0.0);
    if log_a1_rev == 0.0 {
        return f64::NEG_INFINITY; // 1 - alpha_1(y2,y1) = 0
    }
    let log_a1_fwd = (lp_y1 - lp_x).min(0.0);
    if log_a1_fwd == 0.0 {
        return 0.0; // denominator 0: ratio diverges, clamp to 1
    }
    let num = lp_y2 + logq_y2_y1 + log1m_exp(log_a1_rev);
    let den = lp_x + logq_x_y1 + log1m_exp(log_a1_fwd);
    (num - den).min(0.0)
}

/// `ln(1 - e^d)` for `d < 0`, stable near both ends.
fn log1m_exp(d: f64) -> f64 {
    debug_assert!(d < 0.0);
    if d > -std::f64::consts::LN_2 {
        (-d.exp_m1()).ln()
    } else {
        (-d.exp()).ln_1p()
    }
}

/// Run DRAM. Evaluation accounting matches plain MH plus one extra
/// evaluation per delayed-rejection stage actually taken.
pub fn dram_run(
    target: &mut TargetModel,
    cfg: &DramConfig,
    rng: &mut impl Rng,
) -> Result<Chain, SamplerError> {
    let d = target.dim();
    if cfg.x0.len() != d {
        return Err(SamplerError::InvalidConfig("x0 dimension mismatch"));
    }
    if cfg.iterations == 0 {
        return Err(SamplerError::InvalidConfig("iterations must be >= 1"));
    }
    if let Some(s) = cfg.dr_scale {
        if !(s > 0.0 && s.is_finite()) {
            return Err(SamplerError::InvalidConfig("dr_scale must be positive"));
        }
    }
    let count_start = target.eval_count();
    target.set_context(Phase::Sampling, 0);
    let mut x = cfg.x0.clone();
    let mut lp_x = target.log_density(&x);
    if !lp_x.is_finite() {
        return Err(SamplerError::NonFiniteTarget);
    }

    let mut proposal = cfg.initial.clone();
    // Running mean and scatter of every visited state (including repeats),
    // for the adaptive covariance.
    let mut hist_n = 0f64;
    let mut hist_mean = DVector::zeros(d);
    let mut hist_m2 = DMatrix::zeros(d, d);
    let push_state = |state: &DVector<f64>,
                          hist_n: &mut f64,
                          hist_mean: &mut DVector<f64>,
                          hist_m2: &mut DMatrix<f64>| {
        *hist_n += 1.0;
        let delta = state - hist_mean.clone();
        *hist_mean += delta.scale(1.0 / *hist_n);
        let delta2 = state - hist_mean.clone();
        *hist_m2 += delta * delta2.transpose();
    };
    push_state(&x, &mut hist_n, &mut hist_mean, &mut hist_m2);

    let mut samples = Vec::with_capacity(cfg.iterations);
    let mut accepted = Vec::with_capacity(cfg.iterations);
    let mut evaluated = Vec::with_capacity(cfg.iterations);

    for i in 0..cfg.iterations {
        target.set_context(Phase::Sampling, i as u64);

        if let Some(start) = cfg.adapt_start {
            if i >= start && (i - start) % cfg.adapt_interval == 0 && hist_n > (d + 1) as f64 {
                let emp = hist_m2.scale(1.0 / (hist_n - 1.0));
                let mut cov = emp.scale(2.4 * 2.4 / d as f64);
                for j in 0..d {
                    cov[(j, j)] += ADAPT_RIDGE;
                }
                // A degenerate early history keeps the previous proposal.
                if let Ok(spec) = ProposalSpec::new(cov, 1.0) {
                    proposal = spec;
                }
            }
        }

        let u1: f64 = rng.random();
        let y1 = proposal.sample(&x, rng);
        let mut spent_eval = false;
        let lp_y1 = if target.in_support(&y1) {
            spent_eval = true;
            target.log_density(&y1)
        } else {
            f64::NEG_INFINITY
        };

        let mut accept = false;
        if lp_y1.is_finite() && u1 < (lp_y1 - lp_x).exp().min(1.0) {
            x = y1.clone();
            lp_x = lp_y1;
            accept = true;
        } else if let Some(scale) = cfg.dr_scale {
            // Second stage from a scaled-down proposal.
            let z: DVector<f64> = DVector::from_fn(d, |_, _| StandardNormal.sample(rng));
            let y2 = &x + (proposal.cholesky_factor() * z).scale(scale);
            let u2: f64 = rng.random();
            let lp_y2 = if target.in_support(&y2) {
                spent_eval = true;
                target.log_density(&y2)
            } else {
                f64::NEG_INFINITY
            };
            let log_alpha2 = second_stage_log_alpha(
                lp_x,
                lp_y1,
                lp_y2,
                proposal.log_kernel(&y2, &y1),
                proposal.log_kernel(&x, &y1),
            );
            if u2 < log_alpha2.exp() {
                x = y2;
                lp_x = lp_y2;
                accept = true;
            }
        }

        samples.push(x.clone());
        accepted.push(accept);
        evaluated.push(spent_eval);
        push_state(&x, &mut hist_n, &mut hist_mean, &mut hist_m2);
    }

    let total = target.eval_count() - count_start;
    Ok(Chain {
        start: cfg.x0.clone(),
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
