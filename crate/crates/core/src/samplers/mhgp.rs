//! The surrogate-gated sampling loop and its log-normal acceptance machinery.
//!
//! The GP models `ln p`, so for a (current, proposed) pair the log acceptance
//! ratio is Gaussian and the ratio itself log-normal. Its mean,
//! `exp(mu* - mu + (var_xx + var_ss - 2 cov)/2)`, is the acceptance score;
//! its coefficient of variation, `sqrt(exp(var_xx + var_ss - 2 cov) - 1)`,
//! gates whether the true target must be evaluated. Points whose value is
//! known exactly (truly evaluated) enter both formulas with zero variance and
//! zero cross-covariance, so when everything is evaluated the scheme
//! degenerates to exact Metropolis-Hastings.

use super::{Chain, PhaseCounts, SamplerError};
use crate::bayes_opt::{run_bayes_opt, BoConfig};
use crate::gp::{GaussianProcess, JointPrediction};
use crate::laplace::{
    hessian_at, laplace_covariance, refine_random_walk, repair_scaled, scale_covariance,
    LaplaceOutcome, ProposalSpec, RefineConfig,
};
use crate::rng::{phase_rng, Stream};
use crate::targets::{Phase, TargetModel};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

/// Scale factor applied to the Laplace covariance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProposalScale {
    Fixed(f64),
    /// `2.4^2 / d`, the classic random-walk scaling.
    Haario,
}

impl ProposalScale {
    pub fn value(&self, dim: usize) -> f64 {
        match self {
            ProposalScale::Fixed(g) => *g,
            ProposalScale::Haario => 2.4 * 2.4 / dim as f64,
        }
    }
}

impl Default for ProposalScale {
    fn default() -> Self {
        ProposalScale::Fixed(0.5)
    }
}

/// Full configuration of a surrogate-gated run.
#[derive(Debug, Clone)]
pub struct MhgpConfig {
    /// Sampling-loop iterations (chain length).
    pub iterations: usize,
    /// Coefficient-of-variation gate: evaluate the target when the CoV of
    /// the acceptance ratio exceeds this.
    pub threshold: f64,
    /// Neighborhood size for local-GP prediction.
    pub local_k: usize,
    pub proposal_scale: ProposalScale,
    pub bo: BoConfig,
    pub refine: RefineConfig,
    pub seed: u64,
    /// Cold-start point; must lie within the BO bounds.
    pub x0: DVector<f64>,
}

impl MhgpConfig {
    pub fn new(bo: BoConfig, x0: DVector<f64>) -> Self {
        Self {
            iterations: 15_000,
            threshold: 0.1,
            local_k: 50,
            proposal_scale: ProposalScale::default(),
            bo,
            refine: RefineConfig::default(),
            seed: 0,
            x0,
        }
    }

    fn validate(&self) -> Result<(), SamplerError> {
        if self.iterations == 0 {
            return Err(SamplerError::InvalidConfig("iterations must be >= 1"));
        }
        if self.threshold.is_nan() || self.threshold <= 0.0 {
            return Err(SamplerError::InvalidConfig("threshold must be positive"));
        }
        if self.local_k == 0 {
            return Err(SamplerError::InvalidConfig("local_k must be >= 1"));
        }
        let gamma = self.proposal_scale.value(self.x0.len());
        if gamma.is_nan() || gamma <= 0.0 {
            return Err(SamplerError::InvalidConfig("proposal scale must be positive"));
        }
        Ok(())
    }
}

/// Which of the pair was truly evaluated during a [`get_target_value`] call.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EvalFlags {
    pub x: bool,
    pub x_star: bool,
}

impl EvalFlags {
    pub fn any(&self) -> bool {
        self.x || self.x_star
    }
}

/// Mean of the log-normal acceptance ratio:
/// `exp(mu* - mu + (var_xx + var_ss - 2 cov)/2)`. The caller applies
/// `min(1, .)`.
pub fn acceptance_ratio(jp: &JointPrediction) -> Result<f64, SamplerError> {
    if !(jp.mu.is_finite()
        && jp.mu_star.is_finite()
        && jp.var_xx.is_finite()
        && jp.var_ss.is_finite()
        && jp.cov_xs.is_finite())
    {
        return Err(SamplerError::NonFinitePrediction);
    }
    Ok((jp.mu_star - jp.mu + 0.5 * jp.pair_variance()).exp())
}

/// Coefficient of variation of the log-normal acceptance ratio:
/// `sqrt(exp(sigma^2) - 1)` with `sigma^2 = var_xx + var_ss - 2 cov`.
/// Tiny negative variances (roundoff within `1e-10`) clamp to zero; anything
/// more negative indicates a PSD violation upstream and errors.
pub fn uncertainty_ratio(jp: &JointPrediction) -> Result<f64, SamplerError> {
    let sigma_sq = jp.pair_variance();
    if sigma_sq < -1e-10 {
        return Err(SamplerError::NegativePairVariance(sigma_sq));
    }
    let sigma_sq = sigma_sq.max(0.0);
    Ok((sigma_sq.exp() - 1.0).sqrt())
}

/// Predicted-or-evaluated target values for a proposal pair.
///
/// Predicts the pair with a local GP; if the acceptance ratio's CoV clears
/// the threshold, the prediction stands and nothing is evaluated. Otherwise
/// the true target is evaluated — at `x*` directly when the current point's
/// value is already exact, else at `x` first with a re-check that may spare
/// `x*`. Every evaluation is inserted into the GP, and evaluated values
/// replace predicted means with zero variance (and zero cross-covariance).
pub fn get_target_value(
    gp: &mut GaussianProcess,
    target: &mut TargetModel,
    x: &DVector<f64>,
    x_star: &DVector<f64>,
    x_was_evaluated: bool,
    cfg: &MhgpConfig,
) -> Result<(JointPrediction, EvalFlags), SamplerError> {
    let mut flags = EvalFlags::default();

    let mut jp = predict_pair(gp, x, x_star, x_was_evaluated, cfg)?;
    if uncertainty_ratio(&jp)? <= cfg.threshold {
        return Ok((jp, flags));
    }

    if x_was_evaluated {
        let y_star = evaluate(target, x_star)?;
        gp.add_point(x_star.clone(), y_star)?;
        flags.x_star = true;
        fix_star(&mut jp, y_star);
        return Ok((jp, flags));
    }

    // Current point never truly evaluated: evaluate it, then re-check the
    // gate against a fresh local prediction before spending a second
    // evaluation on x*.
    let y = evaluate(target, x)?;
    gp.add_point(x.clone(), y)?;
    flags.x = true;
    let mut jp = predict_pair(gp, x, x_star, true, cfg)?;
    if uncertainty_ratio(&jp)? > cfg.threshold {
        let y_star = evaluate(target, x_star)?;
        gp.add_point(x_star.clone(), y_star)?;
        flags.x_star = true;
        fix_star(&mut jp, y_star);
    }
    Ok((jp, flags))
}

/// Local-GP joint prediction with exact-value substitution for an evaluated
/// current point (value looked up from the training set).
fn predict_pair(
    gp: &GaussianProcess,
    x: &DVector<f64>,
    x_star: &DVector<f64>,
    x_was_evaluated: bool,
    cfg: &MhgpConfig,
) -> Result<JointPrediction, SamplerError> {
    let local = gp.local_subset(x, x_star, cfg.local_k)?;
    let mut jp = local.predict_joint(x, x_star)?;
    if x_was_evaluated {
        if let Some(y) = gp.value_at(x) {
            jp.mu = y;
        }
        jp.var_xx = 0.0;
        jp.cov_xs = 0.0;
    }
    Ok(jp)
}

fn fix_star(jp: &mut JointPrediction, y_star: f64) {
    jp.mu_star = y_star;
    jp.var_ss = 0.0;
    jp.cov_xs = 0.0;
}

fn evaluate(target: &mut TargetModel, x: &DVector<f64>) -> Result<f64, SamplerError> {
    let y = target.log_density(x);
    if !y.is_finite() {
        return Err(SamplerError::NonFiniteTarget);
    }
    Ok(y)
}

/// Everything a surrogate-gated run produces beyond the chain itself.
#[derive(Debug, Clone)]
pub struct MhgpRun {
    pub chain: Chain,
    /// Proposal used by the sampling phase.
    pub proposal: ProposalSpec,
    /// Mode the sampling phase started from.
    pub sampling_start: DVector<f64>,
    /// True when the Laplace construction failed even after refinement and
    /// the proposal fell back to the isotropic refinement covariance.
    pub laplace_fallback: bool,
    /// Final GP training-set size.
    pub gp_size: usize,
}

/// Run the full pipeline: BO burn-in, refinement walk, Laplace proposal
/// construction, then `iterations` of surrogate-gated Metropolis-Hastings.
///
/// Deterministic given `cfg.seed`; each phase draws from its own RNG stream
/// (see [`crate::rng`]), so phase budgets can change independently.
pub fn mhgp_run(target: &mut TargetModel, cfg: &MhgpConfig) -> Result<MhgpRun, SamplerError> {
    cfg.validate()?;
    let d = target.dim();
    if cfg.x0.len() != d {
        return Err(SamplerError::InvalidConfig("x0 dimension mismatch"));
    }
    let count_start = target.eval_count();

    // Phase 1: locate the high-probability region.
    let mut bo_rng = phase_rng(cfg.seed, Stream::BayesOpt);
    let bo = run_bayes_opt(target, &cfg.x0, &cfg.bo, &mut bo_rng)?;
    let mut gp = bo.gp;
    gp.refit_now()?;
    let bo_evals = target.eval_count() - count_start;

    // Phase 2: densify the GP around the incumbent until the Laplace
    // construction stands a chance.
    let mut refine_rng = phase_rng(cfg.seed, Stream::Refine);
    let refine_cfg = RefineConfig {
        cov_threshold: cfg.threshold,
        ..cfg.refine.clone()
    };
    let (mut gp, x_mode) = {
        let (g, m) = refine_random_walk(gp, target, &bo.x_best, &refine_cfg, &mut refine_rng)?;
        (g, m)
    };
    gp.refit_now()?;
    let refine_evals = target.eval_count() - count_start - bo_evals;

    // Phase 3: proposal covariance from the Laplace approximation at the
    // mode, falling back to the isotropic refinement covariance if the GP
    // surface is still not concave there.
    let hessian = hessian_at(&gp, &x_mode)?;
    let (sigma, laplace_fallback) = match laplace_covariance(&hessian)? {
        LaplaceOutcome::Covariance(c) => (repair_scaled(&c), false),
        LaplaceOutcome::NotNegativeDefinite => {
            let stds: Vec<f64> = target
                .bounds()
                .iter()
                .map(|(lo, hi)| refine_cfg.iso_sigma * (hi - lo))
                .collect();
            let iso = DMatrix::from_diagonal(&DVector::from_iterator(
                d,
                stds.iter().map(|s| s * s),
            ));
            (iso, true)
        }
    };
    let gamma = cfg.proposal_scale.value(d);
    let proposal = scale_covariance(&sigma, gamma)?;

    // Phase 4: the gated sampling loop.
    let mut rng = phase_rng(cfg.seed, Stream::Sampling);
    let mut samples = Vec::with_capacity(cfg.iterations);
    let mut accepted = Vec::with_capacity(cfg.iterations);
    let mut evaluated = Vec::with_capacity(cfg.iterations);
    let mut x = x_mode.clone();
    let mut x_was_evaluated = true; // the mode came from a true evaluation

    for i in 0..cfg.iterations {
        target.set_context(Phase::Sampling, i as u64);
        let u: f64 = rng.random();
        let x_star = proposal.sample(&x, &mut rng);

        if !target.in_support(&x_star) {
            samples.push(x.clone());
            accepted.push(false);
            evaluated.push(false);
            continue;
        }

        let (jp, flags) = get_target_value(&mut gp, target, &x, &x_star, x_was_evaluated, cfg)?;
        let ratio = acceptance_ratio(&jp)?;
        if u < ratio.min(1.0) {
            x = x_star;
            x_was_evaluated = flags.x_star;
            accepted.push(true);
        } else {
            if flags.x {
                x_was_evaluated = true;
            }
            accepted.push(false);
        }
        samples.push(x.clone());
        evaluated.push(flags.any());
    }

    let total = target.eval_count() - count_start;
    let sampling_evals = total - bo_evals - refine_evals;
    let chain = Chain {
        start: x_mode.clone(),
        samples,
        accepted,
        evaluated,
        eval_count_total: total,
        phase_counts: PhaseCounts {
            bo: bo_evals,
            refine: refine_evals,
            sampling: sampling_evals,
        },
    };
    Ok(MhgpRun {
        chain,
        proposal,
        sampling_start: x_mode,
        laplace_fallback,
        gp_size: gp.len(),
    })
}
