//! Bayesian-optimization burn-in.
//!
//! A small evaluation budget is spent locating the high-probability region of
//! the log-target: fit a GP to every evaluation, score candidates by expected
//! improvement, evaluate the best one, repeat. The resulting GP and incumbent
//! seed the proposal-construction phase.

use crate::gp::{GaussianProcess, GpError, KernelHyper};
use crate::stats::{norm_cdf, norm_pdf};
use crate::targets::{Phase, TargetModel};
use nalgebra::DVector;
use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BoError {
    #[error("target is not finite at the starting point")]
    BadInitialization,
    #[error("starting point lies outside the search bounds")]
    StartOutOfBounds,
    #[error(transparent)]
    Gp(#[from] GpError),
}

/// Burn-in search configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct BoConfig {
    /// Target evaluations after the initial point.
    pub budget: usize,
    /// Search box, one (low, high) pair per dimension.
    pub bounds: Vec<(f64, f64)>,
    /// Uniform candidates scored per acquisition maximization.
    pub n_candidates: usize,
    /// Exploration offset xi in the expected-improvement score.
    pub exploration_weight: f64,
}

impl BoConfig {
    pub fn new(bounds: Vec<(f64, f64)>) -> Self {
        assert!(bounds.iter().all(|(lo, hi)| lo < hi), "invalid bounds");
        Self {
            budget: 50,
            bounds,
            n_candidates: 2048,
            exploration_weight: 0.01,
        }
    }

    pub fn with_budget(mut self, budget: usize) -> Self {
        self.budget = budget;
        self
    }

    fn dim(&self) -> usize {
        self.bounds.len()
    }

    fn clip(&self, x: &mut DVector<f64>) {
        for (v, (lo, hi)) in x.iter_mut().zip(&self.bounds) {
            *v = v.clamp(*lo, *hi);
        }
    }

    fn contains(&self, x: &DVector<f64>) -> bool {
        x.iter()
            .zip(&self.bounds)
            .all(|(v, (lo, hi))| *v >= *lo && *v <= *hi)
    }
}

/// Outcome of the burn-in phase: the trained GP, the incumbent, and the full
/// evaluation history in order.
#[derive(Debug, Clone)]
pub struct BoResult {
    pub gp: GaussianProcess,
    pub x_best: DVector<f64>,
    pub y_best: f64,
    pub history: Vec<(DVector<f64>, f64)>,
}

/// Expected improvement of `x` over the incumbent `y_best` with exploration
/// offset `xi`: `(mu - y_best - xi) Phi(z) + sigma phi(z)`. Zero when the
/// posterior is certain.
pub fn acquisition(
    gp: &GaussianProcess,
    x: &DVector<f64>,
    y_best: f64,
    xi: f64,
) -> Result<f64, GpError> {
    let (mu, var) = gp.predict(x)?;
    let sigma = var.sqrt();
    if sigma == 0.0 {
        return Ok(0.0);
    }
    let gain = mu - y_best - xi;
    let z = gain / sigma;
    Ok((gain * norm_cdf(z) + sigma * norm_pdf(z)).max(0.0))
}

/// Argmax of the acquisition over `n_candidates` uniform draws inside the
/// bounds, polished by a derivative-free coordinate search from the best
/// candidate. The result always lies within bounds.
pub fn propose_next(
    gp: &GaussianProcess,
    cfg: &BoConfig,
    y_best: f64,
    rng: &mut impl Rng,
) -> Result<DVector<f64>, GpError> {
    let d = cfg.dim();
    let xi = cfg.exploration_weight;
    let mut best_x = uniform_in(cfg, rng);
    let mut best_score = acquisition(gp, &best_x, y_best, xi)?;
    for _ in 1..cfg.n_candidates.max(1) {
        let x = uniform_in(cfg, rng);
        let score = acquisition(gp, &x, y_best, xi)?;
        if score > best_score {
            best_score = score;
            best_x = x;
        }
    }

    // Coordinate-descent polish with a shrinking step, clipped to bounds.
    let mut steps: Vec<f64> = cfg.bounds.iter().map(|(lo, hi)| 0.1 * (hi - lo)).collect();
    for _ in 0..8 {
        let mut improved = false;
        for j in 0..d {
            for dir in [-1.0, 1.0] {
                let mut cand = best_x.clone();
                cand[j] += dir * steps[j];
                cfg.clip(&mut cand);
                let score = acquisition(gp, &cand, y_best, xi)?;
                if score > best_score {
                    best_score = score;
                    best_x = cand;
                    improved = true;
                }
            }
        }
        if !improved {
            for s in steps.iter_mut() {
                *s *= 0.5;
            }
        }
    }
    Ok(best_x)
}

/// Run the burn-in: evaluate at `x0`, then `budget` rounds of
/// propose-evaluate-insert. Consumes exactly `budget + 1` target evaluations.
///
/// Non-finite target values at proposed points are recorded in the GP at the
/// current mean-offset floor so the search steers away from them; a
/// non-finite value at `x0` itself is an initialization error.
pub fn run_bayes_opt(
    target: &mut TargetModel,
    x0: &DVector<f64>,
    cfg: &BoConfig,
    rng: &mut impl Rng,
) -> Result<BoResult, BoError> {
    assert_eq!(cfg.dim(), target.dim(), "bounds/target dimension mismatch");
    if !cfg.contains(x0) {
        return Err(BoError::StartOutOfBounds);
    }

    let d = cfg.dim();
    let init_lengthscales: Vec<f64> = cfg.bounds.iter().map(|(lo, hi)| 0.25 * (hi - lo)).collect();
    let hyper = KernelHyper::new(1.0, init_lengthscales, crate::gp::NOISE_FLOOR)
        .expect("positive widths give a valid hyper");
    let mut gp = GaussianProcess::new(d, hyper)?.with_fit_seed(rng.random());

    target.set_context(Phase::BayesOpt, 0);
    let y0 = target.log_density(x0);
    if !y0.is_finite() {
        return Err(BoError::BadInitialization);
    }
    gp.add_point(x0.clone(), y0)?;
    let mut history = vec![(x0.clone(), y0)];
    let mut x_best = x0.clone();
    let mut y_best = y0;

    for round in 0..cfg.budget {
        target.set_context(Phase::BayesOpt, (round + 1) as u64);
        let x = propose_next(&gp, cfg, y_best, rng)?;
        let y = target.log_density(&x);
        let y_for_gp = if y.is_finite() { y } else { gp.mean_offset() };
        gp.add_point(x.clone(), y_for_gp)?;
        history.push((x.clone(), y_for_gp));
        if y.is_finite() && y > y_best {
            y_best = y;
            x_best = x;
        }
    }

    Ok(BoResult {
        gp,
        x_best,
        y_best,
        history,
    })
}

fn uniform_in(cfg: &BoConfig, rng: &mut impl Rng) -> DVector<f64> {
    DVector::from_iterator(
        cfg.dim(),
        cfg.bounds.iter().map(|(lo, hi)| rng.random_range(*lo..*hi)),
    )
}
