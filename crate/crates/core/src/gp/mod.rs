//! Gaussian-process regression on the log of a target density.
//!
//! Squared-exponential kernel with per-dimension (ARD) lengthscales, constant
//! prior mean, exact Cholesky inference. Two things are specific to the
//! sampling use case:
//!
//! * [`GaussianProcess::predict_joint`] returns the full 2x2 posterior over a
//!   (current, proposed) point pair — the cross-covariance is what makes the
//!   log-normal acceptance-ratio formulas work.
//! * [`GaussianProcess::local_subset`] restricts inference to the training
//!   points nearest the query pair (ARD-scaled Euclidean distance), bounding
//!   the per-iteration cost as the training set grows.
//!
//! The prior mean is pinned below the observed data (`min(y) - 2*std(y)`) so
//! the surrogate decays toward low log-density away from its training points
//! instead of reverting to zero.

mod fit;

pub use fit::HyperFit;

use nalgebra::{Cholesky, DMatrix, DVector};
use thiserror::Error;

/// Inputs closer than this (Euclidean) are treated as duplicates.
pub const DUPLICATE_TOL: f64 = 1e-12;

/// Noise variance is floored here; targets are deterministic, so the noise
/// term is purely a numerical regularizer.
pub const NOISE_FLOOR: f64 = 1e-8;

const JITTER_START: f64 = 1e-10;
const JITTER_MAX: f64 = 1e-4;

/// Default number of insertions between scheduled hyperparameter refits.
pub const DEFAULT_REFIT_INTERVAL: usize = 25;

#[derive(Debug, Error, PartialEq)]
pub enum GpError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite value")]
    NonFinite,
    #[error("need at least {needed} training points, have {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("Cholesky factorization failed after jitter escalation up to {JITTER_MAX:e}")]
    CholeskyFailed,
    #[error("invalid hyperparameter: {0}")]
    InvalidHyper(&'static str),
}

/// Squared-exponential ARD kernel hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelHyper {
    signal_variance: f64,
    lengthscales: Vec<f64>,
    noise_variance: f64,
}

impl KernelHyper {
    pub fn new(
        signal_variance: f64,
        lengthscales: Vec<f64>,
        noise_variance: f64,
    ) -> Result<Self, GpError> {
        if !(signal_variance.is_finite() && signal_variance > 0.0) {
            return Err(GpError::InvalidHyper("signal variance must be positive"));
        }
        if lengthscales.is_empty() || lengthscales.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
            return Err(GpError::InvalidHyper("lengthscales must be positive"));
        }
        if !(noise_variance.is_finite() && noise_variance >= 0.0) {
            return Err(GpError::InvalidHyper("noise variance must be non-negative"));
        }
        Ok(Self {
            signal_variance,
            lengthscales,
            noise_variance,
        })
    }

    /// Isotropic hyperparameters: one shared lengthscale across `dim` inputs.
    pub fn isotropic(signal_variance: f64, lengthscale: f64, dim: usize) -> Result<Self, GpError> {
        Self::new(signal_variance, vec![lengthscale; dim], NOISE_FLOOR)
    }

    pub fn signal_variance(&self) -> f64 {
        self.signal_variance
    }

    pub fn lengthscales(&self) -> &[f64] {
        &self.lengthscales
    }

    pub fn noise_variance(&self) -> f64 {
        self.noise_variance
    }

    pub fn dim(&self) -> usize {
        self.lengthscales.len()
    }
}

/// SE-ARD kernel: `sigma_f^2 * exp(-1/2 * sum_i (a_i - b_i)^2 / l_i^2)`.
pub fn kernel_eval(a: &DVector<f64>, b: &DVector<f64>, hyper: &KernelHyper) -> Result<f64, GpError> {
    if a.len() != hyper.dim() {
        return Err(GpError::DimensionMismatch {
            expected: hyper.dim(),
            got: a.len(),
        });
    }
    if b.len() != hyper.dim() {
        return Err(GpError::DimensionMismatch {
            expected: hyper.dim(),
            got: b.len(),
        });
    }
    Ok(kern(a.as_slice(), b.as_slice(), hyper))
}

/// Unchecked kernel on slices; hot path for matrix assembly.
pub(crate) fn kern(a: &[f64], b: &[f64], hyper: &KernelHyper) -> f64 {
    let mut q = 0.0;
    for i in 0..a.len() {
        let d = (a[i] - b[i]) / hyper.lengthscales[i];
        q += d * d;
    }
    hyper.signal_variance * (-0.5 * q).exp()
}

/// Joint posterior over a (current, proposed) point pair.
///
/// `mu`/`var_xx` belong to the current point, `mu_star`/`var_ss` to the
/// proposed one, `cov_xs` is their posterior cross-covariance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointPrediction {
    pub mu: f64,
    pub mu_star: f64,
    pub var_xx: f64,
    pub var_ss: f64,
    pub cov_xs: f64,
}

impl JointPrediction {
    /// Variance of `ln p(x*) - ln p(x)` under the joint posterior.
    pub fn pair_variance(&self) -> f64 {
        self.var_xx + self.var_ss - 2.0 * self.cov_xs
    }
}

/// Whether `add_point` stored the point or skipped it as a duplicate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AddOutcome {
    Added,
    DuplicateSkipped,
}

#[derive(Clone, Debug)]
struct Factorization {
    /// Lower-triangular Cholesky factor of `K + (noise + jitter) I`.
    l: DMatrix<f64>,
    /// `(K + (noise + jitter) I)^-1 (y - m0)`
    alpha: DVector<f64>,
    /// Jitter baked into the factor; row extensions must match it.
    jitter: f64,
}

impl Factorization {
    fn solve_alpha(l: &DMatrix<f64>, residual: &DVector<f64>) -> Option<DVector<f64>> {
        let z = l.solve_lower_triangular(residual)?;
        l.tr_solve_lower_triangular(&z)
    }
}

/// GP over log-density observations.
///
/// Single-writer mutation: inserts and refits take `&mut self`, prediction is
/// `&self` and pure, so a shared snapshot can serve many readers.
#[derive(Clone, Debug)]
pub struct GaussianProcess {
    dim: usize,
    inputs: Vec<DVector<f64>>,
    values: Vec<f64>,
    hyper: KernelHyper,
    mean_offset: f64,
    factor: Option<Factorization>,
    fit_seed: u64,
    refit_interval: usize,
    inserts_since_refit: usize,
    refit_round: u64,
}

impl GaussianProcess {
    /// Empty GP of dimension `dim`. Scheduled refits default to every
    /// [`DEFAULT_REFIT_INTERVAL`] insertions.
    pub fn new(dim: usize, hyper: KernelHyper) -> Result<Self, GpError> {
        if hyper.dim() != dim {
            return Err(GpError::DimensionMismatch {
                expected: dim,
                got: hyper.dim(),
            });
        }
        let hyper = floor_noise(hyper);
        Ok(Self {
            dim,
            inputs: Vec::new(),
            values: Vec::new(),
            hyper,
            mean_offset: 0.0,
            factor: None,
            fit_seed: 0,
            refit_interval: DEFAULT_REFIT_INTERVAL,
            inserts_since_refit: 0,
            refit_round: 0,
        })
    }

    /// Seed for the deterministic hyperparameter-refit RNG streams.
    pub fn with_fit_seed(mut self, seed: u64) -> Self {
        self.fit_seed = seed;
        self
    }

    /// Insertions between scheduled refits; 0 disables scheduled refits.
    pub fn with_refit_interval(mut self, interval: usize) -> Self {
        self.refit_interval = interval;
        self
    }

    /// Sub-GP over an explicit point set with inherited hyperparameters and
    /// mean offset (no refit, no rescheduling).
    fn from_parts(
        dim: usize,
        inputs: Vec<DVector<f64>>,
        values: Vec<f64>,
        hyper: KernelHyper,
        mean_offset: f64,
    ) -> Result<Self, GpError> {
        let mut gp = Self {
            dim,
            inputs,
            values,
            hyper,
            mean_offset,
            factor: None,
            fit_seed: 0,
            refit_interval: 0,
            inserts_since_refit: 0,
            refit_round: 0,
        };
        gp.rebuild_factor()?;
        Ok(gp)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn hyper(&self) -> &KernelHyper {
        &self.hyper
    }

    pub fn mean_offset(&self) -> f64 {
        self.mean_offset
    }

    pub fn inputs(&self) -> &[DVector<f64>] {
        &self.inputs
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub(crate) fn alpha(&self) -> Option<&DVector<f64>> {
        self.factor.as_ref().map(|f| &f.alpha)
    }

    /// Stored log-density of a training input matching `x` within
    /// [`DUPLICATE_TOL`], if any.
    pub fn value_at(&self, x: &DVector<f64>) -> Option<f64> {
        let tol_sq = DUPLICATE_TOL * DUPLICATE_TOL;
        self.inputs
            .iter()
            .position(|row| {
                let mut d = 0.0;
                for j in 0..self.dim {
                    let diff = row[j] - x[j];
                    d += diff * diff;
                }
                d <= tol_sq
            })
            .map(|i| self.values[i])
    }

    /// Insert a training point; refits hyperparameters when the scheduled
    /// interval has elapsed.
    ///
    /// Inputs within [`DUPLICATE_TOL`] of an existing row are skipped and
    /// reported via [`AddOutcome::DuplicateSkipped`].
    pub fn add_point(&mut self, x: DVector<f64>, log_p: f64) -> Result<AddOutcome, GpError> {
        if x.len() != self.dim {
            return Err(GpError::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        if !log_p.is_finite() || x.iter().any(|v| !v.is_finite()) {
            return Err(GpError::NonFinite);
        }
        if self.value_at(&x).is_some() {
            return Ok(AddOutcome::DuplicateSkipped);
        }
        self.inputs.push(x);
        self.values.push(log_p);
        self.update_mean_offset();
        if !self.try_extend_factor() {
            self.rebuild_factor()?;
        }

        self.inserts_since_refit += 1;
        if self.refit_interval > 0 && self.inserts_since_refit >= self.refit_interval && self.len() >= 2
        {
            self.refit_now()?;
        }
        Ok(AddOutcome::Added)
    }

    /// Refit hyperparameters immediately (also used at phase boundaries) and
    /// reset the scheduled-refit counter. No-op below 2 points.
    pub fn refit_now(&mut self) -> Result<(), GpError> {
        if self.len() < 2 {
            return Ok(());
        }
        let mut rng = crate::rng::fit_rng(self.fit_seed, self.refit_round);
        self.refit_round += 1;
        self.inserts_since_refit = 0;
        let fit = self.fit_hyperparameters(&mut rng)?;
        self.set_hyper(fit.hyper)
    }

    /// Replace hyperparameters and rebuild the factorization.
    pub fn set_hyper(&mut self, hyper: KernelHyper) -> Result<(), GpError> {
        if hyper.dim() != self.dim {
            return Err(GpError::DimensionMismatch {
                expected: self.dim,
                got: hyper.dim(),
            });
        }
        self.hyper = floor_noise(hyper);
        self.rebuild_factor()
    }

    /// Joint posterior over the pair `(x, x_star)`.
    ///
    /// With no training data this is the prior: means at the mean offset,
    /// variances at the signal variance, cross-covariance from the kernel.
    pub fn predict_joint(
        &self,
        x: &DVector<f64>,
        x_star: &DVector<f64>,
    ) -> Result<JointPrediction, GpError> {
        self.check_dim(x)?;
        self.check_dim(x_star)?;
        let sf2 = self.hyper.signal_variance;

        let Some(factor) = &self.factor else {
            return Ok(JointPrediction {
                mu: self.mean_offset,
                mu_star: self.mean_offset,
                var_xx: sf2,
                var_ss: sf2,
                cov_xs: kern(x.as_slice(), x_star.as_slice(), &self.hyper),
            });
        };

        let kx = self.cross_vector(x);
        let ks = self.cross_vector(x_star);
        let vx = factor
            .l
            .solve_lower_triangular(&kx)
            .ok_or(GpError::CholeskyFailed)?;
        let vs = factor
            .l
            .solve_lower_triangular(&ks)
            .ok_or(GpError::CholeskyFailed)?;

        let mu = self.mean_offset + kx.dot(&factor.alpha);
        let mu_star = self.mean_offset + ks.dot(&factor.alpha);
        let var_xx = (sf2 - vx.dot(&vx)).max(0.0);
        let var_ss = (sf2 - vs.dot(&vs)).max(0.0);

        // The pair variance var(g* - g) = var_xx + var_ss - 2 cov cancels
        // catastrophically for nearby points when the signal variance is
        // large. Compute it by the stable identity
        //   2 (sf2 - k(x,x*)) - |vx - vs|^2
        // (exp_m1 keeps the prior gap exact) and derive the cross-covariance
        // from it, so downstream formulas see a non-negative pair variance.
        let mut q = 0.0;
        for i in 0..self.dim {
            let d = (x[i] - x_star[i]) / self.hyper.lengthscales[i];
            q += d * d;
        }
        let prior_gap = -2.0 * sf2 * (-0.5 * q).exp_m1();
        let pair_var = (prior_gap - (&vx - &vs).norm_squared()).max(0.0);
        let cov_xs = 0.5 * (var_xx + var_ss - pair_var);
        Ok(JointPrediction {
            mu,
            mu_star,
            var_xx,
            var_ss,
            cov_xs,
        })
    }

    /// Posterior mean and variance at a single point.
    pub fn predict(&self, x: &DVector<f64>) -> Result<(f64, f64), GpError> {
        self.check_dim(x)?;
        let sf2 = self.hyper.signal_variance;
        let Some(factor) = &self.factor else {
            return Ok((self.mean_offset, sf2));
        };
        let kx = self.cross_vector(x);
        let vx = factor
            .l
            .solve_lower_triangular(&kx)
            .ok_or(GpError::CholeskyFailed)?;
        let mu = self.mean_offset + kx.dot(&factor.alpha);
        let var = (sf2 - vx.dot(&vx)).max(0.0);
        Ok((mu, var))
    }

    /// GP restricted to the union of the `k` nearest training points to `x`
    /// and the `k` nearest to `x_star`, under ARD-scaled Euclidean distance.
    /// Hyperparameters and mean offset are inherited, never refit. Returns
    /// the full GP when it has at most `k` points.
    pub fn local_subset(
        &self,
        x: &DVector<f64>,
        x_star: &DVector<f64>,
        k: usize,
    ) -> Result<GaussianProcess, GpError> {
        self.check_dim(x)?;
        self.check_dim(x_star)?;
        assert!(k >= 1, "local subset size must be at least 1");
        if self.len() <= k {
            return Ok(self.clone());
        }
        let mut selected: Vec<usize> = Vec::with_capacity(2 * k);
        selected.extend(self.nearest_indices(x, k));
        selected.extend(self.nearest_indices(x_star, k));
        selected.sort_unstable();
        selected.dedup();

        let inputs: Vec<DVector<f64>> = selected.iter().map(|&i| self.inputs[i].clone()).collect();
        let values: Vec<f64> = selected.iter().map(|&i| self.values[i]).collect();
        Self::from_parts(self.dim, inputs, values, self.hyper.clone(), self.mean_offset)
    }

    /// Log marginal likelihood of the stored data under the current
    /// hyperparameters.
    pub fn log_marginal_likelihood(&self) -> Result<f64, GpError> {
        self.log_marginal_likelihood_with(&self.hyper)
    }

    fn check_dim(&self, x: &DVector<f64>) -> Result<(), GpError> {
        if x.len() != self.dim {
            return Err(GpError::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        Ok(())
    }

    fn cross_vector(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(self.len(), |i, _| {
            kern(self.inputs[i].as_slice(), x.as_slice(), &self.hyper)
        })
    }

    /// Indices of the `k` nearest training points to `x` (ARD-scaled
    /// Euclidean). Ties break on index so selection is deterministic.
    fn nearest_indices(&self, x: &DVector<f64>, k: usize) -> Vec<usize> {
        let mut scored: Vec<(f64, usize)> = self
            .inputs
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let mut d = 0.0;
                for j in 0..self.dim {
                    let s = (row[j] - x[j]) / self.hyper.lengthscales[j];
                    d += s * s;
                }
                (d, i)
            })
            .collect();
        let k = k.min(scored.len());
        scored.select_nth_unstable_by(k - 1, |a, b| a.partial_cmp(b).unwrap());
        scored.truncate(k);
        scored.into_iter().map(|(_, i)| i).collect()
    }

    fn update_mean_offset(&mut self) {
        let min = self
            .values
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        self.mean_offset = min - 2.0 * crate::stats::std_dev(&self.values);
    }

    /// O(n^2) factor update for a just-appended point: one triangular solve
    /// gives the new row of L, and the new diagonal entry follows from the
    /// Schur complement. Falls back to a full rebuild (returning false) when
    /// the complement is not positive.
    fn try_extend_factor(&mut self) -> bool {
        let n = self.len();
        if n == 1 {
            return false; // first point: build from scratch
        }
        let Some(factor) = self.factor.take() else {
            return false;
        };
        let x_new = &self.inputs[n - 1];
        let kvec = DVector::from_fn(n - 1, |i, _| {
            kern(self.inputs[i].as_slice(), x_new.as_slice(), &self.hyper)
        });
        let Some(lrow) = factor.l.solve_lower_triangular(&kvec) else {
            return false;
        };
        let k_self = self.hyper.signal_variance + self.hyper.noise_variance + factor.jitter;
        let diag_sq = k_self - lrow.dot(&lrow);
        if diag_sq.is_nan() || diag_sq <= 0.0 {
            return false;
        }

        let mut l = factor.l;
        l.resize_mut(n, n, 0.0);
        for j in 0..(n - 1) {
            l[(n - 1, j)] = lrow[j];
        }
        l[(n - 1, n - 1)] = diag_sq.sqrt();

        let residual = DVector::from_fn(n, |i, _| self.values[i] - self.mean_offset);
        let Some(alpha) = Factorization::solve_alpha(&l, &residual) else {
            return false;
        };
        self.factor = Some(Factorization {
            l,
            alpha,
            jitter: factor.jitter,
        });
        true
    }

    /// Factor `K + (noise + jitter) I` from scratch, escalating jitter
    /// tenfold from `1e-10` to `1e-4` until the Cholesky succeeds.
    fn rebuild_factor(&mut self) -> Result<(), GpError> {
        let n = self.len();
        if n == 0 {
            self.factor = None;
            return Ok(());
        }
        let base = DMatrix::from_fn(n, n, |i, j| {
            kern(
                self.inputs[i].as_slice(),
                self.inputs[j].as_slice(),
                &self.hyper,
            )
        });
        let residual = DVector::from_fn(n, |i, _| self.values[i] - self.mean_offset);

        let mut jitter = 0.0;
        loop {
            let mut kmat = base.clone();
            for i in 0..n {
                kmat[(i, i)] += self.hyper.noise_variance + jitter;
            }
            if let Some(chol) = Cholesky::new(kmat) {
                let l = chol.unpack();
                if let Some(alpha) = Factorization::solve_alpha(&l, &residual) {
                    self.factor = Some(Factorization { l, alpha, jitter });
                    return Ok(());
                }
            }
            jitter = if jitter == 0.0 {
                JITTER_START
            } else {
                jitter * 10.0
            };
            if jitter > JITTER_MAX {
                return Err(GpError::CholeskyFailed);
            }
        }
    }
}

fn floor_noise(mut hyper: KernelHyper) -> KernelHyper {
    if hyper.noise_variance < NOISE_FLOOR {
        hyper.noise_variance = NOISE_FLOOR;
    }
    hyper
}

#[cfg(test)]
mod tests;
