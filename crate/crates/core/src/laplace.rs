//! Proposal-covariance construction from the GP surface.
//!
//! The Hessian of the GP posterior mean at the incumbent mode is computed
//! analytically from the second derivatives of the SE-ARD kernel, inverted
//! with a sign flip (Laplace approximation), repaired to positive definite if
//! numerics demand it, and scaled into a [`ProposalSpec`]. When the GP is too
//! thin for the Hessian to be negative definite, [`refine_random_walk`]
//! densifies it around the mode with true target evaluations first.

use crate::gp::{GaussianProcess, GpError};
use crate::targets::{Phase, TargetModel};
use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LaplaceError {
    #[error("matrix is asymmetric beyond tolerance")]
    Asymmetric,
    #[error("covariance is not positive definite (Cholesky failed)")]
    NotPositiveDefinite,
    #[error("scale must be positive, got {0}")]
    BadScale(f64),
    #[error(transparent)]
    Gp(#[from] GpError),
}

/// Outcome of inverting the negated Hessian.
#[derive(Debug, Clone)]
pub enum LaplaceOutcome {
    /// `(-H)^{-1}`: usable as a proposal covariance.
    Covariance(DMatrix<f64>),
    /// `-H` is not positive definite; the GP surface is not concave at the
    /// queried point yet.
    NotNegativeDefinite,
}

const ASYMMETRY_TOL: f64 = 1e-8;

/// Hessian of the GP posterior mean at `x`, from the closed-form second
/// derivatives of the SE-ARD kernel:
///
/// `H(x) = sum_i alpha_i k(x, x_i) (u_i u_i^T - D)` with
/// `u_i = (x - x_i) ./ l^2` and `D = diag(1 ./ l^2)`.
///
/// Symmetric by construction. An empty GP yields the zero matrix (constant
/// mean). Callers should have a handful more points than dimensions before
/// the result is meaningful; quality is checked downstream via the
/// negative-definiteness of the result.
pub fn hessian_at(gp: &GaussianProcess, x: &DVector<f64>) -> Result<DMatrix<f64>, GpError> {
    let d = gp.dim();
    if x.len() != d {
        return Err(GpError::DimensionMismatch {
            expected: d,
            got: x.len(),
        });
    }
    let mut h = DMatrix::zeros(d, d);
    let Some(alpha) = gp.alpha() else {
        return Ok(h);
    };
    let inv_l2: Vec<f64> = gp
        .hyper()
        .lengthscales()
        .iter()
        .map(|l| 1.0 / (l * l))
        .collect();
    for (i, xi) in gp.inputs().iter().enumerate() {
        let w = alpha[i] * crate::gp::kern(x.as_slice(), xi.as_slice(), gp.hyper());
        let u = DVector::from_fn(d, |j, _| (x[j] - xi[j]) * inv_l2[j]);
        for p in 0..d {
            for q in 0..d {
                let outer = u[p] * u[q] - if p == q { inv_l2[p] } else { 0.0 };
                h[(p, q)] += w * outer;
            }
        }
    }
    Ok(h)
}

/// Invert the negated Hessian: `(-H)^{-1}` when `-H` is positive definite,
/// [`LaplaceOutcome::NotNegativeDefinite`] otherwise. Errors on input
/// asymmetric beyond `1e-8`.
pub fn laplace_covariance(h: &DMatrix<f64>) -> Result<LaplaceOutcome, LaplaceError> {
    assert!(h.is_square());
    let max_asym = (h - h.transpose()).abs().max();
    if max_asym > ASYMMETRY_TOL {
        return Err(LaplaceError::Asymmetric);
    }
    let neg_h = (-(h.clone() + h.transpose())).scale(0.5);
    match Cholesky::new(neg_h) {
        Some(chol) => Ok(LaplaceOutcome::Covariance(chol.inverse())),
        None => Ok(LaplaceOutcome::NotNegativeDefinite),
    }
}

/// Clip the eigenvalues of a symmetric matrix below `floor` up to `floor`
/// and reconstruct. Positive-definite inputs with spectra above the floor
/// pass through unchanged (up to roundoff).
pub fn ensure_positive_definite(sigma: &DMatrix<f64>, floor: f64) -> DMatrix<f64> {
    assert!(sigma.is_square());
    let symmetrized = (sigma + sigma.transpose()).scale(0.5);
    let mut eig = symmetrized.symmetric_eigen();
    for v in eig.eigenvalues.iter_mut() {
        if *v < floor {
            *v = floor;
        }
    }
    let rebuilt = eig.recompose();
    (rebuilt.clone() + rebuilt.transpose()).scale(0.5)
}

/// Eigenvalue floor used by the sampling pipeline, relative to the average
/// diagonal scale: `1e-6 * trace(sigma) / d`.
pub fn default_eigen_floor(sigma: &DMatrix<f64>) -> f64 {
    1e-6 * sigma.trace() / sigma.nrows() as f64
}

/// Repair a covariance whose coordinates live on very different scales:
/// normalize by the diagonal, clip the (correlation-like) spectrum at
/// `1e-6`, and restore the scales. Falls back to a raw eigenvalue clip when
/// the diagonal itself is degenerate.
pub fn repair_scaled(sigma: &DMatrix<f64>) -> DMatrix<f64> {
    let d = sigma.nrows();
    if (0..d).any(|i| sigma[(i, i)] <= 0.0 || !sigma[(i, i)].is_finite()) {
        return ensure_positive_definite(sigma, default_eigen_floor(sigma).max(1e-12));
    }
    let scales = DVector::from_fn(d, |i, _| sigma[(i, i)].sqrt());
    let mut corr = sigma.clone();
    for i in 0..d {
        for j in 0..d {
            corr[(i, j)] /= scales[i] * scales[j];
        }
    }
    let mut fixed = ensure_positive_definite(&corr, 1e-6);
    for i in 0..d {
        for j in 0..d {
            fixed[(i, j)] *= scales[i] * scales[j];
        }
    }
    fixed
}

/// Gaussian random-walk proposal: covariance `scale * sigma` with a cached
/// Cholesky factor.
#[derive(Debug, Clone)]
pub struct ProposalSpec {
    covariance: DMatrix<f64>,
    scale: f64,
    chol: DMatrix<f64>,
}

impl ProposalSpec {
    /// Build from an (unscaled) covariance and a scale factor applied as
    /// `scale * sigma`. Fails if the scaled covariance is not positive
    /// definite; repair first.
    pub fn new(covariance: DMatrix<f64>, scale: f64) -> Result<Self, LaplaceError> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(LaplaceError::BadScale(scale));
        }
        assert!(covariance.is_square());
        let scaled = covariance.scale(scale);
        let chol = Cholesky::new(scaled)
            .ok_or(LaplaceError::NotPositiveDefinite)?
            .l();
        Ok(Self {
            covariance,
            scale,
            chol,
        })
    }

    /// Isotropic proposal `sigma^2 I`.
    pub fn isotropic(sigma: f64, dim: usize) -> Self {
        Self::new(DMatrix::identity(dim, dim).scale(sigma * sigma), 1.0)
            .expect("isotropic covariance is positive definite")
    }

    /// Diagonal proposal with per-dimension standard deviations.
    pub fn diagonal(stds: &[f64]) -> Self {
        let cov = DMatrix::from_diagonal(&DVector::from_iterator(
            stds.len(),
            stds.iter().map(|s| s * s),
        ));
        Self::new(cov, 1.0).expect("positive diagonal is positive definite")
    }

    pub fn dim(&self) -> usize {
        self.covariance.nrows()
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn scaled_covariance(&self) -> DMatrix<f64> {
        self.covariance.scale(self.scale)
    }

    pub fn cholesky_factor(&self) -> &DMatrix<f64> {
        &self.chol
    }

    /// Draw `center + L z`, `z ~ N(0, I)`.
    pub fn sample(&self, center: &DVector<f64>, rng: &mut impl Rng) -> DVector<f64> {
        let z = DVector::from_fn(self.dim(), |_, _| StandardNormal.sample(rng));
        center + &self.chol * z
    }

    /// Log-density of `x` under `N(center, scale * sigma)` up to the
    /// normalization constant, which cancels in ratios over a shared
    /// proposal.
    pub fn log_kernel(&self, center: &DVector<f64>, x: &DVector<f64>) -> f64 {
        let diff = x - center;
        let v = self
            .chol
            .solve_lower_triangular(&diff)
            .expect("cached factor is nonsingular");
        -0.5 * v.dot(&v)
    }
}

/// Wrap a covariance into a [`ProposalSpec`], applying `scale * sigma`.
pub fn scale_covariance(sigma: &DMatrix<f64>, scale: f64) -> Result<ProposalSpec, LaplaceError> {
    ProposalSpec::new(sigma.clone(), scale)
}

/// Refinement-walk configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RefineConfig {
    /// Maximum walk length (true target evaluations are bounded by this).
    pub steps: usize,
    /// Proposal step as a fraction of each bound's width; the walk is
    /// isotropic in bounds-normalized coordinates.
    pub iso_sigma: f64,
    /// How often to try the Laplace construction for an early exit; 0 never
    /// checks.
    pub recheck_every: usize,
    /// Single-point coefficient-of-variation gate for the early exit,
    /// shared with the sampler threshold.
    pub cov_threshold: f64,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            steps: 100,
            iso_sigma: 0.05,
            recheck_every: 25,
            cov_threshold: 0.1,
        }
    }
}

/// Random-walk refinement around the incumbent: plain Metropolis with a
/// diagonal proposal, every evaluation inserted into the GP.
///
/// Every `recheck_every` steps the Laplace construction is attempted at the
/// best point seen; the walk exits early once it succeeds and the GP's
/// single-point coefficient of variation there is below the threshold.
/// Returns the densified GP and the best point seen.
pub fn refine_random_walk(
    mut gp: GaussianProcess,
    target: &mut TargetModel,
    x0: &DVector<f64>,
    cfg: &RefineConfig,
    rng: &mut impl Rng,
) -> Result<(GaussianProcess, DVector<f64>), LaplaceError> {
    assert!(cfg.iso_sigma > 0.0);
    let stds: Vec<f64> = target
        .bounds()
        .iter()
        .map(|(lo, hi)| cfg.iso_sigma * (hi - lo))
        .collect();
    let proposal = ProposalSpec::diagonal(&stds);

    target.set_context(Phase::Refine, 0);
    let mut cur_x = x0.clone();
    let mut cur_y = match gp.value_at(&cur_x) {
        Some(y) => y,
        None => {
            let y = target.log_density(&cur_x);
            gp.add_point(cur_x.clone(), y)?;
            y
        }
    };
    let mut best_x = cur_x.clone();
    let mut best_y = cur_y;

    for step in 0..cfg.steps {
        target.set_context(Phase::Refine, step as u64);
        let u: f64 = rng.random();
        let cand = proposal.sample(&cur_x, rng);
        if target.in_support(&cand) {
            let y = target.log_density(&cand);
            if y.is_finite() {
                gp.add_point(cand.clone(), y)?;
                if y > best_y {
                    best_y = y;
                    best_x = cand.clone();
                }
                if u < (y - cur_y).exp() {
                    cur_x = cand;
                    cur_y = y;
                }
            }
        }

        if cfg.recheck_every > 0 && (step + 1) % cfg.recheck_every == 0 {
            let h = hessian_at(&gp, &best_x)?;
            if let LaplaceOutcome::Covariance(_) = laplace_covariance(&h)? {
                if neighborhood_cov(&gp, &best_x, &stds)? <= cfg.cov_threshold {
                    break;
                }
            }
        }
    }
    Ok((gp, best_x))
}

/// Acceptance-ratio uncertainty around a point: the worst pair coefficient
/// of variation between `x` and a one-step axis probe. The point itself is
/// in the training set (zero variance), so the probes are what carry the
/// GP's remaining uncertainty near it.
fn neighborhood_cov(
    gp: &GaussianProcess,
    x: &DVector<f64>,
    steps: &[f64],
) -> Result<f64, GpError> {
    let mut worst = 0.0f64;
    for (j, step) in steps.iter().enumerate() {
        for dir in [-1.0, 1.0] {
            let mut probe = x.clone();
            probe[j] += dir * step;
            let jp = gp.predict_joint(x, &probe)?;
            let pair_var = jp.pair_variance().max(0.0);
            worst = worst.max((pair_var.exp() - 1.0).sqrt());
        }
    }
    Ok(worst)
}
