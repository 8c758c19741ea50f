//! Hyperparameter fitting by marginal-likelihood maximization.
//!
//! Multi-start Nelder-Mead in log space over the signal variance and the ARD
//! lengthscales. The noise variance is not fitted: targets are deterministic,
//! so it stays at its floored value and acts purely as a regularizer. Five
//! starts: the current hyperparameters, a data-scale heuristic, and three
//! random perturbations of the heuristic. Above [`FIT_SUBSET_MAX`] points the
//! objective is evaluated on a random subset to bound the O(n^3) cost.

use super::{kern, GaussianProcess, GpError, KernelHyper};
use nalgebra::{Cholesky, DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;

/// Training-set size beyond which the marginal likelihood is evaluated on a
/// random subset during fitting.
pub const FIT_SUBSET_MAX: usize = 100;

const LOG_BOUND: f64 = 23.0; // parameters confined to e^[-23, 23]
const RESTARTS: usize = 5;

/// Fit result: the winning hyperparameters, their log marginal likelihood on
/// the fitting data, and whether the winning Nelder-Mead start converged
/// (best-so-far is returned either way).
#[derive(Debug, Clone)]
pub struct HyperFit {
    pub hyper: KernelHyper,
    pub log_marginal: f64,
    pub converged: bool,
}

impl GaussianProcess {
    /// Log marginal likelihood of the stored data under `hyper`.
    pub fn log_marginal_likelihood_with(&self, hyper: &KernelHyper) -> Result<f64, GpError> {
        if hyper.dim() != self.dim() {
            return Err(GpError::DimensionMismatch {
                expected: self.dim(),
                got: hyper.dim(),
            });
        }
        lml(self.inputs(), self.values(), self.mean_offset(), hyper)
            .ok_or(GpError::CholeskyFailed)
    }

    /// Maximize the log marginal likelihood over signal variance and
    /// lengthscales. Deterministic given `rng`. The returned value is never
    /// worse than the current hyperparameters (they seed one of the starts).
    pub fn fit_hyperparameters(&self, rng: &mut impl Rng) -> Result<HyperFit, GpError> {
        let n = self.len();
        if n < 2 {
            return Err(GpError::TooFewPoints { needed: 2, got: n });
        }
        let d = self.dim();

        // Fitting data: everything, or a random subset once n is large.
        let (inputs, values): (Vec<_>, Vec<_>) = if n > FIT_SUBSET_MAX {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(rng);
            idx.truncate(FIT_SUBSET_MAX);
            idx.sort_unstable();
            (
                idx.iter().map(|&i| self.inputs()[i].clone()).collect(),
                idx.iter().map(|&i| self.values()[i]).collect(),
            )
        } else {
            (self.inputs().to_vec(), self.values().to_vec())
        };
        let m0 = self.mean_offset();
        let noise = self.hyper().noise_variance();

        // Objective: negative LML over log-parameters [ln sf2, ln l_1..l_d].
        let objective = |theta: &[f64]| -> f64 {
            if theta.iter().any(|t| t.abs() > LOG_BOUND) {
                return f64::INFINITY;
            }
            let hyper = theta_to_hyper(theta, noise);
            match lml(&inputs, &values, m0, &hyper) {
                Some(v) if v.is_finite() => -v,
                _ => f64::INFINITY,
            }
        };

        let current = hyper_to_theta(self.hyper());
        let heuristic = hyper_to_theta(&heuristic_hyper(&inputs, &values, noise, d));

        let mut best_theta = current.clone();
        let mut best_obj = objective(&current);
        let mut best_converged = true;
        for restart in 0..RESTARTS {
            let start = match restart {
                0 => current.clone(),
                1 => heuristic.clone(),
                _ => heuristic
                    .iter()
                    .map(|t| t + rng.random_range(-1.5..1.5))
                    .collect(),
            };
            let (theta, obj, converged) = nelder_mead(&objective, &start, 0.4, 40 * (d + 1), 1e-6);
            if obj < best_obj {
                best_obj = obj;
                best_theta = theta;
                best_converged = converged;
            }
        }

        Ok(HyperFit {
            hyper: theta_to_hyper(&best_theta, noise),
            log_marginal: -best_obj,
            converged: best_converged,
        })
    }
}

/// Data-scale initial guess: signal variance from the value spread,
/// lengthscales from the per-dimension input spread.
fn heuristic_hyper(inputs: &[DVector<f64>], values: &[f64], noise: f64, d: usize) -> KernelHyper {
    let sf2 = crate::stats::std_dev(values).powi(2).max(1e-6);
    let lengthscales = (0..d)
        .map(|j| {
            let col: Vec<f64> = inputs.iter().map(|x| x[j]).collect();
            crate::stats::std_dev(&col).max(1e-3)
        })
        .collect();
    KernelHyper::new(sf2, lengthscales, noise).expect("heuristic hyper is valid")
}

fn hyper_to_theta(hyper: &KernelHyper) -> Vec<f64> {
    let mut theta = Vec::with_capacity(1 + hyper.dim());
    theta.push(hyper.signal_variance().ln());
    theta.extend(hyper.lengthscales().iter().map(|l| l.ln()));
    theta
}

fn theta_to_hyper(theta: &[f64], noise: f64) -> KernelHyper {
    let sf2 = theta[0].exp();
    let ls: Vec<f64> = theta[1..].iter().map(|t| t.exp()).collect();
    KernelHyper::new(sf2, ls, noise).expect("exp of bounded logs is valid")
}

/// Log marginal likelihood; `None` when the kernel matrix is not factorable.
fn lml(inputs: &[DVector<f64>], values: &[f64], m0: f64, hyper: &KernelHyper) -> Option<f64> {
    let n = inputs.len();
    if n == 0 {
        return Some(0.0);
    }
    let mut kmat = DMatrix::from_fn(n, n, |i, j| {
        kern(inputs[i].as_slice(), inputs[j].as_slice(), hyper)
    });
    for i in 0..n {
        kmat[(i, i)] += hyper.noise_variance();
    }
    let chol = Cholesky::new(kmat)?;
    let residual = DVector::from_fn(n, |i, _| values[i] - m0);
    let alpha = chol.solve(&residual);
    let log_det_half: f64 = (0..n).map(|i| chol.l_dirty()[(i, i)].ln()).sum();
    Some(
        -0.5 * residual.dot(&alpha)
            - log_det_half
            - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln(),
    )
}

/// Minimal Nelder-Mead. Returns (best point, best value, converged).
fn nelder_mead(
    f: &impl Fn(&[f64]) -> f64,
    x0: &[f64],
    step: f64,
    max_iter: usize,
    tol: f64,
) -> (Vec<f64>, f64, bool) {
    let n = x0.len();
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((x0.to_vec(), f(x0)));
    for i in 0..n {
        let mut p = x0.to_vec();
        p[i] += step;
        let v = f(&p);
        simplex.push((p, v));
    }

    let mut converged = false;
    for _ in 0..max_iter {
        simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
        let best = simplex[0].1;
        let worst = simplex[n].1;
        if (worst - best).abs() <= tol * (1.0 + best.abs()) {
            converged = true;
            break;
        }

        // Centroid of all but the worst vertex.
        let mut centroid = vec![0.0; n];
        for (p, _) in &simplex[..n] {
            for (c, v) in centroid.iter_mut().zip(p) {
                *c += v / n as f64;
            }
        }

        let reflect: Vec<f64> = centroid
            .iter()
            .zip(&simplex[n].0)
            .map(|(c, w)| c + (c - w))
            .collect();
        let fr = f(&reflect);

        if fr < simplex[0].1 {
            let expand: Vec<f64> = centroid
                .iter()
                .zip(&reflect)
                .map(|(c, r)| c + 2.0 * (r - c))
                .collect();
            let fe = f(&expand);
            simplex[n] = if fe < fr { (expand, fe) } else { (reflect, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (reflect, fr);
        } else {
            let contract: Vec<f64> = centroid
                .iter()
                .zip(&simplex[n].0)
                .map(|(c, w)| c + 0.5 * (w - c))
                .collect();
            let fc = f(&contract);
            if fc < simplex[n].1 {
                simplex[n] = (contract, fc);
            } else {
                // Shrink toward the best vertex.
                let anchor = simplex[0].0.clone();
                for entry in simplex.iter_mut().skip(1) {
                    let p: Vec<f64> = anchor
                        .iter()
                        .zip(&entry.0)
                        .map(|(a, q)| a + 0.5 * (q - a))
                        .collect();
                    let v = f(&p);
                    *entry = (p, v);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
    let (p, v) = simplex.swap_remove(0);
    (p, v, converged)
}
