//! Benchmark targets with exact evaluation accounting.
//!
//! Every true log-density evaluation goes through [`TargetModel::log_density`],
//! which increments a counter and appends to an evaluation log annotated with
//! the phase and iteration that triggered it. Samplers compare their own
//! bookkeeping against this counter, so the two must agree exactly.

pub mod kinetics;

pub use kinetics::{
    generate_synthetic_data, kinetics_loglik, kinetics_rhs, kinetics_solve, KineticsDataset,
    KineticsParams,
};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Which phase of a run triggered a target evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    #[serde(rename = "bo")]
    BayesOpt,
    #[serde(rename = "refine")]
    Refine,
    #[serde(rename = "sampling")]
    Sampling,
}

/// One true target evaluation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalRecord {
    pub phase: Phase,
    pub iteration: u64,
    pub point: Vec<f64>,
    pub log_density: f64,
}

/// Whether the log-density is defined everywhere or only inside the bounds
/// box (uniform-prior posteriors).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Support {
    Unbounded,
    BoundedBox,
}

type LogDensityFn = Box<dyn Fn(&DVector<f64>) -> f64 + Send>;

/// A log-density oracle with bounds, an evaluation counter, and an
/// evaluation log.
///
/// The counter is owned by the chain using the model; run separate instances
/// for concurrent chains.
pub struct TargetModel {
    label: String,
    dim: usize,
    bounds: Vec<(f64, f64)>,
    support: Support,
    log_density_fn: LogDensityFn,
    eval_count: u64,
    eval_log: Vec<EvalRecord>,
    phase: Phase,
    iteration: u64,
    kinetics_data: Option<KineticsDataset>,
}

impl std::fmt::Debug for TargetModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TargetModel")
            .field("label", &self.label)
            .field("dim", &self.dim)
            .field("bounds", &self.bounds)
            .field("support", &self.support)
            .field("eval_count", &self.eval_count)
            .finish()
    }
}

impl TargetModel {
    pub fn new(
        label: impl Into<String>,
        bounds: Vec<(f64, f64)>,
        support: Support,
        log_density_fn: impl Fn(&DVector<f64>) -> f64 + Send + 'static,
    ) -> Self {
        assert!(!bounds.is_empty(), "target needs at least one dimension");
        assert!(
            bounds.iter().all(|(lo, hi)| lo < hi),
            "bounds must satisfy low < high"
        );
        Self {
            label: label.into(),
            dim: bounds.len(),
            bounds,
            support,
            log_density_fn: Box::new(log_density_fn),
            eval_count: 0,
            eval_log: Vec::new(),
            phase: Phase::Sampling,
            iteration: 0,
        kinetics_data: None,
        }
    }

    /// Evaluate the true log-density. Counts as one evaluation and is
    /// recorded in the evaluation log with the current phase/iteration
    /// context.
    pub fn log_density(&mut self, x: &DVector<f64>) -> f64 {
        let value = (self.log_density_fn)(x);
        self.eval_count += 1;
        self.eval_log.push(EvalRecord {
            phase: self.phase,
            iteration: self.iteration,
            point: x.iter().cloned().collect(),
            log_density: value,
        });
        value
    }

    /// True for points where the log-density is finite by construction.
    /// Samplers reject out-of-support proposals without spending an
    /// evaluation.
    pub fn in_support(&self, x: &DVector<f64>) -> bool {
        match self.support {
            Support::Unbounded => true,
            Support::BoundedBox => self.in_bounds(x),
        }
    }

    pub fn in_bounds(&self, x: &DVector<f64>) -> bool {
        x.iter()
            .zip(&self.bounds)
            .all(|(v, (lo, hi))| *v >= *lo && *v <= *hi)
    }

    /// Set the (phase, iteration) context stamped onto evaluation records.
    pub fn set_context(&mut self, phase: Phase, iteration: u64) {
        self.phase = phase;
        self.iteration = iteration;
    }

    pub fn eval_count(&self) -> u64 {
        self.eval_count
    }

    pub fn eval_log(&self) -> &[EvalRecord] {
        &self.eval_log
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn kinetics_data(&self) -> Option<&KineticsDataset> {
        self.kinetics_data.as_ref()
    }

    /// Banana distribution with twist `b`. Support is all of R^2; the search
    /// box tracks the parabolic ridge out to three standard deviations of
    /// the first coordinate so burn-in exploration can cover the arms.
    pub fn banana(b: f64) -> Self {
        let x1_max = 32.0;
        let x2_min = (100.0 * b - b * x1_max * x1_max - 5.0).min(-40.0);
        Self::new(
            "banana",
            vec![(-x1_max, x1_max), (x2_min, 20.0)],
            Support::Unbounded,
            move |x| banana_logpdf(x, b),
        )
    }

    /// Standard normal in `dim` dimensions (unnormalized).
    pub fn standard_gaussian(dim: usize) -> Self {
        Self::new(
            "gaussian",
            vec![(-8.0, 8.0); dim],
            Support::Unbounded,
            |x| -0.5 * x.norm_squared(),
        )
    }

    /// 2-D zero-mean Gaussian with unit variances and correlation `rho`
    /// (unnormalized).
    pub fn correlated_gaussian_2d(rho: f64) -> Self {
        assert!(rho.abs() < 1.0);
        let prec = 1.0 / (1.0 - rho * rho);
        Self::new(
            "gaussian_corr",
            vec![(-8.0, 8.0); 2],
            Support::Unbounded,
            move |x| -0.5 * prec * (x[0] * x[0] - 2.0 * rho * x[0] * x[1] + x[1] * x[1]),
        )
    }

    /// Posterior of the two-step kinetics model under a uniform box prior:
    /// proportional to the likelihood inside `bounds`, zero outside.
    pub fn kinetics(dataset: KineticsDataset, bounds: Vec<(f64, f64)>) -> Self {
        assert_eq!(bounds.len(), 6, "kinetics posterior has six parameters");
        let data = dataset.clone();
        let mut model = Self::new("kinetics", bounds, Support::BoundedBox, move |x| {
            kinetics_loglik(&KineticsParams::from_vector(x), &data)
        });
        model.kinetics_data = Some(dataset);
        model
    }
}

/// Log-density of the twisted ("banana") Gaussian:
/// `-x1^2/200 - (x2 + b*x1^2 - 100b)^2/2 - ln(20*pi)`.
///
/// This is N(0, diag(100, 1)) with the second coordinate bent along the
/// parabola `x2 = 100b - b*x1^2`; the twist preserves volume, so the density
/// stays normalized. Mode at `(0, 100b)` with value `-ln(20*pi)`.
pub fn banana_logpdf(x: &DVector<f64>, b: f64) -> f64 {
    let phi2 = x[1] + b * x[0] * x[0] - 100.0 * b;
    -x[0] * x[0] / 200.0 - 0.5 * phi2 * phi2 - (20.0 * PI).ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    const LN_20PI: f64 = 4.140462159403391; // ln(2*pi) + ln(10)

    #[test]
    fn banana_even_in_x1() {
        for (x1, x2) in [(3.0, -1.0), (12.5, 4.0), (0.7, 19.0)] {
            assert_eq!(
                banana_logpdf(&dvector![x1, x2], 0.1),
                banana_logpdf(&dvector![-x1, x2], 0.1)
            );
        }
    }

    #[test]
    fn banana_mode_value() {
        let v = banana_logpdf(&dvector![0.0, 10.0], 0.1);
        assert!((v + LN_20PI).abs() < 1e-12, "{v}");
    }

    #[test]
    fn banana_off_mode_value() {
        // x = (20, -30): first term 400/200 = 2, twist term vanishes.
        let v = banana_logpdf(&dvector![20.0, -30.0], 0.1);
        assert!((v - (-2.0 - LN_20PI)).abs() < 1e-12, "{v}");
    }

    #[test]
    fn banana_normalizes_under_quadrature() {
        // Trapezoid rule, 800x800 grid. The box must follow the parabola's
        // arms down to x2 = 10 - 0.1*40^2: truncating at -60 loses ~0.8% of
        // the mass.
        let (nx, ny) = (800, 800);
        let (x0, x1, y0, y1) = (-40.0, 40.0, -170.0, 20.0);
        let hx = (x1 - x0) / nx as f64;
        let hy = (y1 - y0) / ny as f64;
        let mut total = 0.0;
        for i in 0..=nx {
            let wx = if i == 0 || i == nx { 0.5 } else { 1.0 };
            let x = x0 + i as f64 * hx;
            for j in 0..=ny {
                let wy = if j == 0 || j == ny { 0.5 } else { 1.0 };
                let y = y0 + j as f64 * hy;
                total += wx * wy * banana_logpdf(&dvector![x, y], 0.1).exp();
            }
        }
        total *= hx * hy;
        assert!((total - 1.0).abs() < 1e-3, "integral {total}");
    }

    #[test]
    fn eval_counter_counts_every_call() {
        let mut t = TargetModel::banana(0.1);
        assert_eq!(t.eval_count(), 0);
        for i in 0..7 {
            t.log_density(&dvector![i as f64, 0.0]);
        }
        assert_eq!(t.eval_count(), 7);
        assert_eq!(t.eval_log().len(), 7);
    }

    #[test]
    fn log_density_is_deterministic() {
        let mut t = TargetModel::banana(0.1);
        let x = dvector![1.5, -2.0];
        assert_eq!(t.log_density(&x), t.log_density(&x));
    }

    #[test]
    fn support_box_for_kinetics() {
        let params = KineticsParams::default_truth();
        let data = generate_synthetic_data(&params, 0.01, 1);
        let bounds = vec![
            (0.02, 0.3),
            (4.0e4, 1.6e5),
            (0.01, 0.15),
            (5.0e4, 2.0e5),
            (0.7, 1.4),
            (0.7, 1.4),
        ];
        let t = TargetModel::kinetics(data, bounds);
        assert!(t.in_support(&dvector![0.1, 8.0e4, 0.05, 1.0e5, 1.0, 1.0]));
        assert!(!t.in_support(&dvector![0.0, 8.0e4, 0.05, 1.0e5, 1.0, 1.0]));
        assert!(t.kinetics_data().is_some());
    }

    #[test]
    fn context_is_stamped_on_records() {
        let mut t = TargetModel::banana(0.1);
        t.set_context(Phase::BayesOpt, 3);
        t.log_density(&dvector![0.0, 0.0]);
        t.set_context(Phase::Sampling, 9);
        t.log_density(&dvector![1.0, 1.0]);
        assert_eq!(t.eval_log()[0].phase, Phase::BayesOpt);
        assert_eq!(t.eval_log()[0].iteration, 3);
        assert_eq!(t.eval_log()[1].phase, Phase::Sampling);
        assert_eq!(t.eval_log()[1].iteration, 9);
    }
}
