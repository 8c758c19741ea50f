//! Two-step reaction kinetics A -> B -> C with Arrhenius rates.
//!
//! The ODE is linear and non-stiff at benchmark rates, so a fixed-step RK4
//! integrator suffices; the two-exponential closed form serves as its oracle
//! in tests. Rates are parameterized relative to a reference temperature to
//! decorrelate the rate and activation-energy parameters:
//!
//! `k_i(T) = k_i_ref * exp(-(E_i/R) * (1/T - 1/T_ref))`

use nalgebra::DVector;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};

/// Gas constant, J/(mol K).
pub const GAS_CONSTANT: f64 = 8.314;

/// Reference temperature for the Arrhenius reparameterization, K.
pub const T_REF: f64 = 600.0;

/// Six unknowns of the kinetics posterior, in sampling order:
/// `[k1_ref, e1, k2_ref, e2, a0_batch1, a0_batch2]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KineticsParams {
    /// First reaction rate at `T_REF`, 1/time.
    pub k1_ref: f64,
    /// First activation energy, J/mol.
    pub e1: f64,
    /// Second reaction rate at `T_REF`, 1/time.
    pub k2_ref: f64,
    /// Second activation energy, J/mol.
    pub e2: f64,
    /// Initial relative concentration of A, first batch.
    pub a0_batch1: f64,
    /// Initial relative concentration of A, second batch.
    pub a0_batch2: f64,
}

impl KineticsParams {
    /// Ground-truth defaults for the synthetic benchmark.
    pub fn default_truth() -> Self {
        Self {
            k1_ref: 1.0e-1,
            e1: 8.0e4,
            k2_ref: 5.0e-2,
            e2: 1.0e5,
            a0_batch1: 1.0,
            a0_batch2: 1.0,
        }
    }

    pub fn from_vector(x: &DVector<f64>) -> Self {
        assert_eq!(x.len(), 6);
        Self {
            k1_ref: x[0],
            e1: x[1],
            k2_ref: x[2],
            e2: x[3],
            a0_batch1: x[4],
            a0_batch2: x[5],
        }
    }

    pub fn to_vector(&self) -> DVector<f64> {
        DVector::from_vec(vec![
            self.k1_ref,
            self.e1,
            self.k2_ref,
            self.e2,
            self.a0_batch1,
            self.a0_batch2,
        ])
    }

    pub fn all_positive(&self) -> bool {
        self.to_vector().iter().all(|v| *v > 0.0)
    }

    /// Arrhenius rates at temperature `t` (K).
    pub fn rates_at(&self, t: f64) -> (f64, f64) {
        let arr = |k_ref: f64, e: f64| k_ref * (-(e / GAS_CONSTANT) * (1.0 / t - 1.0 / T_REF)).exp();
        (arr(self.k1_ref, self.e1), arr(self.k2_ref, self.e2))
    }

    fn a0_for_batch(&self, batch: usize) -> f64 {
        if batch == 0 {
            self.a0_batch1
        } else {
            self.a0_batch2
        }
    }
}

/// One temperature batch: observation times with observed A and B
/// concentrations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KineticsBatch {
    pub temperature: f64,
    pub times: Vec<f64>,
    pub obs_a: Vec<f64>,
    pub obs_b: Vec<f64>,
}

/// Synthetic measurement set: two temperature batches plus the observation
/// noise scale used both to generate and to score the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KineticsDataset {
    pub batches: Vec<KineticsBatch>,
    pub noise_sigma: f64,
}

/// Right-hand side of A -> B -> C: `(dA/dt, dB/dt) = (-k1 A, k1 A - k2 B)`.
pub fn kinetics_rhs(state: (f64, f64), k1: f64, k2: f64) -> (f64, f64) {
    let (a, b) = state;
    (-k1 * a, k1 * a - k2 * b)
}

/// Integrate the two-species system from `(a0, 0)` at `t = 0` and return the
/// `(A, B)` state at each requested time.
///
/// Fixed-step RK4 with step = (smallest grid spacing) / 20; the final step
/// into each observation time is shortened to land exactly.
pub fn kinetics_solve(params: &KineticsParams, temperature: f64, times: &[f64], batch: usize) -> Vec<(f64, f64)> {
    assert!(!times.is_empty());
    assert!(times[0] >= 0.0, "times must start at or after 0");
    assert!(
        times.windows(2).all(|w| w[0] < w[1]),
        "times must be strictly increasing"
    );
    let (k1, k2) = params.rates_at(temperature);
    let a0 = params.a0_for_batch(batch);

    // Smallest grid spacing; a leading t = 0 is the integration start, not a
    // gap. A grid of just [0] never enters the stepping loop.
    let mut min_gap = f64::INFINITY;
    if times[0] > 0.0 {
        min_gap = times[0];
    }
    for w in times.windows(2) {
        min_gap = min_gap.min(w[1] - w[0]);
    }
    let h = if min_gap.is_finite() {
        min_gap / 20.0
    } else {
        1.0
    };

    let mut state = (a0, 0.0);
    let mut t = 0.0;
    let mut out = Vec::with_capacity(times.len());
    for &target_t in times {
        while t < target_t {
            let step = h.min(target_t - t);
            state = rk4_step(state, step, k1, k2);
            t += step;
        }
        out.push(state);
    }
    out
}

fn rk4_step(state: (f64, f64), h: f64, k1: f64, k2: f64) -> (f64, f64) {
    let f = |s: (f64, f64)| kinetics_rhs(s, k1, k2);
    let s1 = f(state);
    let s2 = f((state.0 + 0.5 * h * s1.0, state.1 + 0.5 * h * s1.1));
    let s3 = f((state.0 + 0.5 * h * s2.0, state.1 + 0.5 * h * s2.1));
    let s4 = f((state.0 + h * s3.0, state.1 + h * s3.1));
    (
        state.0 + h / 6.0 * (s1.0 + 2.0 * s2.0 + 2.0 * s3.0 + s4.0),
        state.1 + h / 6.0 * (s1.1 + 2.0 * s2.1 + 2.0 * s3.1 + s4.1),
    )
}

/// Gaussian log-likelihood of the dataset, constants dropped:
/// `sum -(obs - model)^2 / (2 sigma^2)` over batches, times, and species.
/// Returns `-inf` for non-positive parameters.
pub fn kinetics_loglik(params: &KineticsParams, data: &KineticsDataset) -> f64 {
    if !params.all_positive() {
        return f64::NEG_INFINITY;
    }
    let inv_two_var = 1.0 / (2.0 * data.noise_sigma * data.noise_sigma);
    let mut total = 0.0;
    for (batch_idx, batch) in data.batches.iter().enumerate() {
        let states = kinetics_solve(params, batch.temperature, &batch.times, batch_idx);
        for (i, (a, b)) in states.iter().enumerate() {
            let ra = batch.obs_a[i] - a;
            let rb = batch.obs_b[i] - b;
            total -= (ra * ra + rb * rb) * inv_two_var;
        }
    }
    total
}

/// Batch temperatures of the synthetic benchmark, K.
pub const BATCH_TEMPERATURES: [f64; 2] = [557.0, 645.0];

/// Observations per batch in the synthetic benchmark.
pub const OBS_PER_BATCH: usize = 10;

/// Generate the two-batch synthetic dataset: 10 equispaced observation times
/// over `[0, t_end]` per batch, with `t_end` chosen so A decays to ~10% at
/// that batch's temperature; observations are the forward solve plus
/// `N(0, noise_sigma^2)` noise, clipped at zero. Deterministic under `seed`.
pub fn generate_synthetic_data(
    true_params: &KineticsParams,
    noise_sigma: f64,
    seed: u64,
) -> KineticsDataset {
    assert!(noise_sigma >= 0.0);
    let mut rng = crate::rng::seeded(seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut batches = Vec::with_capacity(2);
    for (batch_idx, &temperature) in BATCH_TEMPERATURES.iter().enumerate() {
        let (k1, _) = true_params.rates_at(temperature);
        let t_end = (10.0f64).ln() / k1;
        let times: Vec<f64> = (0..OBS_PER_BATCH)
            .map(|j| j as f64 * t_end / (OBS_PER_BATCH - 1) as f64)
            .collect();
        let states = kinetics_solve(true_params, temperature, &times, batch_idx);
        let noise = |rng: &mut rand_chacha::ChaCha12Rng| -> f64 {
            if noise_sigma == 0.0 {
                0.0
            } else {
                noise_sigma * normal.sample(rng)
            }
        };
        let obs_a: Vec<f64> = states
            .iter()
            .map(|(a, _)| (a + noise(&mut rng)).max(0.0))
            .collect();
        let obs_b: Vec<f64> = states
            .iter()
            .map(|(_, b)| (b + noise(&mut rng)).max(0.0))
            .collect();
        batches.push(KineticsBatch {
            temperature,
            times,
            obs_a,
            obs_b,
        });
    }
    KineticsDataset {
        batches,
        noise_sigma,
    }
}

impl KineticsDataset {
    /// Write as CSV with header `batch,T,time,obs_A,obs_B`.
    pub fn write_csv(&self, w: &mut impl Write) -> std::io::Result<()> {
        writeln!(w, "batch,T,time,obs_A,obs_B")?;
        for (i, batch) in self.batches.iter().enumerate() {
            for (j, t) in batch.times.iter().enumerate() {
                writeln!(
                    w,
                    "{},{:.17e},{:.17e},{:.17e},{:.17e}",
                    i, batch.temperature, t, batch.obs_a[j], batch.obs_b[j]
                )?;
            }
        }
        Ok(())
    }

    /// Parse the CSV written by [`Self::write_csv`]. The noise scale is not
    /// part of the CSV and must be supplied.
    pub fn read_csv(r: &mut impl BufRead, noise_sigma: f64) -> std::io::Result<Self> {
        let bad = |msg: &str| std::io::Error::new(std::io::ErrorKind::InvalidData, msg.to_string());
        let mut lines = r.lines();
        let header = lines.next().ok_or_else(|| bad("empty file"))??;
        if header.trim() != "batch,T,time,obs_A,obs_B" {
            return Err(bad("unexpected header"));
        }
        let mut batches: Vec<KineticsBatch> = Vec::new();
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 5 {
                return Err(bad("expected 5 columns"));
            }
            let batch: usize = fields[0].parse().map_err(|_| bad("bad batch index"))?;
            let parse = |s: &str| s.parse::<f64>().map_err(|_| bad("bad float"));
            let temperature = parse(fields[1])?;
            let time = parse(fields[2])?;
            let a = parse(fields[3])?;
            let b = parse(fields[4])?;
            if batch >= batches.len() {
                if batch != batches.len() {
                    return Err(bad("batch indices must be contiguous"));
                }
                batches.push(KineticsBatch {
                    temperature,
                    times: Vec::new(),
                    obs_a: Vec::new(),
                    obs_b: Vec::new(),
                });
            }
            let entry = &mut batches[batch];
            entry.times.push(time);
            entry.obs_a.push(a);
            entry.obs_b.push(b);
        }
        Ok(Self {
            batches,
            noise_sigma,
        })
    }
}
