//! Sample-set comparison and chain instrumentation.
//!
//! The headline tool is the energy-distance two-sample permutation test used
//! to decide whether two samplers drew from the same distribution. The energy
//! statistic here is the V-statistic convention — all ordered pairs,
//! including self-pairs — which matters for small-sample values.

use crate::samplers::{Chain, PhaseCounts};
use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum DiagError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("need at least 99 permutations, got {0}")]
    TooFewPermutations(usize),
    #[error("subsample of {requested} exceeds {available} post-burn-in samples")]
    SubsampleTooLarge { requested: usize, available: usize },
    #[error("empty sample set")]
    EmptySample,
}

/// Energy permutation-test outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyTestResult {
    /// Scaled statistic `nm/(n+m) * energy_distance`.
    pub statistic: f64,
    /// `(1 + #{permuted >= observed}) / (1 + n_permutations)`.
    pub p_value: f64,
    pub n_permutations: usize,
    pub seed: u64,
}

/// Energy distance between row sets `2A - B - C`, with `A` the mean
/// cross-distance and `B`, `C` the mean within-set distances over all
/// ordered pairs (V-statistic). Non-negative up to roundoff.
pub fn energy_distance(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<f64, DiagError> {
    if x.ncols() != y.ncols() {
        return Err(DiagError::DimensionMismatch(x.ncols(), y.ncols()));
    }
    if x.nrows() == 0 || y.nrows() == 0 {
        return Err(DiagError::EmptySample);
    }
    let (n, m) = (x.nrows(), y.nrows());
    let mut a = 0.0;
    for i in 0..n {
        for j in 0..m {
            a += row_distance(x, i, y, j);
        }
    }
    let mut b = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            b += row_distance(x, i, x, j);
        }
    }
    let mut c = 0.0;
    for i in 0..m {
        for j in (i + 1)..m {
            c += row_distance(y, i, y, j);
        }
    }
    // Off-diagonal sums counted once above; ordered pairs double them and
    // the diagonal contributes zero.
    Ok(2.0 * a / (n * m) as f64 - 2.0 * b / (n * n) as f64 - 2.0 * c / (m * m) as f64)
}

fn row_distance(x: &DMatrix<f64>, i: usize, y: &DMatrix<f64>, j: usize) -> f64 {
    let d = x.ncols();
    let mut s = 0.0;
    for k in 0..d {
        let diff = x[(i, k)] - y[(j, k)];
        s += diff * diff;
    }
    s.sqrt()
}

/// Two-sample energy permutation test.
///
/// The observed statistic is `nm/(n+m)` times the energy distance;
/// permutations shuffle the pooled rows, re-split into the original sizes,
/// and recompute. Deterministic under `seed`: permutation `k` draws from its
/// own ChaCha stream, so the permutation loop parallelizes without changing
/// the result.
pub fn permutation_test(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    n_permutations: usize,
    seed: u64,
) -> Result<EnergyTestResult, DiagError> {
    if n_permutations < 99 {
        return Err(DiagError::TooFewPermutations(n_permutations));
    }
    let (n, m) = (x.nrows(), y.nrows());
    let observed = scaled_statistic(energy_distance(x, y)?, n, m);

    // Pooled pairwise distances; every permuted statistic reads from here.
    let total = n + m;
    let pooled = {
        let mut p = DMatrix::zeros(total, x.ncols());
        for i in 0..n {
            p.row_mut(i).copy_from(&x.row(i));
        }
        for j in 0..m {
            p.row_mut(n + j).copy_from(&y.row(j));
        }
        p
    };
    let mut dist = vec![0.0f64; total * total];
    for i in 0..total {
        for j in (i + 1)..total {
            let d = row_distance(&pooled, i, &pooled, j);
            dist[i * total + j] = d;
            dist[j * total + i] = d;
        }
    }
    // The total pooled sum is permutation-invariant; each permutation only
    // needs its two within-set sums.
    let sum_all: f64 = dist.iter().sum();

    let exceed: usize = (0..n_permutations)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            rng.set_stream(1 + k as u64);
            let mut idx: Vec<usize> = (0..total).collect();
            idx.shuffle(&mut rng);
            let (left, right) = idx.split_at(n);
            let sum_within = |set: &[usize]| -> f64 {
                let mut s = 0.0;
                for (a, &i) in set.iter().enumerate() {
                    for &j in &set[(a + 1)..] {
                        s += dist[i * total + j];
                    }
                }
                2.0 * s
            };
            let s_xx = sum_within(left);
            let s_yy = sum_within(right);
            let s_xy = (sum_all - s_xx - s_yy) / 2.0;
            let energy = 2.0 * s_xy / (n * m) as f64
                - s_xx / (n * n) as f64
                - s_yy / (m * m) as f64;
            usize::from(scaled_statistic(energy, n, m) >= observed)
        })
        .sum();

    Ok(EnergyTestResult {
        statistic: observed,
        p_value: (1 + exceed) as f64 / (1 + n_permutations) as f64,
        n_permutations,
        seed,
    })
}

fn scaled_statistic(energy: f64, n: usize, m: usize) -> f64 {
    (n * m) as f64 / (n + m) as f64 * energy
}

/// Uniform draw of `n` post-burn-in rows without replacement, as an
/// `n x d` matrix. Deterministic under `seed`.
pub fn subsample(
    chain: &Chain,
    n: usize,
    burn_in: usize,
    seed: u64,
) -> Result<DMatrix<f64>, DiagError> {
    let available = chain.len().saturating_sub(burn_in);
    if n > available {
        return Err(DiagError::SubsampleTooLarge {
            requested: n,
            available,
        });
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let picks = rand::seq::index::sample(&mut rng, available, n);
    let d = chain.dim();
    Ok(DMatrix::from_fn(n, d, |r, c| {
        chain.samples[burn_in + picks.index(r)][c]
    }))
}

/// Count evaluated iterations per consecutive window of `window` iterations;
/// a trailing partial window is included.
pub fn evaluations_per_window(chain: &Chain, window: usize) -> Vec<u64> {
    assert!(window >= 1);
    chain
        .evaluated
        .chunks(window)
        .map(|c| c.iter().filter(|e| **e).count() as u64)
        .collect()
}

/// Post-burn-in per-dimension moments plus accounting.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChainSummary {
    pub dim: usize,
    pub iterations: usize,
    pub burn_in: usize,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub acceptance_rate: f64,
    pub phase_counts: PhaseCounts,
    pub eval_count_total: u64,
}

pub fn chain_summary(chain: &Chain, burn_in: usize) -> ChainSummary {
    assert!(burn_in < chain.len(), "burn-in must leave samples");
    let d = chain.dim();
    let rows = &chain.samples[burn_in..];
    let mean: Vec<f64> = (0..d)
        .map(|j| rows.iter().map(|s| s[j]).sum::<f64>() / rows.len() as f64)
        .collect();
    let std: Vec<f64> = (0..d)
        .map(|j| {
            let m = mean[j];
            (rows.iter().map(|s| (s[j] - m) * (s[j] - m)).sum::<f64>() / rows.len() as f64).sqrt()
        })
        .collect();
    let accepted = chain.accepted[burn_in..].iter().filter(|a| **a).count();
    ChainSummary {
        dim: d,
        iterations: chain.len(),
        burn_in,
        mean,
        std,
        acceptance_rate: accepted as f64 / (chain.len() - burn_in) as f64,
        phase_counts: chain.phase_counts,
        eval_count_total: chain.eval_count_total,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::laplace::ProposalSpec;
    use crate::rng::seeded;
    use crate::samplers::mh_run;
    use crate::targets::TargetModel;
    use nalgebra::{dmatrix, dvector, DVector};
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian_rows(n: usize, d: usize, shift: f64, r: &mut impl Rng) -> DMatrix<f64> {
        DMatrix::from_fn(n, d, |_, _| {
            let z: f64 = StandardNormal.sample(r);
            z + shift
        })
    }

    #[test]
    fn energy_of_identical_multisets_is_zero() {
        let x = dmatrix![0.0; 2.0];
        let y = dmatrix![2.0; 0.0];
        let e = energy_distance(&x, &y).unwrap();
        assert!(e.abs() < 1e-15, "{e}");
    }

    #[test]
    fn energy_hand_computed_singletons() {
        let x = dmatrix![0.0];
        let y = dmatrix![1.0];
        assert_eq!(energy_distance(&x, &y).unwrap(), 2.0);
    }

    #[test]
    fn energy_hand_computed_pairs() {
        // A = mean(|0-1|,|0-1|,|2-1|,|2-1|) = 1, B = mean(0,2,2,0) = 1, C = 0.
        let x = dmatrix![0.0; 2.0];
        let y = dmatrix![1.0; 1.0];
        assert_eq!(energy_distance(&x, &y).unwrap(), 1.0);
    }

    #[test]
    fn energy_is_symmetric_exactly() {
        let mut r = seeded(1);
        let x = gaussian_rows(17, 3, 0.0, &mut r);
        let y = gaussian_rows(11, 3, 0.5, &mut r);
        assert_eq!(
            energy_distance(&x, &y).unwrap(),
            energy_distance(&y, &x).unwrap()
        );
    }

    #[test]
    fn energy_is_translation_invariant() {
        let mut r = seeded(2);
        let x = gaussian_rows(20, 2, 0.0, &mut r);
        let y = gaussian_rows(15, 2, 1.0, &mut r);
        let base = energy_distance(&x, &y).unwrap();
        let shift = |m: &DMatrix<f64>| {
            let mut s = m.clone();
            for i in 0..s.nrows() {
                s[(i, 0)] += 7.5;
                s[(i, 1)] -= 3.25;
            }
            s
        };
        let shifted = energy_distance(&shift(&x), &shift(&y)).unwrap();
        assert!((base - shifted).abs() < 1e-10);
    }

    #[test]
    fn energy_v_statistic_is_duplication_invariant() {
        let mut r = seeded(3);
        let x = gaussian_rows(12, 2, 0.0, &mut r);
        let y = gaussian_rows(9, 2, 0.8, &mut r);
        let double = |m: &DMatrix<f64>| {
            let mut s = DMatrix::zeros(2 * m.nrows(), m.ncols());
            for i in 0..m.nrows() {
                s.row_mut(i).copy_from(&m.row(i));
                s.row_mut(m.nrows() + i).copy_from(&m.row(i));
            }
            s
        };
        let base = energy_distance(&x, &y).unwrap();
        let doubled = energy_distance(&double(&x), &double(&y)).unwrap();
        assert!((base - doubled).abs() < 1e-12, "{base} vs {doubled}");
    }

    #[test]
    fn energy_rejects_dimension_mismatch() {
        let x = dmatrix![0.0, 1.0];
        let y = dmatrix![0.0];
        assert!(matches!(
            energy_distance(&x, &y),
            Err(DiagError::DimensionMismatch(2, 1))
        ));
    }

    #[test]
    fn permutation_test_identical_sets() {
        let mut r = seeded(4);
        let x = gaussian_rows(30, 2, 0.0, &mut r);
        let out = permutation_test(&x, &x.clone(), 199, 0).unwrap();
        assert!(out.statistic.abs() < 1e-12);
        assert_eq!(out.p_value, 1.0);
    }

    #[test]
    fn permutation_test_requires_enough_permutations() {
        let x = dmatrix![0.0; 1.0];
        assert!(matches!(
            permutation_test(&x, &x.clone(), 50, 0),
            Err(DiagError::TooFewPermutations(50))
        ));
    }

    #[test]
    fn permutation_test_is_deterministic() {
        let mut r = seeded(5);
        let x = gaussian_rows(25, 2, 0.0, &mut r);
        let y = gaussian_rows(25, 2, 0.3, &mut r);
        let a = permutation_test(&x, &y, 199, 42).unwrap();
        let b = permutation_test(&x, &y, 199, 42).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn permutation_test_saturates_under_total_separation() {
        let mut r = seeded(6);
        let x = gaussian_rows(200, 1, 0.0, &mut r);
        let y = gaussian_rows(200, 1, 10.0, &mut r);
        let out = permutation_test(&x, &y, 999, 7).unwrap();
        assert_eq!(out.p_value, 1.0 / 1000.0);
    }

    #[test]
    fn permutation_test_p_value_bounds() {
        let mut r = seeded(7);
        for (shift, seed) in [(0.0, 1u64), (0.5, 2), (3.0, 3)] {
            let x = gaussian_rows(20, 2, 0.0, &mut r);
            let y = gaussian_rows(20, 2, shift, &mut r);
            let out = permutation_test(&x, &y, 199, seed).unwrap();
            assert!(out.p_value >= 1.0 / 200.0 && out.p_value <= 1.0);
        }
    }

    #[test]
    fn permutation_test_null_calibration() {
        // Both sets from N(0, I_2): p should rarely fall at the extreme low
        // end. Expected failure rate at 0.01 is 1%; 95/100 is a loose gate.
        let ok: usize = (0..100u64)
            .map(|rep| {
                let mut r = seeded(10_000 + rep);
                let x = gaussian_rows(200, 2, 0.0, &mut r);
                let y = gaussian_rows(200, 2, 0.0, &mut r);
                let out = permutation_test(&x, &y, 999, 20_000 + rep).unwrap();
                usize::from(out.p_value > 0.01)
            })
            .sum();
        assert!(ok >= 95, "only {ok}/100 null repeats had p > 0.01");
    }

    fn short_chain(n: usize) -> Chain {
        let mut target = TargetModel::standard_gaussian(2);
        let proposal = ProposalSpec::isotropic(1.0, 2);
        mh_run(&mut target, n, &proposal, &dvector![0.0, 0.0], &mut seeded(8)).unwrap()
    }

    #[test]
    fn subsample_everything_is_a_permutation() {
        let chain = short_chain(40);
        let m = subsample(&chain, 40, 0, 3).unwrap();
        let mut got: Vec<(f64, f64)> = (0..40).map(|i| (m[(i, 0)], m[(i, 1)])).collect();
        let mut want: Vec<(f64, f64)> = chain.samples.iter().map(|s| (s[0], s[1])).collect();
        got.sort_by(|a, b| a.partial_cmp(b).unwrap());
        want.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(got, want);
    }

    #[test]
    fn subsample_is_deterministic_and_contained() {
        let chain = short_chain(60);
        let a = subsample(&chain, 20, 10, 5).unwrap();
        let b = subsample(&chain, 20, 10, 5).unwrap();
        assert_eq!(a, b);
        for i in 0..20 {
            let row = DVector::from_fn(2, |j, _| a[(i, j)]);
            assert!(
                chain.samples[10..].contains(&row),
                "row {i} not in post-burn-in chain"
            );
        }
    }

    #[test]
    fn subsample_too_large_errors() {
        let chain = short_chain(30);
        assert!(matches!(
            subsample(&chain, 25, 10, 0),
            Err(DiagError::SubsampleTooLarge { .. })
        ));
    }

    #[test]
    fn windows_of_unevaluated_chain_are_zero() {
        let mut chain = short_chain(30);
        chain.evaluated = vec![false; 30];
        assert_eq!(evaluations_per_window(&chain, 10), vec![0, 0, 0]);
    }

    #[test]
    fn window_counts_partition_the_total() {
        let chain = short_chain(57);
        let windows = evaluations_per_window(&chain, 10);
        assert_eq!(windows.len(), 6); // trailing partial window included
        let total: u64 = windows.iter().sum();
        let flagged = chain.evaluated.iter().filter(|e| **e).count() as u64;
        assert_eq!(total, flagged);
    }

    #[test]
    fn summary_of_constant_chain() {
        let mut target = TargetModel::standard_gaussian(1);
        let proposal = ProposalSpec::isotropic(1e-160, 1);
        let chain = mh_run(&mut target, 50, &proposal, &dvector![2.0], &mut seeded(9)).unwrap();
        // Absorbed steps: every sample equals the start. Flags say accepted
        // (ratio 1), so acceptance is not zero here; force rejects instead.
        let mut frozen = chain.clone();
        frozen.accepted = vec![false; 50];
        let s = chain_summary(&frozen, 0);
        assert_eq!(s.std, vec![0.0]);
        assert_eq!(s.acceptance_rate, 0.0);
        assert_eq!(s.mean, vec![2.0]);
    }

    #[test]
    fn summary_acceptance_is_mean_of_flags() {
        let chain = short_chain(200);
        let s = chain_summary(&chain, 40);
        let manual = chain.accepted[40..].iter().filter(|a| **a).count() as f64 / 160.0;
        assert_eq!(s.acceptance_rate, manual);
    }

    #[test]
    fn summary_recovers_standard_normal() {
        let mut target = TargetModel::standard_gaussian(1);
        let proposal = ProposalSpec::isotropic(2.4, 1);
        let chain =
            mh_run(&mut target, 100_000, &proposal, &dvector![0.0], &mut seeded(10)).unwrap();
        let s = chain_summary(&chain, 0);
        assert!(s.mean[0].abs() < 0.05);
        assert!((s.std[0] - 1.0).abs() < 0.1);
    }
}
