use super::*;
use nalgebra::dvector;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

fn hyper_1d(sf2: f64, ell: f64, noise: f64) -> KernelHyper {
    KernelHyper::new(sf2, vec![ell], noise).unwrap()
}

fn rng(seed: u64) -> rand_chacha::ChaCha12Rng {
    crate::rng::seeded(seed)
}

#[test]
fn kernel_zero_distance_is_signal_variance() {
    let hyper = KernelHyper::new(2.0, vec![0.7, 3.0], 0.0).unwrap();
    let a = dvector![1.5, -0.25];
    assert_eq!(kernel_eval(&a, &a.clone(), &hyper).unwrap(), 2.0);
}

#[test]
fn kernel_is_symmetric() {
    let mut r = rng(11);
    let hyper = KernelHyper::new(1.3, vec![0.5, 2.0, 1.1], 0.0).unwrap();
    for _ in 0..50 {
        let a = DVector::from_fn(3, |_, _| r.random_range(-3.0..3.0));
        let b = DVector::from_fn(3, |_, _| r.random_range(-3.0..3.0));
        assert_eq!(
            kernel_eval(&a, &b, &hyper).unwrap(),
            kernel_eval(&b, &a, &hyper).unwrap()
        );
    }
}

#[test]
fn kernel_unit_distance_1d() {
    // sf2=1, l=1, |a-b|=1 -> exp(-1/2)
    let hyper = hyper_1d(1.0, 1.0, 0.0);
    let v = kernel_eval(&dvector![0.0], &dvector![1.0], &hyper).unwrap();
    assert!((v - 0.6065306597126334).abs() < 1e-15);
}

#[test]
fn kernel_dimension_mismatch() {
    let hyper = hyper_1d(1.0, 1.0, 0.0);
    let e = kernel_eval(&dvector![0.0, 1.0], &dvector![0.0], &hyper).unwrap_err();
    assert!(matches!(e, GpError::DimensionMismatch { .. }));
}

#[test]
fn add_to_empty() {
    let mut gp = GaussianProcess::new(1, hyper_1d(1.0, 1.0, 1e-8)).unwrap();
    assert_eq!(gp.add_point(dvector![0.0], 1.5).unwrap(), AddOutcome::Added);
    assert_eq!(gp.len(), 1);
}

#[test]
fn duplicate_insert_is_skipped() {
    let mut gp = GaussianProcess::new(1, hyper_1d(1.0, 1.0, 1e-8)).unwrap();
    gp.add_point(dvector![0.5], 1.0).unwrap();
    assert_eq!(
        gp.add_point(dvector![0.5], 2.0).unwrap(),
        AddOutcome::DuplicateSkipped
    );
    assert_eq!(gp.len(), 1);
    assert_eq!(gp.values(), &[1.0]);
}

#[test]
fn non_finite_value_rejected() {
    let mut gp = GaussianProcess::new(1, hyper_1d(1.0, 1.0, 1e-8)).unwrap();
    assert_eq!(
        gp.add_point(dvector![0.0], f64::NAN).unwrap_err(),
        GpError::NonFinite
    );
    assert_eq!(
        gp.add_point(dvector![0.0], f64::NEG_INFINITY).unwrap_err(),
        GpError::NonFinite
    );
}

#[test]
fn single_point_interpolation() {
    // One observation, near-zero noise: the posterior passes through it.
    let f0 = -3.25;
    let mut gp = GaussianProcess::new(1, hyper_1d(1.0, 1.0, 1e-10)).unwrap();
    gp.add_point(dvector![0.0], f0).unwrap();
    let (mu, var) = gp.predict(&dvector![0.0]).unwrap();
    assert!((mu - f0).abs() < 1e-4);
    assert!(var <= 1e-6);
}

#[test]
fn empty_gp_predicts_prior() {
    let hyper = hyper_1d(2.5, 1.0, 1e-8);
    let gp = GaussianProcess::new(1, hyper.clone()).unwrap();
    let x = dvector![0.3];
    let xs = dvector![1.3];
    let jp = gp.predict_joint(&x, &xs).unwrap();
    assert_eq!(jp.mu, 0.0);
    assert_eq!(jp.mu_star, 0.0);
    assert_eq!(jp.var_xx, 2.5);
    assert_eq!(jp.var_ss, 2.5);
    assert_eq!(jp.cov_xs, kernel_eval(&x, &xs, &hyper).unwrap());
}

#[test]
fn training_point_interpolation_in_joint() {
    let mut gp = GaussianProcess::new(1, hyper_1d(1.0, 1.0, 1e-10)).unwrap();
    for (x, y) in [(0.0, 1.0), (1.0, 0.2), (2.0, -1.0)] {
        gp.add_point(dvector![x], y).unwrap();
    }
    let jp = gp.predict_joint(&dvector![1.0], &dvector![0.5]).unwrap();
    assert!((jp.mu - 0.2).abs() < 1e-4);
    assert!(jp.var_xx <= 1e-6);
}

/// Independent dense oracle for the two-point posterior: explicit scalar
/// arithmetic (2x2 inverse by hand), no shared code with the implementation.
#[test]
fn joint_prediction_matches_dense_oracle() {
    let mut gp = GaussianProcess::new(1, hyper_1d(1.0, 1.0, 0.01))
        .unwrap()
        .with_refit_interval(0);
    gp.add_point(dvector![0.0], 1.0).unwrap();
    gp.add_point(dvector![2.0], -1.0).unwrap();

    // Oracle. Mean offset per the mean policy: min(y) - 2*std(y) = -1 - 2*1.
    let m0 = -3.0;
    let k = |a: f64, b: f64| (-0.5 * (a - b) * (a - b)).exp();
    let (k11, k12, k22) = (k(0.0, 0.0) + 0.01, k(0.0, 2.0), k(2.0, 2.0) + 0.01);
    let det = k11 * k22 - k12 * k12;
    // K^{-1} (y - m0) with y = (1, -1).
    let (r1, r2) = (1.0 - m0, -1.0 - m0);
    let a1 = (k22 * r1 - k12 * r2) / det;
    let a2 = (-k12 * r1 + k11 * r2) / det;
    let kq = [k(0.0, 1.0), k(2.0, 1.0)];
    let mu_oracle = m0 + kq[0] * a1 + kq[1] * a2;
    // k(q,q) - kq^T K^{-1} kq
    let kinv_kq1 = (k22 * kq[0] - k12 * kq[1]) / det;
    let kinv_kq2 = (-k12 * kq[0] + k11 * kq[1]) / det;
    let var_oracle = 1.0 - (kq[0] * kinv_kq1 + kq[1] * kinv_kq2);

    assert_eq!(gp.mean_offset(), m0);
    let jp = gp.predict_joint(&dvector![1.0], &dvector![1.0]).unwrap();
    assert!((jp.mu - mu_oracle).abs() < 1e-12);
    assert!((jp.mu_star - mu_oracle).abs() < 1e-12);
    assert!((jp.var_xx - var_oracle).abs() < 1e-12);
    assert!((jp.var_ss - var_oracle).abs() < 1e-12);
    assert!((jp.cov_xs - var_oracle).abs() < 1e-12);
}

#[test]
fn local_subset_returns_full_gp_when_small() {
    let mut gp = GaussianProcess::new(1, hyper_1d(1.0, 1.0, 1e-8))
        .unwrap()
        .with_refit_interval(0);
    for i in 0..10 {
        gp.add_point(dvector![i as f64], (i as f64).sin()).unwrap();
    }
    let sub = gp
        .local_subset(&dvector![0.0], &dvector![5.0], 20)
        .unwrap();
    assert_eq!(sub.len(), 10);
}

#[test]
fn local_subset_coincident_queries() {
    let mut gp = GaussianProcess::new(1, hyper_1d(1.0, 1.0, 1e-8))
        .unwrap()
        .with_refit_interval(0);
    let mut r = rng(3);
    for _ in 0..100 {
        gp.add_point(dvector![r.random_range(-10.0..10.0)], r.random::<f64>())
            .unwrap();
    }
    let q = dvector![0.0];
    let sub = gp.local_subset(&q, &q.clone(), 3).unwrap();
    assert!(sub.len() <= 3);
}

#[test]
fn local_subset_matches_brute_force_neighbors() {
    let mut gp = GaussianProcess::new(1, hyper_1d(1.0, 1.0, 1e-8))
        .unwrap()
        .with_refit_interval(0);
    for i in 0..10 {
        gp.add_point(dvector![i as f64], -(i as f64)).unwrap();
    }
    let sub = gp
        .local_subset(&dvector![0.1], &dvector![8.9], 2)
        .unwrap();
    let mut got: Vec<f64> = sub.inputs().iter().map(|x| x[0]).collect();
    got.sort_by(|a, b| a.partial_cmp(b).unwrap());

    // Brute-force 2-nearest enumeration around each query.
    let points: Vec<f64> = (0..10).map(|i| i as f64).collect();
    let two_nearest = |q: f64| {
        let mut d: Vec<(f64, f64)> = points.iter().map(|&p| ((p - q).abs(), p)).collect();
        d.sort_by(|a, b| a.partial_cmp(b).unwrap());
        [d[0].1, d[1].1]
    };
    let mut want: Vec<f64> = two_nearest(0.1)
        .into_iter()
        .chain(two_nearest(8.9))
        .collect();
    want.sort_by(|a, b| a.partial_cmp(b).unwrap());
    assert_eq!(got, want);
    assert_eq!(got, vec![0.0, 1.0, 8.0, 9.0]);
}

#[test]
fn swap_symmetry_of_joint_prediction() {
    let mut r = rng(17);
    let hyper = KernelHyper::new(1.5, vec![0.8, 1.3], 1e-6).unwrap();
    let mut gp = GaussianProcess::new(2, hyper).unwrap().with_refit_interval(0);
    for _ in 0..30 {
        let x = DVector::from_fn(2, |_, _| r.random_range(-4.0..4.0));
        gp.add_point(x, r.random_range(-2.0..2.0)).unwrap();
    }
    for _ in 0..20 {
        let x = DVector::from_fn(2, |_, _| r.random_range(-4.0..4.0));
        let xs = DVector::from_fn(2, |_, _| r.random_range(-4.0..4.0));
        let a = gp.predict_joint(&x, &xs).unwrap();
        let b = gp.predict_joint(&xs, &x).unwrap();
        assert!((a.mu - b.mu_star).abs() < 1e-12);
        assert!((a.mu_star - b.mu).abs() < 1e-12);
        assert!((a.var_xx - b.var_ss).abs() < 1e-12);
        assert!((a.var_ss - b.var_xx).abs() < 1e-12);
        assert!((a.cov_xs - b.cov_xs).abs() < 1e-12);
    }
}

#[test]
fn joint_covariance_is_psd() {
    let mut r = rng(29);
    let hyper = KernelHyper::new(2.0, vec![1.0, 0.6], 1e-8).unwrap();
    let mut gp = GaussianProcess::new(2, hyper).unwrap().with_refit_interval(0);
    for _ in 0..40 {
        let x = DVector::from_fn(2, |_, _| r.random_range(-5.0..5.0));
        gp.add_point(x, r.random_range(-3.0..3.0)).unwrap();
    }
    for _ in 0..200 {
        let x = DVector::from_fn(2, |_, _| r.random_range(-6.0..6.0));
        let xs = DVector::from_fn(2, |_, _| r.random_range(-6.0..6.0));
        let jp = gp.predict_joint(&x, &xs).unwrap();
        assert!(jp.var_xx >= 0.0);
        assert!(jp.var_ss >= 0.0);
        // Smallest eigenvalue of [[var_xx, cov],[cov, var_ss]].
        let t = jp.var_xx + jp.var_ss;
        let disc = (jp.var_xx - jp.var_ss).powi(2) + 4.0 * jp.cov_xs * jp.cov_xs;
        let min_eig = 0.5 * (t - disc.sqrt());
        assert!(min_eig >= -1e-10, "min eigenvalue {min_eig}");
    }
}

#[test]
fn variance_never_increases_with_data() {
    let mut r = rng(41);
    let hyper = hyper_1d(1.0, 1.0, 1e-8);
    let mut gp = GaussianProcess::new(1, hyper).unwrap().with_refit_interval(0);
    gp.add_point(dvector![-2.0], 0.5).unwrap();
    let query = dvector![0.3];
    let (_, mut prev_var) = gp.predict(&query).unwrap();
    for _ in 0..25 {
        gp.add_point(dvector![r.random_range(-4.0..4.0)], r.random_range(-1.0..1.0))
            .unwrap();
        let (_, var) = gp.predict(&query).unwrap();
        assert!(var <= prev_var + 1e-10, "{var} > {prev_var}");
        prev_var = var;
    }
}

#[test]
fn local_subset_agrees_with_full_gp_inside_cloud() {
    // Smooth data; queries inside the training cloud; k large enough that
    // the neighborhood carries nearly all the information. The noise level
    // keeps posterior variances well above roundoff so the relative
    // comparison is meaningful.
    // Lengthscale well below the k-neighborhood radius: excluded far points
    // carry negligible kernel weight, which is the regime local prediction
    // is built for.
    let mut r = rng(53);
    let hyper = KernelHyper::new(4.0, vec![0.8, 0.8], 1e-4).unwrap();
    let mut gp = GaussianProcess::new(2, hyper).unwrap().with_refit_interval(0);
    for _ in 0..60 {
        let x = DVector::from_fn(2, |_, _| r.random_range(-5.0..5.0));
        let y = -(x[0] * x[0] + x[1] * x[1]) / 10.0;
        gp.add_point(x, y).unwrap();
    }
    let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1e-12);
    for _ in 0..20 {
        let x = DVector::from_fn(2, |_, _| r.random_range(-2.0..2.0));
        let xs = DVector::from_fn(2, |_, _| r.random_range(-2.0..2.0));
        let full = gp.predict_joint(&x, &xs).unwrap();
        let local = gp.local_subset(&x, &xs, 25).unwrap().predict_joint(&x, &xs).unwrap();
        assert!((full.mu - local.mu).abs() < 0.1);
        assert!((full.mu_star - local.mu_star).abs() < 0.1);
        assert!(
            rel(local.var_xx, full.var_xx) < 0.10,
            "var_xx {} vs {}",
            local.var_xx,
            full.var_xx
        );
        assert!(
            rel(local.var_ss, full.var_ss) < 0.10,
            "var_ss {} vs {}",
            local.var_ss,
            full.var_ss
        );
    }
}

/// Draw y ~ N(0, K) for inputs xs under a unit-lengthscale SE kernel.
fn sample_from_gp_prior(xs: &[DVector<f64>], ell: f64, r: &mut impl Rng) -> Vec<f64> {
    let n = xs.len();
    let hyper = KernelHyper::new(1.0, vec![ell], 0.0).unwrap();
    let mut kmat = DMatrix::from_fn(n, n, |i, j| kern(xs[i].as_slice(), xs[j].as_slice(), &hyper));
    for i in 0..n {
        kmat[(i, i)] += 1e-8;
    }
    let chol = Cholesky::new(kmat).unwrap();
    let z = DVector::from_fn(n, |_, _| StandardNormal.sample(r));
    (chol.l() * z).iter().cloned().collect()
}

#[test]
fn fit_recovers_lengthscale_scale() {
    let mut r = rng(61);
    let xs: Vec<DVector<f64>> = (0..50)
        .map(|_| dvector![r.random_range(-5.0..5.0)])
        .collect();
    let ys = sample_from_gp_prior(&xs, 1.0, &mut r);

    let mut gp = GaussianProcess::new(1, hyper_1d(1.0, 3.0, 1e-8))
        .unwrap()
        .with_refit_interval(0);
    for (x, y) in xs.iter().zip(&ys) {
        gp.add_point(x.clone(), *y).unwrap();
    }
    let fit = gp.fit_hyperparameters(&mut r).unwrap();
    let ell = fit.hyper.lengthscales()[0];
    assert!((0.5..=2.0).contains(&ell), "fitted lengthscale {ell}");
}

#[test]
fn fit_constant_data_shrinks_signal() {
    let mut r = rng(71);
    let mut gp = GaussianProcess::new(1, hyper_1d(1.0, 1.0, 1e-8))
        .unwrap()
        .with_refit_interval(0);
    for i in 0..20 {
        gp.add_point(dvector![i as f64 * 0.37], 4.2).unwrap();
    }
    let fit = gp.fit_hyperparameters(&mut r).unwrap();
    assert!(fit.hyper.signal_variance() <= 1e-4);
}

#[test]
fn fit_never_worse_than_initial() {
    let mut r = rng(83);
    for seed in 0..5u64 {
        let mut rr = rng(100 + seed);
        let mut gp = GaussianProcess::new(1, hyper_1d(0.5, 2.5, 1e-6))
            .unwrap()
            .with_refit_interval(0);
        for _ in 0..30 {
            gp.add_point(
                dvector![rr.random_range(-5.0..5.0)],
                rr.random_range(-2.0..2.0),
            )
            .unwrap();
        }
        let before = gp.log_marginal_likelihood().unwrap();
        let fit = gp.fit_hyperparameters(&mut r).unwrap();
        let after = gp.log_marginal_likelihood_with(&fit.hyper).unwrap();
        assert!(after >= before - 1e-9, "{after} < {before}");
    }
}

#[test]
fn fit_needs_two_points() {
    let mut gp = GaussianProcess::new(1, hyper_1d(1.0, 1.0, 1e-8)).unwrap();
    gp.add_point(dvector![0.0], 1.0).unwrap();
    let e = gp.fit_hyperparameters(&mut rng(1)).unwrap_err();
    assert!(matches!(e, GpError::TooFewPoints { .. }));
}

#[test]
fn scheduled_refit_fires_on_interval() {
    let mut r = rng(97);
    let mut gp = GaussianProcess::new(1, hyper_1d(1.0, 10.0, 1e-8))
        .unwrap()
        .with_refit_interval(10)
        .with_fit_seed(5);
    for _ in 0..9 {
        let x = dvector![r.random_range(-5.0..5.0)];
        gp.add_point(x.clone(), (x[0]).sin()).unwrap();
    }
    assert_eq!(gp.hyper().lengthscales()[0], 10.0); // untouched so far
    let x = dvector![4.9];
    gp.add_point(x.clone(), (x[0]).sin()).unwrap(); // 10th insert triggers refit
    assert_ne!(gp.hyper().lengthscales()[0], 10.0);
}
