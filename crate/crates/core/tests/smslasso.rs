mod common;

use nalgebra::DMatrix;
use poolcheck::lasso::{lasso_cd, CdOptions};
use poolcheck::smslasso::{
    composite_prox, corrected_alpha, corrected_lambda, fit, lambda_max, objective, penalty, solution_path,
    uncorrected, CoefficientMatrix, CvOptions, FitOptions, PenaltySpec,
};
use proptest::prelude::*;
use rand::Rng;

fn tight() -> FitOptions {
    FitOptions {
        resid_tol: 1e-10,
        rel_tol: 1e-14,
        max_iter: 200_000,
        ..FitOptions::default()
    }
}

fn rel_gap(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

#[test]
fn prox_matches_admm_minimization() {
    let mut rng = common::rng(7);
    for _ in 0..1000 {
        let n = rng.random_range(1..=8);
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let t1 = rng.random_range(0.0..1.5);
        let t2 = rng.random_range(0.0..2.5);
        let got = composite_prox(&v, t1, t2);
        let want = common::prox_admm(&v, t1, t2);
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() <= 1e-6, "v={v:?} t1={t1} t2={t2}: {got:?} vs {want:?}");
        }
        let fg = common::prox_objective(&got, &v, t1, t2);
        let fw = common::prox_objective(&want, &v, t1, t2);
        assert!(fg <= fw + 1e-12);
    }
}

#[test]
fn alpha_one_reduces_to_per_site_lasso() {
    for seed in 0..10 {
        let data = common::multi_site_instance(seed, 3, 30, 20);
        let lam = 0.2 * lambda_max(&data, 1.0, &FitOptions::default()).unwrap();
        let spec = PenaltySpec::new(lam, 1.0).unwrap();
        let f = fit(&data, &spec, &tight()).unwrap();
        let cd = CdOptions {
            tol: 1e-14,
            ..CdOptions::default()
        };
        let mut b = DMatrix::zeros(3, 20);
        for (i, d) in data.iter().enumerate() {
            let beta = lasso_cd(&d.x, &d.y, lam, None, &cd);
            b.row_mut(i).copy_from(&beta.transpose());
        }
        let oracle = objective(&data, &CoefficientMatrix(b), &spec);
        let got = objective(&data, &f.coef, &spec);
        assert!(rel_gap(got, oracle) <= 1e-5, "seed {seed}: {got} vs {oracle}");
    }
}

#[test]
fn alpha_zero_reduces_to_group_lasso() {
    for seed in 0..10 {
        let data = common::multi_site_instance(100 + seed, 3, 30, 20);
        let lam = 0.2 * lambda_max(&data, 0.0, &FitOptions::default()).unwrap();
        let spec = PenaltySpec::new(lam, 0.0).unwrap();
        let f = fit(&data, &spec, &tight()).unwrap();
        let xs: Vec<_> = data.iter().map(|d| d.x.clone()).collect();
        let ys: Vec<_> = data.iter().map(|d| d.y.clone()).collect();
        let b = common::group_lasso_bcd(&xs, &ys, lam * 3f64.sqrt(), 100_000);
        let oracle = objective(&data, &CoefficientMatrix(b), &spec);
        let got = objective(&data, &f.coef, &spec);
        assert!(rel_gap(got, oracle) <= 1e-5, "seed {seed}: {got} vs {oracle}");
    }
}

#[test]
fn lambda_max_is_the_zero_threshold() {
    for (seed, alpha) in [(1, 0.0), (2, 0.3), (3, 0.9), (4, 1.0)] {
        let data = common::multi_site_instance(seed, 3, 25, 15);
        let lmax = lambda_max(&data, alpha, &FitOptions::default()).unwrap();
        let at = fit(&data, &PenaltySpec::new(lmax * 1.000_001, alpha).unwrap(), &tight()).unwrap();
        assert!(at.coef.is_zero());
        let below = fit(&data, &PenaltySpec::new(lmax * 0.99, alpha).unwrap(), &tight()).unwrap();
        assert!(!below.coef.is_zero());
    }
}

#[test]
fn path_supports_grow_and_cv_is_reproducible() {
    let data = common::multi_site_instance(9, 4, 40, 30);
    let cv = Some(CvOptions { folds: 5, seed: 3 });
    let a = solution_path(&data, 0.5, None, cv, &FitOptions::default()).unwrap();
    let b = solution_path(&data, 0.5, None, cv, &FitOptions::default()).unwrap();
    assert_eq!(a.cv, b.cv);
    assert!(a.fits[0].is_zero());
    assert!(a.converged.iter().all(|&c| c));
    let last = a.fits.last().unwrap().support_stats(1e-8);
    assert!(last.s_h > 0);
    for w in a.lambdas.windows(2) {
        assert!(w[0] > w[1]);
    }
    let c = a.cv.unwrap();
    assert!(c.best_index < a.lambdas.len());
    assert!(c.mean.iter().all(|m| *m >= c.mean[c.best_index]));
}

#[test]
fn rejects_bad_penalties() {
    assert!(PenaltySpec::new(-1.0, 0.5).is_err());
    assert!(PenaltySpec::new(1.0, 1.5).is_err());
    assert!(PenaltySpec::new(f64::NAN, 0.5).is_err());
}

proptest! {
    #[test]
    fn prox_is_nonexpansive(
        v in prop::collection::vec(-5.0f64..5.0, 4),
        w in prop::collection::vec(-5.0f64..5.0, 4),
        t1 in 0.0f64..2.0,
        t2 in 0.0f64..2.0,
    ) {
        let a = composite_prox(&v, t1, t2);
        let b = composite_prox(&w, t1, t2);
        let d_out: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum();
        let d_in: f64 = v.iter().zip(&w).map(|(x, y)| (x - y).powi(2)).sum();
        prop_assert!(d_out <= d_in + 1e-12);
    }

    #[test]
    fn corrected_parameters_round_trip(alpha in 0.0f64..1.0, lambda in 0.01f64..10.0, k in 1usize..9) {
        let (a, l) = uncorrected(corrected_alpha(alpha, k), corrected_lambda(lambda, alpha, k), k);
        prop_assert!((a - alpha).abs() < 1e-10);
        prop_assert!((l - lambda).abs() < 1e-9 * lambda);
    }

    #[test]
    fn penalty_is_invariant_to_site_and_feature_order(
        vals in prop::collection::vec(-3.0f64..3.0, 12),
        alpha in 0.0f64..1.0,
    ) {
        let b = DMatrix::from_vec(3, 4, vals);
        let mut swapped = b.clone();
        swapped.swap_rows(0, 2);
        swapped.swap_columns(1, 3);
        prop_assert!((penalty(&b, alpha) - penalty(&swapped, alpha)).abs() < 1e-12);
        prop_assert!((penalty(&(&b * 2.0), alpha) - 2.0 * penalty(&b, alpha)).abs() < 1e-10);
    }
}
