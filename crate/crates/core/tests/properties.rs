mod common;

use common::*;
use hetrisk::heterotic::build_heterotic_model;
use hetrisk::optimizer::{
    optimize_bounded, optimize_unbounded, regression_holdings, weighted_regression_residuals,
    AlphaVector, ConstraintSet,
};
use hetrisk::pc::fit_pc_model;
use hetrisk::stats::sample_covariance;
use hetrisk::Error;
use nalgebra::DVector;
use proptest::prelude::*;

fn config() -> ProptestConfig {
    ProptestConfig {
        cases: 64,
        ..ProptestConfig::default()
    }
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn sample_covariance_shape_and_rank(seed in any::<u64>(), n in 3usize..30, obs in 3usize..20) {
        let panel = random_panel(&mut rng(seed), n, obs);
        let c = sample_covariance(&panel).unwrap();
        for i in 0..n {
            prop_assert_eq!(c.cor[(i, i)], 1.0);
        }
        let eig = nalgebra::SymmetricEigen::new(c.cov.clone()).eigenvalues;
        let max = eig.max();
        prop_assert!(eig.min() >= -1e-10 * max);
        let rank = eig.iter().filter(|&&l| l > 1e-10 * max).count();
        prop_assert!(rank < obs);
    }

    #[test]
    fn pc_models_keep_total_variance(seed in any::<u64>(), n in 3usize..40, obs in 3usize..25, corr in any::<bool>()) {
        let panel = random_panel(&mut rng(seed), n, obs);
        // With two degrees of freedom a pair of rows is occasionally
        // collinear to working precision, which the builder rejects.
        prop_assume!(!matches!(sample_covariance(&panel), Err(Error::DegenerateRow(..))));
        let fit = fit_pc_model(&panel, corr, None).unwrap();
        prop_assert!(max_rel_diag_error(&fit.model.cov_mat, &panel) < 1e-10);
        prop_assert!(fit.spec_var_ratio.iter().all(|&z| (0.0..=1.0).contains(&z)));
        if let Some(inv) = &fit.model.inv_cov {
            prop_assert!(min_eigenvalue(&fit.model.cov_mat) > 0.0);
            prop_assert!(inverse_residual(&fit.model.cov_mat, inv) <= 100.0 * inverse_error_scale(&fit.model));
        }
    }

    #[test]
    fn heterotic_models_keep_total_variance(seed in any::<u64>(), n in 6usize..40, obs in 8usize..25, single in any::<bool>()) {
        let mut r = rng(seed);
        let panel = random_panel(&mut r, n, obs);
        prop_assume!(!matches!(sample_covariance(&panel), Err(Error::DegenerateRow(..))));
        let h = random_hierarchy(&mut r, panel.tickers(), single, (obs - 2).min(4));
        let model = build_heterotic_model(&panel, &h, false, false).unwrap();
        prop_assert!(max_rel_diag_error(&model.cov_mat, &panel) < 1e-10);
        prop_assert!(min_eigenvalue(&model.cov_mat) > 0.0);
        prop_assert!(inverse_residual(&model.cov_mat, model.inv_cov.as_ref().unwrap()) < 1e-8);
    }

    #[test]
    fn unbounded_weights_are_neutral_and_scale_free(seed in any::<u64>(), n in 3usize..20, scale in 1e-3f64..1e3) {
        let mut r = rng(seed);
        let g = random_spd(&mut r, n);
        let e = normal_vector(&mut r, n);
        let w = optimize_unbounded(&AlphaVector::new(e.clone()).unwrap(), &g).unwrap();
        prop_assert!(w.net().abs() < 1e-10);
        prop_assert!((w.gross() - 1.0).abs() < 1e-12);
        let ws = optimize_unbounded(&AlphaVector::new(e * scale).unwrap(), &g).unwrap();
        prop_assert!((&ws.weights - &w.weights).amax() < 1e-12);
    }

    #[test]
    fn bounded_weights_respect_bounds_and_scale(seed in any::<u64>(), n in 4usize..16, scale in 1e-2f64..1e2) {
        let mut r = rng(seed);
        let g = random_spd(&mut r, n);
        let e = normal_vector(&mut r, n);
        let cap = 2.0 / n as f64;
        let upper = DVector::from_element(n, cap);
        let lower = -&upper;
        let y = ConstraintSet::dollar_neutral(n).unwrap();
        let w = optimize_bounded(&AlphaVector::new(e.clone()).unwrap(), &y, &g, &upper, &lower, 1e-10).unwrap();
        prop_assert!(w.weights.iter().all(|x| x.abs() <= cap));
        prop_assert!(w.net().abs() < 1e-8);
        prop_assert!((w.gross() - 1.0).abs() < 1e-10);
        let ws = optimize_bounded(&AlphaVector::new(e * scale).unwrap(), &y, &g, &upper, &lower, 1e-10).unwrap();
        prop_assert!((&ws.weights - &w.weights).amax() < 1e-8);
    }

    #[test]
    fn regression_weights_scale_out(seed in any::<u64>(), n in 5usize..30, k in 1usize..4, c in 1e-2f64..1e2) {
        let mut r = rng(seed);
        let y = ConstraintSet::with_intercept(&normal_matrix(&mut r, n, k)).unwrap();
        let alpha = AlphaVector::new(normal_vector(&mut r, n)).unwrap();
        let z = DVector::from_fn(n, |i, _| 0.5 + ((i * 37) % 11) as f64 / 11.0);
        let a = weighted_regression_residuals(&alpha, &y, &z).unwrap();
        let b = weighted_regression_residuals(&alpha, &y, &(&z * c)).unwrap();
        prop_assert!((&a.raw - &b.raw).amax() < 1e-10 * (1.0 + a.raw.amax()));
        prop_assert!((&a.weighted * c - &b.weighted).amax() < 1e-10 * (1.0 + b.weighted.amax()));
        let ha = regression_holdings(&alpha, &y, &z).unwrap();
        let hb = regression_holdings(&alpha, &y, &(&z * c)).unwrap();
        prop_assert!((&ha.weights - &hb.weights).amax() < 1e-10);
        // Residuals are orthogonal to the loadings in the weighted metric.
        let orth = y.loadings().transpose() * &a.weighted;
        prop_assert!(orth.amax() < 1e-10 * (1.0 + a.weighted.amax()));
    }
}
