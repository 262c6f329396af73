mod common;

use common::*;
use hetrisk::heterotic::{build_heterotic_model, factor_returns, fit_heterotic_model};
use hetrisk::hierarchy::{IndustryHierarchy, Membership};
use hetrisk::pc::{build_pc_model, fit_pc_model, select_num_factors, verify_total_variance};
use hetrisk::stats::{sample_covariance, sym_eigen};
use hetrisk::Error;
use nalgebra::DMatrix;

fn hierarchy(tickers: &[String], levels: Vec<(Vec<usize>, usize)>) -> IndustryHierarchy {
    let names = ["sub_industry", "industry", "sector"];
    let depth = levels.len();
    let levels = levels
        .into_iter()
        .enumerate()
        .map(|(l, (p, c))| Membership::new(p, c, l).unwrap())
        .collect();
    IndustryHierarchy::from_memberships(
        tickers.to_vec(),
        names[..depth].iter().map(|s| s.to_string()).collect(),
        levels,
    )
    .unwrap()
}

#[test]
fn eigen_reconstruction_of_random_gram_matrix() {
    let mut rng = rng(1);
    let a = normal_matrix(&mut rng, 6, 9);
    let g = &a * a.transpose();
    let eig = sym_eigen(&g).unwrap();
    let recon =
        &eig.eigenvectors * DMatrix::from_diagonal(&eig.eigenvalues) * eig.eigenvectors.transpose();
    assert!((recon - &g).amax() < 1e-9 * g.amax());
    let gram = eig.eigenvectors.transpose() * &eig.eigenvectors;
    assert!((gram - DMatrix::<f64>::identity(6, 6)).amax() < 1e-10);
}

#[test]
fn covariance_ignores_date_order() {
    let mut rng = rng(2);
    let panel = random_panel(&mut rng, 5, 8);
    let rev: Vec<usize> = (0..8).rev().collect();
    let a = sample_covariance(&panel).unwrap();
    let b = sample_covariance(&panel.select_columns(&rev).unwrap()).unwrap();
    assert!((a.cov - b.cov).amax() < 1e-15);
}

#[test]
fn pc_models_on_random_panels() {
    let mut rng = rng(3);
    for case in 0..40 {
        let n = 3 + case % 20;
        let obs = 4 + (case * 7) % 18;
        let panel = random_panel(&mut rng, n, obs);
        let fit = fit_pc_model(&panel, true, None).unwrap();
        let model = &fit.model;
        assert!(
            max_rel_diag_error(&model.cov_mat, &panel) < 1e-10,
            "case {case}"
        );
        assert!(
            (model.factor_form_covariance() - &model.cov_mat).amax() < 1e-12 * model.cov_mat.amax()
        );
        assert!(fit.spec_var_ratio.iter().all(|&z| (0.0..=1.0).contains(&z)));
        let report = verify_total_variance(model, &panel).unwrap();
        assert!(
            report.max_abs_t_diag < 1e-10,
            "case {case}: {}",
            report.max_abs_t_diag
        );
        if let Some(inv) = &model.inv_cov {
            assert!(inverse_residual(&model.cov_mat, inv) < 1e-8, "case {case}");
            assert!(min_eigenvalue(&model.cov_mat) > 0.0);
        }
        let g = &fit.selection.as_ref().unwrap().g;
        assert!(
            g.windows(2).all(|w| w[1] <= w[0] + 1e-12),
            "case {case}: {g:?}"
        );
    }
}

#[test]
fn pc_inverse_survives_nearly_zero_specific_variance() {
    // Three factors leave one ticker with ξ²/Γ_ii near 1e-10 while Γ itself
    // is well conditioned.
    let panel = random_panel(&mut rng(12429830857285971956), 4, 7);
    let model = fit_pc_model(&panel, false, None).unwrap().model;
    let ratio = (0..4)
        .map(|i| model.spec_risk[i].powi(2) / model.cov_mat[(i, i)])
        .fold(f64::INFINITY, f64::min);
    assert!(ratio < 1e-9);
    assert!(inf_condition(&model.cov_mat) < 1e3);
    assert!(inverse_residual(&model.cov_mat, model.inv_cov.as_ref().unwrap()) < 1e-12);
}

#[test]
fn pc_full_rank_reproduces_correlation() {
    let mut rng = rng(4);
    let panel = random_panel(&mut rng, 12, 6);
    let model = build_pc_model(&panel, true, Some(5)).unwrap();
    let cov = sample_covariance(&panel).unwrap();
    assert!((model.correlation() - &cov.cor).amax() < 1e-10);
    assert!(model.inv_cov.is_none());
    let report = verify_total_variance(&model, &panel).unwrap();
    assert!(report.max_abs_t_diag < 1e-10);
}

#[test]
fn pc_rescaling_commutes_with_build() {
    let mut rng = rng(5);
    let panel = random_panel(&mut rng, 10, 15);
    let cov = sample_covariance(&panel).unwrap();
    let sd = cov.volatilities();
    let unit = panel.scale_rows(sd.as_slice()).unwrap();
    let raw = build_pc_model(&panel, true, None).unwrap();
    let scaled = build_pc_model(&unit, true, None).unwrap();
    assert_eq!(raw.num_factors(), scaled.num_factors());
    let back = hetrisk::stats::rescale(&scaled.cov_mat, &sd);
    assert!((back - &raw.cov_mat).amax() < 1e-10 * raw.cov_mat.amax());
}

#[test]
fn random_loadings_have_traceless_t() {
    let mut rng = rng(6);
    let panel = random_panel(&mut rng, 15, 10);
    let cov = sample_covariance(&panel).unwrap();
    let load = normal_matrix(&mut rng, 15, 3);
    let t = hetrisk::pc::t_matrix(&load, &cov.cor).unwrap();
    assert!(t.trace().abs() < 1e-10 * 15.0);
    assert!(t.diagonal().amax() > 1e-3);
}

#[test]
fn k_selection_matches_full_scan_on_monotone_panels() {
    let mut rng = rng(7);
    for _ in 0..30 {
        let panel = random_panel(&mut rng, 30, 12);
        let sel = select_num_factors(&panel).unwrap();
        assert!(sel.k >= 1 && sel.k <= 10);
        assert!(sel.g.windows(2).all(|w| w[1] <= w[0] + 1e-12));
        if sel.g.windows(2).all(|w| w[1] < w[0]) {
            assert_eq!(sel.k, sel.full_scan_argmin);
        }
    }
}

#[test]
fn block_diagonal_one_level_model() {
    let mut rng = rng(8);
    let mut target = DMatrix::identity(4, 4);
    for (i, j) in [(0, 1), (2, 3)] {
        target[(i, j)] = 0.6;
        target[(j, i)] = 0.6;
    }
    let panel = panel_with_correlation(&mut rng, &target, 9);
    let h = hierarchy(panel.tickers(), vec![(vec![0, 0, 1, 1], 2)]);
    let fit = fit_heterotic_model(&panel, &h, false, false).unwrap();
    let phi = &fit.levels[0].factor_cov;
    assert!((phi - DMatrix::from_diagonal_element(2, 2, 1.6)).amax() < 1e-12);
    for z in fit.levels[0].spec_var_ratio.iter() {
        assert!((z - 0.2).abs() < 1e-12);
    }
}

#[test]
fn heterotic_models_on_random_panels() {
    let mut rng = rng(9);
    for case in 0..60 {
        let n = 3 + case % 25;
        let obs = 3 + (case * 5) % 20;
        let panel = random_panel(&mut rng, n, obs);
        let singles = case % 3 == 0;
        let h = random_hierarchy(&mut rng, panel.tickers(), singles, obs - 1);
        let fit = match fit_heterotic_model(&panel, &h, true, false) {
            Ok(f) => f,
            Err(e) => panic!("case {case}: {e}"),
        };
        let model = &fit.model;
        assert!(
            max_rel_diag_error(&model.cov_mat, &panel) < 1e-10,
            "case {case}"
        );
        assert!(
            (model.factor_form_covariance() - &model.cov_mat).amax() < 1e-12 * model.cov_mat.amax()
        );
        assert!(min_eigenvalue(&model.cov_mat) > 0.0, "case {case}");
        assert!(
            inverse_residual(&model.cov_mat, model.inv_cov.as_ref().unwrap()) < 1e-8,
            "case {case}"
        );
        // Φ_AA = λ(A) at the most granular level.
        for a in 0..fit.levels[0].pc.lambda.len() {
            assert!((fit.levels[0].factor_cov[(a, a)] - fit.levels[0].pc.lambda[a]).abs() < 1e-10);
        }
        for i in h.singleton_tickers() {
            let cov = sample_covariance(&panel).unwrap();
            assert!(
                (model.spec_risk[i].powi(2) - cov.variances[i]).abs() < 1e-12 * cov.variances[i]
            );
        }
    }
}

#[test]
fn factor_returns_reproduce_factor_covariances() {
    let mut rng = rng(10);
    let panel = random_panel(&mut rng, 20, 15);
    let h = random_hierarchy(&mut rng, panel.tickers(), false, 3);
    let fit = fit_heterotic_model(&panel, &h, false, false).unwrap();
    let series = factor_returns(&fit, &panel).unwrap();
    for (level, f) in fit.levels.iter().zip(&series) {
        let x = hetrisk::stats::centered(f);
        let cov = &x * x.transpose() / (f.ncols() - 1) as f64;
        assert!((cov - &level.factor_cov).amax() < 1e-10);
    }
}

#[test]
fn all_singletons_with_market_factor_is_a_one_factor_pc_model() {
    let mut rng = rng(11);
    let panel = random_panel(&mut rng, 8, 12);
    let h = hierarchy(panel.tickers(), vec![((0..8).collect(), 8)]);
    let het = build_heterotic_model(&panel, &h, true, false).unwrap();
    let pc = build_pc_model(&panel, true, Some(1)).unwrap();
    assert!((het.cov_mat - &pc.cov_mat).amax() < 1e-12 * pc.cov_mat.amax());
    assert!(het
        .spec_risk
        .iter()
        .zip(sample_covariance(&panel).unwrap().volatilities().iter())
        .all(|(a, b)| (a - b).abs() < 1e-15));
}

#[test]
fn dropping_singletons_equals_building_on_pruned_inputs() {
    let mut rng = rng(12);
    let panel = random_panel(&mut rng, 12, 20);
    let h = hierarchy(
        panel.tickers(),
        vec![
            (vec![0, 0, 1, 2, 2, 2, 3, 4, 4, 5, 5, 5], 6),
            (vec![0, 0, 1, 1, 1, 2], 3),
            (vec![0, 1, 1], 2),
        ],
    );
    let dropped = build_heterotic_model(&panel, &h, false, true).unwrap();
    assert_eq!(
        dropped.meta.dropped,
        vec!["T2".to_string(), "T6".to_string()]
    );
    let keep: Vec<usize> = (0..12).filter(|&i| i != 2 && i != 6).collect();
    let sub = panel.select_rows(&keep).unwrap();
    let fresh =
        build_heterotic_model(&sub, &h.restrict(sub.tickers()).unwrap(), false, false).unwrap();
    assert_eq!(dropped.tickers, fresh.tickers);
    assert!((dropped.cov_mat - &fresh.cov_mat).amax() < 1e-15);
    assert!(fresh.meta.singleton_fixed.is_empty());
}

#[test]
fn singular_top_level_is_reported() {
    let mut rng = rng(13);
    let panel = random_panel(&mut rng, 10, 4);
    let h = hierarchy(
        panel.tickers(),
        vec![(vec![0, 0, 1, 1, 2, 2, 3, 3, 4, 4], 5)],
    );
    assert!(matches!(
        build_heterotic_model(&panel, &h, false, false),
        Err(Error::SingularTopLevel(_))
    ));
    assert!(build_heterotic_model(&panel, &h, true, false).is_ok());
}
