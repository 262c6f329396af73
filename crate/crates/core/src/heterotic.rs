//! Heterotic risk model: binary industry loadings weighted by per-cluster
//! first principal components, with the factor covariance itself modeled by
//! the same construction one level up the classification.
//!
//! At level 0 each sub-industry A contributes one factor with loadings
//! `U_i` (the first principal component of the correlation block of A) on
//! its members. The factor covariance `Φ = Uᵀ Ψ U` is converted to a
//! correlation matrix and modeled the same way using industries, then
//! sectors. At the top either `Φ` is kept as is or (with `market_factor`)
//! replaced by a one-factor model. The nested models are then unwound from the
//! top down, each time fixing the specific variances so that the diagonal of
//! the model correlation is exactly one.
//!
//! A sub-industry with a single ticker has `U = 1` and zero specific
//! variance. Unless such tickers are dropped, their factor variance is moved
//! into the specific variance: the diagonal entry of the factor covariance is
//! set to zero and the ticker's specific variance to its full variance.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::hierarchy::{IndustryHierarchy, Membership};
use crate::inverse::factor_model_inverse;
use crate::model::{FactorModel, ModelKind, ModelMeta};
use crate::panel::ReturnsPanel;
use crate::stats::{
    self, correlation_from_covariance, normalize_sign_by_max_entry, rescale, sym_eigen,
};

/// Relative gap below which the top two eigenvalues of a block count as
/// degenerate.
const DEGENERATE_EIGENVALUE_TOL: f64 = 1e-12;
/// `min eig / max eig` of the top-level factor correlation below which it is
/// treated as singular.
const SINGULAR_TOP_TOL: f64 = 1e-12;

/// First principal component of every cluster's correlation block.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterPC {
    /// Entry for each item; unit norm within each cluster.
    pub u: DVector<f64>,
    /// Top eigenvalue of each cluster block.
    pub lambda: DVector<f64>,
    /// Clusters whose top eigenvalue is not separated from the second one.
    pub degenerate: Vec<usize>,
}

/// Per-cluster first principal components of `cor`.
///
/// Each cluster's vector is signed so that its entries sum to a nonnegative
/// number; when the sum vanishes the largest-magnitude entry is positive.
pub fn cluster_first_pc(cor: &DMatrix<f64>, membership: &Membership) -> Result<ClusterPC> {
    if cor.nrows() != membership.num_items() || !cor.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} correlation matrix for {} items",
            cor.nrows(),
            cor.ncols(),
            membership.num_items()
        )));
    }
    let mut u = DVector::zeros(cor.nrows());
    let mut lambda = DVector::zeros(membership.num_clusters());
    let mut degenerate = Vec::new();
    for (a, members) in membership.members().iter().enumerate() {
        match members.len() {
            0 => {
                return Err(Error::EmptyCluster {
                    level: 0,
                    cluster: a,
                })
            }
            1 => {
                u[members[0]] = 1.0;
                lambda[a] = 1.0;
            }
            _ => {
                let block = cor
                    .select_rows(members.iter())
                    .select_columns(members.iter());
                let eig = sym_eigen(&block)?;
                let mut v: Vec<f64> = eig.eigenvectors.column(0).iter().copied().collect();
                let sum: f64 = v.iter().sum();
                if sum < -1e-12 * v.len() as f64 {
                    v.iter_mut().for_each(|x| *x = -*x);
                } else if sum.abs() <= 1e-12 * v.len() as f64 {
                    normalize_sign_by_max_entry(&mut v);
                }
                if (eig.eigenvalues[0] - eig.eigenvalues[1]).abs()
                    <= DEGENERATE_EIGENVALUE_TOL * eig.eigenvalues[0]
                {
                    degenerate.push(a);
                }
                for (k, &i) in members.iter().enumerate() {
                    u[i] = v[k];
                }
                lambda[a] = eig.eigenvalues[0];
            }
        }
    }
    Ok(ClusterPC {
        u,
        lambda,
        degenerate,
    })
}

/// One level of the nested construction.
#[derive(Debug, Clone)]
pub struct HeteroticLevel {
    pub pc: ClusterPC,
    /// Items x clusters loadings `U_x δ_{G(x),A}`.
    pub loadings: DMatrix<f64>,
    /// Sample covariance of this level's factors, `loadingsᵀ Ψ loadings`.
    pub factor_cov: DMatrix<f64>,
    /// Specific variance ratios of this level's items after unwinding.
    pub spec_var_ratio: DVector<f64>,
}

/// A heterotic model with the intermediate quantities of its construction.
#[derive(Debug, Clone)]
pub struct HeteroticFit {
    pub model: FactorModel,
    pub levels: Vec<HeteroticLevel>,
    /// Hierarchy restricted to the modeled tickers.
    pub hierarchy: IndustryHierarchy,
    /// `(level, cluster)` pairs with a degenerate top eigenvalue.
    pub degenerate_clusters: Vec<(usize, usize)>,
}

pub fn build_heterotic_model(
    panel: &ReturnsPanel,
    hierarchy: &IndustryHierarchy,
    market_factor: bool,
    drop_singletons: bool,
) -> Result<FactorModel> {
    fit_heterotic_model(panel, hierarchy, market_factor, drop_singletons).map(|f| f.model)
}

fn check_level_counts(h: &IndustryHierarchy) -> Result<()> {
    let mut prev = h.num_tickers();
    for l in 0..h.num_levels() {
        let count = h.level(l).num_clusters();
        if count > prev {
            return Err(Error::HierarchyMismatch(format!(
                "level {l} has {count} clusters, more than the {prev} items below it"
            )));
        }
        prev = count;
    }
    Ok(())
}

/// Panel and hierarchy restricted to the tickers that will be modeled.
fn prepare(
    panel: &ReturnsPanel,
    hierarchy: &IndustryHierarchy,
    drop_singletons: bool,
) -> Result<(ReturnsPanel, IndustryHierarchy, Vec<String>)> {
    let h = hierarchy.restrict(panel.tickers())?;
    if !drop_singletons {
        return Ok((panel.clone(), h, Vec::new()));
    }
    let singles = h.singleton_tickers();
    if singles.is_empty() {
        return Ok((panel.clone(), h, Vec::new()));
    }
    let keep: Vec<usize> = (0..panel.num_tickers())
        .filter(|i| singles.binary_search(i).is_err())
        .collect();
    let dropped = singles
        .iter()
        .map(|&i| panel.tickers()[i].clone())
        .collect();
    let sub = panel.select_rows(&keep)?;
    let h = h.restrict(sub.tickers())?;
    Ok((sub, h, dropped))
}

pub fn fit_heterotic_model(
    panel: &ReturnsPanel,
    hierarchy: &IndustryHierarchy,
    market_factor: bool,
    drop_singletons: bool,
) -> Result<HeteroticFit> {
    let (panel, h, dropped) = prepare(panel, hierarchy, drop_singletons)?;
    check_level_counts(&h)?;
    let cov = stats::sample_covariance(&panel)?;
    let depth = h.num_levels();

    // Upward pass: cluster PCs and factor covariances level by level.
    let mut level_cov = vec![cov.cov.clone()];
    let mut cor = cov.cor.clone();
    let mut levels = Vec::with_capacity(depth);
    let mut degenerate_clusters = Vec::new();
    for l in 0..depth {
        let membership = h.level(l);
        let pc = cluster_first_pc(&cor, membership).map_err(|e| match e {
            Error::EmptyCluster { cluster, .. } => Error::EmptyCluster { level: l, cluster },
            other => other,
        })?;
        degenerate_clusters.extend(pc.degenerate.iter().map(|&a| (l, a)));
        let mut loadings = membership.matrix();
        for (x, mut row) in loadings.row_iter_mut().enumerate() {
            row *= pc.u[x];
        }
        let mut factor_cov = loadings.transpose() * &cor * &loadings;
        stats::symmetrize(&mut factor_cov);
        cor = correlation_from_covariance(&factor_cov);
        level_cov.push(factor_cov.clone());
        levels.push(HeteroticLevel {
            pc,
            loadings,
            factor_cov,
            spec_var_ratio: DVector::zeros(membership.num_items()),
        });
    }

    let top_cov = &level_cov[depth];
    let mut model_mat = if market_factor {
        let eig = sym_eigen(&cor)?;
        let y = eig.eigenvectors.column(0);
        let mut one = y * y.transpose() * eig.eigenvalues[0];
        one.fill_diagonal(1.0);
        rescale(&one, &top_cov.diagonal().map(f64::sqrt))
    } else {
        let eig = sym_eigen(&cor)?;
        let min = eig.eigenvalues[eig.len() - 1];
        if !(min > SINGULAR_TOP_TOL * eig.eigenvalues[0]) {
            return Err(Error::SingularTopLevel(min));
        }
        top_cov.clone()
    };

    // Downward pass.
    let mut fac_cov = DMatrix::zeros(0, 0);
    for l in (0..depth).rev() {
        let loadings = &levels[l].loadings;
        fac_cov = model_mat;
        let mut m = loadings * &fac_cov * loadings.transpose();
        let sv = DVector::from_fn(m.nrows(), |x, _| 1.0 - m[(x, x)]);
        m.fill_diagonal(1.0);
        stats::symmetrize(&mut m);
        levels[l].spec_var_ratio = sv;
        model_mat = rescale(&m, &level_cov[l].diagonal().map(f64::sqrt));
    }

    let mut sv = levels[0].spec_var_ratio.clone();
    let mut singleton_fixed = Vec::new();
    if !drop_singletons {
        let sizes = h.level(0).sizes();
        for (a, &size) in sizes.iter().enumerate() {
            if size == 1 {
                fac_cov[(a, a)] = 0.0;
            }
        }
        for i in h.singleton_tickers() {
            sv[i] = 1.0;
            singleton_fixed.push(panel.tickers()[i].clone());
        }
        levels[0].spec_var_ratio = sv.clone();
    }

    let tr = cov.volatilities();
    let spec_risk = DVector::from_fn(sv.len(), |i, _| tr[i] * sv[i].max(0.0).sqrt());
    let mut fac_load = levels[0].loadings.clone();
    for (i, mut row) in fac_load.row_iter_mut().enumerate() {
        row *= tr[i];
    }
    let inv_cov = factor_model_inverse(&spec_risk, &fac_load, &fac_cov)?;

    let model = FactorModel {
        tickers: panel.tickers().to_vec(),
        spec_risk,
        meta: ModelMeta {
            kind: ModelKind::Heterotic,
            num_factors: fac_load.ncols(),
            observations: panel.num_observations(),
            covariance_divisor: panel.m(),
            use_correlation: None,
            k_override: None,
            market_factor: Some(market_factor),
            drop_singletons: Some(drop_singletons),
            singleton_fixed,
            dropped,
        },
        fac_load,
        fac_cov,
        cov_mat: model_mat,
        inv_cov: Some(inv_cov),
    };
    Ok(HeteroticFit {
        model,
        levels,
        hierarchy: h,
        degenerate_clusters,
    })
}

/// Realized factor return series of every level: row A of entry `l` is
/// `f_A(t) = Σ_{x∈A} U_x f̃_x(t)`, where `f̃` are the normalized returns
/// `R_i / sqrt(C_ii)` at level 0 and the previous level's factors divided
/// by their sample volatility above that.
pub fn factor_returns(fit: &HeteroticFit, panel: &ReturnsPanel) -> Result<Vec<DMatrix<f64>>> {
    let rows = fit
        .model
        .tickers
        .iter()
        .map(|t| {
            panel
                .index_of(t)
                .ok_or_else(|| Error::DimensionMismatch(format!("ticker `{t}` not in panel")))
        })
        .collect::<Result<Vec<_>>>()?;
    let sub = panel.select_rows(&rows)?;
    let cov = stats::sample_covariance(&sub)?;
    let mut x = sub.values().clone();
    let sd = cov.volatilities();
    for (i, mut row) in x.row_iter_mut().enumerate() {
        row /= sd[i];
    }
    let mut out = Vec::with_capacity(fit.levels.len());
    for level in &fit.levels {
        let f = level.loadings.transpose() * &x;
        let mut next = f.clone();
        for (a, mut row) in next.row_iter_mut().enumerate() {
            row /= level.factor_cov[(a, a)].sqrt();
        }
        out.push(f);
        x = next;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn membership(parent: &[usize], count: usize) -> Membership {
        Membership::new(parent.to_vec(), count, 0).unwrap()
    }

    #[test]
    fn singleton_and_pair_clusters() {
        let cor = DMatrix::from_row_slice(3, 3, &[1.0, 0.6, 0.1, 0.6, 1.0, 0.2, 0.1, 0.2, 1.0]);
        let pc = cluster_first_pc(&cor, &membership(&[0, 0, 1], 2)).unwrap();
        let h = 0.5_f64.sqrt();
        assert!((pc.u[0] - h).abs() < 1e-14 && (pc.u[1] - h).abs() < 1e-14);
        assert_eq!(pc.u[2], 1.0);
        assert!((pc.lambda[0] - 1.6).abs() < 1e-14);
        assert_eq!(pc.lambda[1], 1.0);
    }

    #[test]
    fn equicorrelated_triple() {
        let rho = 0.35;
        let mut cor = DMatrix::from_element(3, 3, rho);
        cor.fill_diagonal(1.0);
        let pc = cluster_first_pc(&cor, &membership(&[0, 0, 0], 1)).unwrap();
        assert!((pc.lambda[0] - (1.0 + 2.0 * rho)).abs() < 1e-14);
        let s = 1.0 / 3.0_f64.sqrt();
        assert!((pc.u.add_scalar(-s)).amax() < 1e-14);
    }

    #[test]
    fn anticorrelated_pair_keeps_opposite_signs() {
        let cor = DMatrix::from_row_slice(2, 2, &[1.0, -0.4, -0.4, 1.0]);
        let pc = cluster_first_pc(&cor, &membership(&[0, 0], 1)).unwrap();
        assert!((pc.lambda[0] - 1.4).abs() < 1e-14);
        assert!(pc.u[0] * pc.u[1] < 0.0);
        assert!(pc.u[0] > 0.0);
    }
}
