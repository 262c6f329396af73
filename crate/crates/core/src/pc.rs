//! Principal-component risk model.
//!
//! The loadings are the leading principal components of the sample
//! correlation (or covariance) matrix scaled by the square roots of their
//! eigenvalues, the factor covariance is the identity, and the specific
//! variances are whatever is left on the diagonal, so the model reproduces
//! the sample variances exactly.
//!
//! The number of factors K is fixed by scanning k = 1, 2, ... and tracking
//! `g(k) = sqrt(min ζ²) + sqrt(max ζ²)`, where ζ² is the vector of specific
//! variance ratios. The scan stops as soon as `|g(k) - 1|` grows. An older
//! rule of thumb (keep the smallest and largest ζ inside roughly 10% and 90%)
//! is not implemented.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::inverse::factor_model_inverse;
use crate::model::{FactorModel, ModelKind, ModelMeta};
use crate::panel::ReturnsPanel;
use crate::stats::{self, CovarianceResult, EigenSystem, Summary};

/// Outcome of the K scan.
#[derive(Debug, Clone, PartialEq)]
pub struct KSelection {
    /// Chosen number of factors.
    pub k: usize,
    /// `g(k)` for k = 1..=g.len().
    pub g: Vec<f64>,
    /// Global argmin of `|g(k) - 1|` over the whole scan (first on ties).
    pub full_scan_argmin: usize,
    /// Quantile summary of ζ² at the chosen K.
    pub spec_var_summary: Summary,
    /// True when the top two eigenvalues coincide to 1e-12 relative, in
    /// which case the first eigenvector is not unique.
    pub degenerate_top_eigenvalue: bool,
}

/// A PC model together with how it was obtained.
#[derive(Debug, Clone)]
pub struct PcFit {
    pub model: FactorModel,
    /// Present unless K was given explicitly.
    pub selection: Option<KSelection>,
    /// ζ² = ξ² / tv, the specific variance ratios.
    pub spec_var_ratio: DVector<f64>,
}

/// Eigensystem of Ψ (or C) obtained from the panel, with its diagonal `tv`.
struct Decomposition {
    cov: CovarianceResult,
    eig: EigenSystem,
    tv: DVector<f64>,
}

fn decompose(panel: &ReturnsPanel, use_correlation: bool) -> Result<Decomposition> {
    let cov = stats::sample_covariance(panel)?;
    let mut x = stats::centered(panel.values());
    let tv = if use_correlation {
        let sd = cov.volatilities();
        for (i, mut row) in x.row_iter_mut().enumerate() {
            row /= sd[i];
        }
        DVector::from_element(panel.num_tickers(), 1.0)
    } else {
        cov.variances.clone()
    };
    let eig = stats::data_eigen(&x, panel.m() as f64)?;
    Ok(Decomposition { cov, eig, tv })
}

/// Leading eigenpairs of the sample correlation matrix Ψ of a panel.
pub fn correlation_eigen(panel: &ReturnsPanel) -> Result<(CovarianceResult, EigenSystem)> {
    let d = decompose(panel, true)?;
    Ok((d.cov, d.eig))
}

/// `sqrt(λ_a) V_ia` for the first `k` eigenpairs; missing pairs (zero
/// eigenvalue) give zero columns.
pub fn scaled_components(eig: &EigenSystem, k: usize) -> DMatrix<f64> {
    let n = eig.eigenvectors.nrows();
    let mut out = DMatrix::zeros(n, k);
    for a in 0..k.min(eig.len()) {
        let s = eig.eigenvalues[a].sqrt();
        out.set_column(a, &(eig.eigenvectors.column(a) * s));
    }
    out
}

/// Largest K the scan may consider: M - 1, and fewer than N so that at
/// least one specific variance stays positive.
fn scan_limit(n: usize, m: usize) -> usize {
    (m - 1).min(n - 1)
}

fn scan(d: &Decomposition, kmax: usize) -> KSelection {
    let n = d.tv.len();
    let mut explained: DVector<f64> = DVector::zeros(n);
    let mut g = Vec::with_capacity(kmax);
    let mut ratios = Vec::with_capacity(kmax);
    let mut chosen = None;
    let mut prev = f64::INFINITY;
    for k in 1..=kmax {
        if let Some(a) = (k - 1 < d.eig.len()).then_some(k - 1) {
            let lambda = d.eig.eigenvalues[a];
            for i in 0..n {
                let v = d.eig.eigenvectors[(i, a)];
                explained[i] += lambda * v * v;
            }
        }
        let z: DVector<f64> =
            DVector::from_fn(n, |i, _| ((d.tv[i] - explained[i]) / d.tv[i]).max(0.0));
        let gk = z.min().sqrt() + z.max().sqrt();
        let dev = (gk - 1.0).abs();
        if chosen.is_none() && dev > prev {
            chosen = Some(k - 1);
        }
        prev = dev;
        g.push(gk);
        ratios.push(z);
    }
    let k = chosen.unwrap_or(kmax);
    let mut full_scan_argmin = 1;
    for (idx, gk) in g.iter().enumerate() {
        if (gk - 1.0).abs() < (g[full_scan_argmin - 1] - 1.0).abs() {
            full_scan_argmin = idx + 1;
        }
    }
    let degenerate_top_eigenvalue = d.eig.len() > 1
        && (d.eig.eigenvalues[0] - d.eig.eigenvalues[1]).abs() <= 1e-12 * d.eig.eigenvalues[0];
    KSelection {
        k,
        spec_var_summary: Summary::of(ratios[k - 1].as_slice()).expect("nonempty"),
        g,
        full_scan_argmin,
        degenerate_top_eigenvalue,
    }
}

/// Number of factors for a PC model of the panel's correlation matrix.
pub fn select_num_factors(panel: &ReturnsPanel) -> Result<KSelection> {
    check_observations(panel)?;
    let d = decompose(panel, true)?;
    Ok(scan(&d, scan_limit(panel.num_tickers(), panel.m())))
}

fn check_observations(panel: &ReturnsPanel) -> Result<()> {
    if panel.m() < 2 {
        return Err(Error::TooFewObservations(panel.num_observations()));
    }
    Ok(())
}

/// Build a PC risk model. `k_override` may be any value in
/// `1..=min(M, N)`; K = M reproduces the sample correlation matrix exactly
/// and yields a model without an inverse.
pub fn build_pc_model(
    panel: &ReturnsPanel,
    use_correlation: bool,
    k_override: Option<usize>,
) -> Result<FactorModel> {
    fit_pc_model(panel, use_correlation, k_override).map(|fit| fit.model)
}

pub fn fit_pc_model(
    panel: &ReturnsPanel,
    use_correlation: bool,
    k_override: Option<usize>,
) -> Result<PcFit> {
    check_observations(panel)?;
    let n = panel.num_tickers();
    let m = panel.m();
    if let Some(k) = k_override {
        let max = m.min(n);
        if k == 0 || k > max {
            return Err(Error::InvalidFactorCount { k, max });
        }
    }
    let d = decompose(panel, use_correlation)?;
    let selection = match k_override {
        Some(_) => None,
        None => Some(scan(&d, scan_limit(n, m))),
    };
    let k = k_override.unwrap_or_else(|| selection.as_ref().map_or(1, |s| s.k));

    let scaled_load = scaled_components(&d.eig, k);
    let mut ratio = DVector::zeros(n);
    let mut spec_var = DVector::zeros(n);
    for i in 0..n {
        let explained = scaled_load.row(i).norm_squared();
        spec_var[i] = (d.tv[i] - explained).max(0.0);
        ratio[i] = spec_var[i] / d.tv[i];
    }
    let mut spec_risk = spec_var.map(f64::sqrt);
    let mut fac_load = scaled_load;
    let fac_cov = DMatrix::identity(k, k);
    if use_correlation {
        let sd = d.cov.volatilities();
        for i in 0..n {
            spec_risk[i] *= sd[i];
            let mut row = fac_load.row_mut(i);
            row *= sd[i];
        }
    }
    let mut cov_mat = &fac_load * fac_load.transpose();
    for i in 0..n {
        cov_mat[(i, i)] += spec_risk[i] * spec_risk[i];
    }
    let inv_cov = match factor_model_inverse(&spec_risk, &fac_load, &fac_cov) {
        Ok(inv) => Some(inv),
        Err(Error::ZeroSpecificRisk(_)) => None,
        Err(e) => return Err(e),
    };

    let model = FactorModel {
        tickers: panel.tickers().to_vec(),
        spec_risk,
        fac_load,
        fac_cov,
        cov_mat,
        inv_cov,
        meta: ModelMeta {
            kind: ModelKind::PrincipalComponent,
            num_factors: k,
            observations: panel.num_observations(),
            covariance_divisor: m,
            use_correlation: Some(use_correlation),
            k_override: Some(k_override.is_some()),
            market_factor: None,
            drop_singletons: None,
            singleton_fixed: Vec::new(),
            dropped: Vec::new(),
        },
    };
    Ok(PcFit {
        model,
        selection,
        spec_var_ratio: ratio,
    })
}

/// Total-variance diagnostics of a model against its source panel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TotalVarianceReport {
    /// max_i |T_ii|.
    pub max_abs_t_diag: f64,
    /// Tr(T).
    pub trace: f64,
    /// max_i |Γ_ii - C_ii| / C_ii.
    pub max_rel_variance_error: f64,
}

/// `T = 2 Q Ψ Qᵀ - Q Ψ - Ψ Qᵀ`, where Q is the orthogonal projector onto the
/// column space of `loadings` (already divided by sqrt(C_ii)).
pub fn t_matrix(loadings: &DMatrix<f64>, psi: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = psi.nrows();
    if loadings.nrows() != n || !psi.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} loadings against a {}x{} correlation matrix",
            loadings.nrows(),
            loadings.ncols(),
            psi.nrows(),
            psi.ncols()
        )));
    }
    let q = column_space_projector(loadings);
    let q_psi = &q * psi;
    let psi_qt = psi * q.transpose();
    Ok(&q_psi * q.transpose() * 2.0 - q_psi - psi_qt)
}

fn column_space_projector(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    if a.ncols() == 0 {
        return DMatrix::zeros(n, n);
    }
    let svd = a.clone().svd(true, false);
    let u = svd.u.expect("requested U");
    let top = svd.singular_values.max();
    let mut q = DMatrix::zeros(n, n);
    for (c, &s) in svd.singular_values.iter().enumerate() {
        if s > 1e-12 * top {
            let col = u.column(c);
            q += col * col.transpose();
        }
    }
    q
}

/// Check the total-variance conditions of `model` against `panel`. The
/// model's tickers must all appear in the panel.
pub fn verify_total_variance(
    model: &FactorModel,
    panel: &ReturnsPanel,
) -> Result<TotalVarianceReport> {
    let rows = model
        .tickers
        .iter()
        .map(|t| {
            panel
                .index_of(t)
                .ok_or_else(|| Error::DimensionMismatch(format!("ticker `{t}` not in panel")))
        })
        .collect::<Result<Vec<_>>>()?;
    if model.fac_load.nrows() != rows.len() || model.cov_mat.nrows() != rows.len() {
        return Err(Error::DimensionMismatch(
            "model fields disagree with its tickers".into(),
        ));
    }
    let sub = panel.select_rows(&rows)?;
    let cov = stats::sample_covariance(&sub)?;
    let sd = cov.volatilities();
    let mut scaled = model.fac_load.clone();
    for (i, mut row) in scaled.row_iter_mut().enumerate() {
        row /= sd[i];
    }
    let t = t_matrix(&scaled, &cov.cor)?;
    let max_abs_t_diag = t.diagonal().amax();
    let max_rel_variance_error = (0..rows.len())
        .map(|i| (model.cov_mat[(i, i)] - cov.variances[i]).abs() / cov.variances[i])
        .fold(0.0, f64::max);
    Ok(TotalVarianceReport {
        max_abs_t_diag,
        trace: t.trace(),
        max_rel_variance_error,
    })
}
