//! Sample moments and symmetric eigendecomposition shared by the model
//! builders.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::panel::ReturnsPanel;

/// Correlation magnitude above which two rows count as perfectly correlated.
pub const DEGENERATE_CORRELATION_TOL: f64 = 1e-12;
/// Relative asymmetry accepted by [`sym_eigen`].
pub const SYMMETRY_TOL: f64 = 1e-9;
/// Negative eigenvalues down to `-EIGEN_CLAMP_TOL * max(1, lambda_max)` are
/// treated as round-off and clamped to zero.
pub const EIGEN_CLAMP_TOL: f64 = 1e-10;

/// Sample covariance C, its diagonal, and the correlation matrix Psi.
#[derive(Debug, Clone)]
pub struct CovarianceResult {
    pub cov: DMatrix<f64>,
    pub variances: DVector<f64>,
    pub cor: DMatrix<f64>,
}

impl CovarianceResult {
    /// Per-ticker volatilities sqrt(C_ii).
    pub fn volatilities(&self) -> DVector<f64> {
        self.variances.map(f64::sqrt)
    }
}

/// Eigenpairs sorted by decreasing eigenvalue.
///
/// Each eigenvector is sign-normalized so that its entry of largest
/// magnitude is positive (first such entry on ties). A system may be
/// truncated to its leading pairs, in which case `eigenvectors` has fewer
/// columns than rows.
#[derive(Debug, Clone)]
pub struct EigenSystem {
    pub eigenvalues: DVector<f64>,
    pub eigenvectors: DMatrix<f64>,
}

impl EigenSystem {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }
}

/// Row-demeaned copy of the panel values.
pub fn centered(values: &DMatrix<f64>) -> DMatrix<f64> {
    let mut x = values.clone();
    for mut row in x.row_iter_mut() {
        let mean = row.mean();
        row.add_scalar_mut(-mean);
    }
    x
}

/// Unbiased sample covariance (divisor M) and correlation of a panel.
pub fn sample_covariance(panel: &ReturnsPanel) -> Result<CovarianceResult> {
    let values = panel.values();
    let n = values.nrows();
    for (i, row) in values.row_iter().enumerate() {
        if row.max() == row.min() {
            return Err(Error::ZeroVariance(panel.tickers()[i].clone()));
        }
    }
    let x = centered(values);
    let mut cov = &x * x.transpose() / panel.m() as f64;
    symmetrize(&mut cov);
    let variances = cov.diagonal();
    if let Some(i) = variances.iter().position(|&v| v <= 0.0) {
        return Err(Error::ZeroVariance(panel.tickers()[i].clone()));
    }
    let cor = correlation_from_covariance(&cov);
    for i in 0..n {
        for j in (i + 1)..n {
            if cor[(i, j)].abs() > 1.0 - DEGENERATE_CORRELATION_TOL {
                return Err(Error::DegenerateRow(
                    panel.tickers()[i].clone(),
                    panel.tickers()[j].clone(),
                ));
            }
        }
    }
    Ok(CovarianceResult {
        cov,
        variances,
        cor,
    })
}

/// Psi_ij = C_ij / sqrt(C_ii C_jj), with an exactly unit diagonal.
pub fn correlation_from_covariance(cov: &DMatrix<f64>) -> DMatrix<f64> {
    let sd = cov.diagonal().map(f64::sqrt);
    let mut cor = DMatrix::from_fn(cov.nrows(), cov.ncols(), |i, j| {
        cov[(i, j)] / (sd[i] * sd[j])
    });
    cor.fill_diagonal(1.0);
    cor
}

/// Conjugation by a diagonal scale: out_ij = scale_i * m_ij * scale_j.
pub fn rescale(m: &DMatrix<f64>, scale: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| scale[i] * m[(i, j)] * scale[j])
}

pub(crate) fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

fn relative_asymmetry(m: &DMatrix<f64>) -> f64 {
    let scale = m.amax();
    if scale == 0.0 {
        return 0.0;
    }
    let n = m.nrows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst / scale
}

/// Flip the sign of a vector so its largest-magnitude entry is positive.
pub(crate) fn normalize_sign_by_max_entry(v: &mut [f64]) {
    let mut best = 0;
    for (k, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = k;
        }
    }
    if v.get(best).is_some_and(|&x| x < 0.0) {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Eigendecomposition of a symmetric positive semi-definite matrix.
pub fn sym_eigen(mat: &DMatrix<f64>) -> Result<EigenSystem> {
    if !mat.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "eigendecomposition of a {}x{} matrix",
            mat.nrows(),
            mat.ncols()
        )));
    }
    let asym = relative_asymmetry(mat);
    if asym > SYMMETRY_TOL {
        return Err(Error::NotSymmetric(asym));
    }
    let mut m = mat.clone();
    symmetrize(&mut m);
    let eig = SymmetricEigen::new(m);
    sorted_system(&eig.eigenvalues, &eig.eigenvectors, mat.nrows())
}

fn sorted_system(
    values: &DVector<f64>,
    vectors: &DMatrix<f64>,
    keep: usize,
) -> Result<EigenSystem> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    order.truncate(keep);

    let top = order.first().map_or(0.0, |&k| values[k]);
    let floor = -EIGEN_CLAMP_TOL * top.abs().max(1.0);
    let mut eigenvalues = DVector::zeros(order.len());
    let mut eigenvectors = DMatrix::zeros(vectors.nrows(), order.len());
    for (col, &k) in order.iter().enumerate() {
        let lambda = values[k];
        if lambda < floor {
            return Err(Error::NotPositiveSemidefinite(lambda));
        }
        eigenvalues[col] = lambda.max(0.0);
        let mut v: Vec<f64> = vectors.column(k).iter().copied().collect();
        normalize_sign_by_max_entry(&mut v);
        eigenvectors.set_column(col, &DVector::from_vec(v));
    }
    Ok(EigenSystem {
        eigenvalues,
        eigenvectors,
    })
}

/// Leading eigenpairs of `x xᵀ / divisor` for an N x T data matrix.
///
/// When T < N the decomposition runs on the T x T Gram matrix and the
/// N-dimensional eigenvectors are recovered as `x u / sqrt(divisor mu)`.
/// Only pairs with non-negligible eigenvalues are returned in that case,
/// so the system holds at most `min(N, T)` columns.
pub fn data_eigen(x: &DMatrix<f64>, divisor: f64) -> Result<EigenSystem> {
    let (n, t) = x.shape();
    if n <= t {
        let mut s = x * x.transpose() / divisor;
        symmetrize(&mut s);
        return sym_eigen(&s);
    }
    let mut gram = x.transpose() * x / divisor;
    symmetrize(&mut gram);
    let small = sym_eigen(&gram)?;
    let top = small.eigenvalues.get(0).copied().unwrap_or(0.0);
    let cutoff = top * 1e-12;
    let rank = small
        .eigenvalues
        .iter()
        .take_while(|&&mu| mu > cutoff)
        .count();
    let mut eigenvalues = DVector::zeros(rank);
    let mut eigenvectors = DMatrix::zeros(n, rank);
    for k in 0..rank {
        let mu = small.eigenvalues[k];
        let mut v = x * small.eigenvectors.column(k) / (divisor * mu).sqrt();
        let norm = v.norm();
        v /= norm;
        let mut raw: Vec<f64> = v.iter().copied().collect();
        normalize_sign_by_max_entry(&mut raw);
        eigenvalues[k] = mu;
        eigenvectors.set_column(k, &DVector::from_vec(raw));
    }
    Ok(EigenSystem {
        eigenvalues,
        eigenvectors,
    })
}

/// R-style summary (type-7 quantiles): min, 1st quartile, median, mean,
/// 3rd quartile, max.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Summary {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub mean: f64,
    pub q3: f64,
    pub max: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let quantile = |p: f64| {
            let h = (sorted.len() - 1) as f64 * p;
            let lo = h.floor() as usize;
            let hi = h.ceil() as usize;
            sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
        };
        Some(Self {
            min: sorted[0],
            q1: quantile(0.25),
            median: quantile(0.5),
            mean: sorted.iter().sum::<f64>() / sorted.len() as f64,
            q3: quantile(0.75),
            max: sorted[sorted.len() - 1],
        })
    }
}
