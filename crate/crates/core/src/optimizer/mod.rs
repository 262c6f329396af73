//! Portfolio construction from an expected-return vector.
//!
//! Holdings are weights `w_i = H_i / I`, normalized so that `Σ|w_i| = 1`.
//! Every routine returns `w ∝ -(projected alpha)`: the alpha is a
//! previous-close-to-open return, and the portfolio bets on its reversal.

mod bounded;
mod linalg;
mod regression;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub use bounded::{
    optimize_bounded, optimize_bounded_with, BoundedOptions, BoundedSolution, InnerStep,
    OuterUpdate,
};
pub use regression::{
    regression_as_optimization_check, regression_holdings, weighted_regression_residuals,
    RegressionResiduals,
};

/// Rank tolerance for constraint loadings.
pub const RANK_TOL: f64 = 1e-10;
/// A projected alpha whose L1 norm is below this fraction of the
/// unprojected one counts as zero.
pub const ZERO_ALPHA_TOL: f64 = 1e-12;

/// Expected returns, one per ticker.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaVector {
    values: DVector<f64>,
}

impl AlphaVector {
    pub fn new(values: DVector<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|x| !x.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "alpha entry {i} is not finite"
            )));
        }
        Ok(Self { values })
    }

    pub fn from_slice(values: &[f64]) -> Result<Self> {
        Self::new(DVector::from_column_slice(values))
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Homogeneous linear constraints `Yᵀ w = 0`, one column per constraint.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSet {
    loadings: DMatrix<f64>,
}

impl ConstraintSet {
    /// Fails with `RankDeficientLoadings` unless `1 <= p < N` and the
    /// columns are linearly independent.
    pub fn new(loadings: DMatrix<f64>) -> Result<Self> {
        let (n, p) = loadings.shape();
        if p == 0 || p >= n || loadings.iter().any(|x| !x.is_finite()) {
            return Err(Error::RankDeficientLoadings);
        }
        let qr = loadings.clone().col_piv_qr();
        let r = qr.r();
        let top = r[(0, 0)].abs();
        if !(top > 0.0) || (0..p).any(|k| !(r[(k, k)].abs() > RANK_TOL * top)) {
            return Err(Error::RankDeficientLoadings);
        }
        Ok(Self { loadings })
    }

    /// The single dollar-neutrality constraint `Σ w_i = 0`.
    pub fn dollar_neutral(n: usize) -> Result<Self> {
        Self::new(DMatrix::from_element(n, 1, 1.0))
    }

    /// `[1, loadings]`: the given loadings plus an intercept column.
    pub fn with_intercept(loadings: &DMatrix<f64>) -> Result<Self> {
        let n = loadings.nrows();
        let mut y = DMatrix::zeros(n, loadings.ncols() + 1);
        y.column_mut(0).fill(1.0);
        y.columns_mut(1, loadings.ncols()).copy_from(loadings);
        Self::new(y)
    }

    pub fn loadings(&self) -> &DMatrix<f64> {
        &self.loadings
    }

    pub fn num_tickers(&self) -> usize {
        self.loadings.nrows()
    }

    pub fn num_constraints(&self) -> usize {
        self.loadings.ncols()
    }

    /// Coordinates that the constraints force to zero: rows that are the
    /// only nonzero entry of some column.
    pub fn forced_zero(&self) -> Vec<bool> {
        let mut out = vec![false; self.loadings.nrows()];
        for col in self.loadings.column_iter() {
            let mut nz = col.iter().enumerate().filter(|(_, x)| **x != 0.0);
            if let (Some((i, _)), None) = (nz.next(), nz.next()) {
                out[i] = true;
            }
        }
        out
    }
}

/// Portfolio weights `w_i = H_i / I`.
#[derive(Debug, Clone, PartialEq)]
pub struct HoldingsVector {
    pub weights: DVector<f64>,
}

impl HoldingsVector {
    pub fn zeros(n: usize) -> Self {
        Self {
            weights: DVector::zeros(n),
        }
    }

    pub fn gross(&self) -> f64 {
        self.weights.iter().map(|w| w.abs()).sum()
    }

    pub fn net(&self) -> f64 {
        self.weights.sum()
    }

    /// Dollar holdings at investment level `investment_level`.
    pub fn dollars(&self, investment_level: f64) -> DVector<f64> {
        &self.weights * investment_level
    }
}

fn check_square(m: &DMatrix<f64>, n: usize, what: &str) -> Result<()> {
    if m.shape() != (n, n) {
        return Err(Error::DimensionMismatch(format!(
            "{what} is {}x{}, expected {n}x{n}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

/// `-x / Σ|x|`, or `ZeroAlpha` when `x` is negligible against `reference`.
fn normalized_negative(mut x: DVector<f64>, reference: f64) -> Result<HoldingsVector> {
    let gross: f64 = x.iter().map(|v| v.abs()).sum();
    if !(gross > ZERO_ALPHA_TOL * reference) || !gross.is_finite() {
        return Err(Error::ZeroAlpha);
    }
    x /= -gross;
    Ok(HoldingsVector { weights: x })
}

/// Sharpe-ratio maximizing dollar-neutral weights for covariance inverse
/// `inv_cov`:
///
/// ```text
/// w ∝ -[Γ⁻¹E - Γ⁻¹1 (1ᵀΓ⁻¹E) / (1ᵀΓ⁻¹1)],   Σ|w| = 1
/// ```
pub fn optimize_unbounded(alpha: &AlphaVector, inv_cov: &DMatrix<f64>) -> Result<HoldingsVector> {
    let n = alpha.len();
    check_square(inv_cov, n, "inverse covariance")?;
    let ge = inv_cov * alpha.values();
    let g1 = inv_cov.column_sum();
    let ratio = g1.dot(alpha.values()) / g1.sum();
    let x = &ge - g1 * ratio;
    normalized_negative(x, ge.iter().map(|v| v.abs()).sum())
}

/// Sharpe-ratio maximizing weights under `Yᵀ w = 0`:
///
/// ```text
/// w ∝ -[G - G Y (Yᵀ G Y)⁻¹ Yᵀ G] E,   G = Γ⁻¹
/// ```
pub fn optimize_constrained(
    alpha: &AlphaVector,
    constraints: &ConstraintSet,
    inv_cov: &DMatrix<f64>,
) -> Result<HoldingsVector> {
    let n = alpha.len();
    check_square(inv_cov, n, "inverse covariance")?;
    if constraints.num_tickers() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} constraint rows for {n} tickers",
            constraints.num_tickers()
        )));
    }
    let ge = inv_cov * alpha.values();
    let mut x = constrained_projection(constraints, inv_cov, &ge)?;
    for (i, forced) in constraints.forced_zero().into_iter().enumerate() {
        if forced {
            x[i] = 0.0;
        }
    }
    normalized_negative(x, ge.iter().map(|v| v.abs()).sum())
}

/// `G a - G Y (Yᵀ G Y)⁻¹ Yᵀ G a` given `ga = G a`.
fn constrained_projection(
    constraints: &ConstraintSet,
    inv_cov: &DMatrix<f64>,
    ga: &DVector<f64>,
) -> Result<DVector<f64>> {
    let y = constraints.loadings();
    let gy = inv_cov * y;
    let m = y.transpose() * &gy;
    let rhs = y.transpose() * ga;
    let v = m
        .cholesky()
        .ok_or(Error::RankDeficientLoadings)?
        .solve(&rhs);
    Ok(ga - gy * v)
}
