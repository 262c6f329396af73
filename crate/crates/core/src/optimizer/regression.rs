//! Weighted cross-sectional regression of the alpha on constraint loadings.

use nalgebra::{DMatrix, DVector};

use super::{
    normalized_negative, optimize_constrained, AlphaVector, ConstraintSet, HoldingsVector,
};
use crate::error::{Error, Result};

/// Residuals of the weighted regression of E on Y with weights z.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionResiduals {
    /// `Ẽ = Z ε`.
    pub weighted: DVector<f64>,
    /// `ε = E - Y (YᵀZY)⁻¹ YᵀZ E`.
    pub raw: DVector<f64>,
}

/// Regress `alpha` on the constraint loadings with weights `z > 0`.
///
/// Coordinates that the constraints force to zero get an exactly zero
/// residual.
pub fn weighted_regression_residuals(
    alpha: &AlphaVector,
    constraints: &ConstraintSet,
    z: &DVector<f64>,
) -> Result<RegressionResiduals> {
    let n = alpha.len();
    if constraints.num_tickers() != n || z.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "alpha {n}, constraints {}, weights {}",
            constraints.num_tickers(),
            z.len()
        )));
    }
    if let Some(i) = z.iter().position(|&w| !(w > 0.0 && w.is_finite())) {
        return Err(Error::InvalidConfig(format!(
            "regression weight {i} is not positive"
        )));
    }
    let y = constraints.loadings();
    let sz = z.map(f64::sqrt);
    let mut a = y.clone();
    for (i, mut row) in a.row_iter_mut().enumerate() {
        row *= sz[i];
    }
    let b = alpha.values().component_mul(&sz);
    let qr = a.qr();
    let rhs = qr.q().transpose() * &b;
    let beta = qr
        .r()
        .solve_upper_triangular(&rhs)
        .ok_or(Error::RankDeficientLoadings)?;
    let mut raw = alpha.values() - y * beta;
    for (i, forced) in constraints.forced_zero().into_iter().enumerate() {
        if forced {
            raw[i] = 0.0;
        }
    }
    let weighted = raw.component_mul(z);
    Ok(RegressionResiduals { weighted, raw })
}

/// Holdings `w = -Ẽ / Σ|Ẽ|` from the weighted regression residuals.
pub fn regression_holdings(
    alpha: &AlphaVector,
    constraints: &ConstraintSet,
    z: &DVector<f64>,
) -> Result<HoldingsVector> {
    let res = weighted_regression_residuals(alpha, constraints, z)?;
    let reference: f64 = alpha
        .values()
        .component_mul(z)
        .iter()
        .map(|v| v.abs())
        .sum();
    normalized_negative(res.weighted, reference)
}

/// Compare the regression holdings (weights `1 / variances`) with the
/// optimizer holdings for the diagonal covariance `diag(variances)` under the
/// same constraints. Returns the largest absolute weight difference.
pub fn regression_as_optimization_check(
    alpha: &AlphaVector,
    constraints: &ConstraintSet,
    variances: &DVector<f64>,
) -> Result<f64> {
    if let Some(i) = variances.iter().position(|&v| !(v > 0.0)) {
        return Err(Error::InvalidConfig(format!(
            "variance {i} is not positive"
        )));
    }
    let z = variances.map(|v| 1.0 / v);
    let by_regression = regression_holdings(alpha, constraints, &z)?;
    let by_optimization = optimize_constrained(alpha, constraints, &DMatrix::from_diagonal(&z))?;
    Ok((by_regression.weights - by_optimization.weights).amax())
}
