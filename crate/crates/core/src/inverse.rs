//! Inversion of factor-model covariance matrices.
//!
//! For `Γ = Ξ + Ω Φ Ωᵀ` with `Ξ = diag(ξ²)`:
//!
//! ```text
//! Γ⁻¹ = Ξ⁻¹ − Ξ⁻¹ Ω Δ⁻¹ Ωᵀ Ξ⁻¹,    Δ = Φ⁻¹ + Ωᵀ Ξ⁻¹ Ω
//! ```
//!
//! so only K x K matrices are ever inverted. When some ξ_i² is tiny next to
//! Γ_ii the identity cancels terms of order 1/ξ_i² and can lose every digit
//! even for a well-conditioned Γ, so such models are inverted densely.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::stats::symmetrize;

/// Specific variances below this fraction of the total variance count as
/// zero.
pub const ZERO_SPECIFIC_VARIANCE_TOL: f64 = 1e-12;

/// Smallest `ξ_i² / Γ_ii` for which the factor-form identity is used.
pub const DENSE_RATIO: f64 = 1e-4;

/// Inverse of `diag(spec_risk²) + fac_load · fac_cov · fac_loadᵀ`.
///
/// `fac_cov` may be indefinite (the singleton fix zeroes some of its
/// diagonal) as long as it and the capacitance matrix are invertible.
pub fn factor_model_inverse(
    spec_risk: &DVector<f64>,
    fac_load: &DMatrix<f64>,
    fac_cov: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let n = spec_risk.len();
    let k = fac_load.ncols();
    if fac_load.nrows() != n || fac_cov.shape() != (k, k) {
        return Err(Error::DimensionMismatch(format!(
            "spec_risk {n}, fac_load {}x{}, fac_cov {}x{}",
            fac_load.nrows(),
            k,
            fac_cov.nrows(),
            fac_cov.ncols()
        )));
    }

    let factor_part = fac_load * fac_cov;
    let mut inv_spec = DVector::zeros(n);
    let mut min_ratio = f64::INFINITY;
    for i in 0..n {
        let spec_var = spec_risk[i] * spec_risk[i];
        let total = spec_var + factor_part.row(i).dot(&fac_load.row(i));
        if !(spec_var > ZERO_SPECIFIC_VARIANCE_TOL * total.abs()) {
            return Err(Error::ZeroSpecificRisk(i.to_string()));
        }
        inv_spec[i] = 1.0 / spec_var;
        min_ratio = min_ratio.min(spec_var / total.abs());
    }

    if min_ratio < DENSE_RATIO {
        let gamma =
            DMatrix::from_diagonal(&spec_risk.map(|x| x * x)) + factor_part * fac_load.transpose();
        return dense_inverse(gamma);
    }

    let mut inv = DMatrix::from_diagonal(&inv_spec);
    if k == 0 {
        return Ok(inv);
    }

    let fac_cov_inv = fac_cov
        .clone()
        .lu()
        .try_inverse()
        .ok_or(Error::SingularFactorCovariance)?;
    // v = Ξ⁻¹ Ω
    let mut v = fac_load.clone();
    for (i, mut row) in v.row_iter_mut().enumerate() {
        row *= inv_spec[i];
    }
    let capacitance = fac_cov_inv + fac_load.transpose() * &v;
    let cap_inv = capacitance
        .lu()
        .try_inverse()
        .ok_or(Error::SingularFactorCovariance)?;
    inv -= &v * cap_inv * v.transpose();
    symmetrize(&mut inv);
    Ok(inv)
}

fn dense_inverse(gamma: DMatrix<f64>) -> Result<DMatrix<f64>> {
    let mut inv = match gamma.clone().cholesky() {
        Some(c) => c.inverse(),
        None => gamma
            .lu()
            .try_inverse()
            .ok_or(Error::SingularFactorCovariance)?,
    };
    symmetrize(&mut inv);
    Ok(inv)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_factor_part_is_diagonal() {
        let xi = DVector::from_vec(vec![0.5, 2.0, 1.0]);
        let load = DMatrix::zeros(3, 2);
        let cov = DMatrix::identity(2, 2);
        let inv = factor_model_inverse(&xi, &load, &cov).unwrap();
        let expected = DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 0.25, 1.0]));
        assert!((inv - expected).amax() < 1e-15);
    }

    #[test]
    fn dense_inverse_oracle() {
        let xi = DVector::from_vec(vec![0.3, 0.5, 0.2, 0.4, 0.6]);
        let load =
            DMatrix::from_row_slice(5, 2, &[0.7, -0.1, 0.2, 0.5, -0.4, 0.3, 0.9, 0.8, 0.1, -0.6]);
        let cov = DMatrix::from_row_slice(2, 2, &[1.2, 0.3, 0.3, 0.8]);
        let gamma = DMatrix::from_diagonal(&xi.map(|x| x * x)) + &load * &cov * load.transpose();
        let inv = factor_model_inverse(&xi, &load, &cov).unwrap();
        let residual = &gamma * &inv - DMatrix::identity(5, 5);
        assert!(residual.amax() < 1e-9);
        let dense = gamma.try_inverse().unwrap();
        assert!((dense - inv).amax() < 1e-9);
    }

    #[test]
    fn tiny_specific_variance_falls_back_to_dense() {
        // The second row is almost fully explained by the factor.
        let xi = DVector::from_vec(vec![0.3, 1e-6, 0.2, 0.4]);
        let load = DMatrix::from_row_slice(4, 2, &[0.5, 0.1, 1.0, -0.3, 0.2, 0.7, -0.4, 0.2]);
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 0.5]);
        let gamma = DMatrix::from_diagonal(&xi.map(|x| x * x)) + &load * &cov * load.transpose();
        let inv = factor_model_inverse(&xi, &load, &cov).unwrap();
        let dense = gamma.clone().try_inverse().unwrap();
        assert!((&gamma * &inv - DMatrix::identity(4, 4)).amax() < 1e-12);
        assert!((&inv - &dense).amax() < 1e-12 * dense.amax());
        assert_eq!(inv, inv.transpose());
    }

    #[test]
    fn zero_specific_risk_is_rejected() {
        let xi = DVector::from_vec(vec![0.3, 0.0, 0.2]);
        let load = DMatrix::from_row_slice(3, 1, &[0.5, 1.0, 0.2]);
        let cov = DMatrix::identity(1, 1);
        assert!(
            matches!(factor_model_inverse(&xi, &load, &cov), Err(Error::ZeroSpecificRisk(i)) if i == "1")
        );
    }

    #[test]
    fn singular_factor_covariance_is_rejected() {
        let xi = DVector::from_vec(vec![0.3, 0.4, 0.2]);
        let load = DMatrix::from_row_slice(3, 2, &[0.5, 1.0, 0.2, 0.1, 0.3, 0.3]);
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(matches!(
            factor_model_inverse(&xi, &load, &cov),
            Err(Error::SingularFactorCovariance)
        ));
    }
}
