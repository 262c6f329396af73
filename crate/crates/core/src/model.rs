//! The factor model type shared by the PC and heterotic builders, and its
//! JSON serialization.
//!
//! JSON layout (`schema = "hetrisk.factor-model/1"`):
//!
//! ```text
//! {
//!   "schema": "hetrisk.factor-model/1",
//!   "tickers": [..N..],
//!   "spec_risk": [..N..],
//!   "fac_load": {"rows": N, "cols": K, "data": [row-major N*K]},
//!   "fac_cov":  {"rows": K, "cols": K, "data": [...]},
//!   "cov_mat":  {"rows": N, "cols": N, "data": [...]},
//!   "inv_cov":  {"rows": N, "cols": N, "data": [...]} | null,
//!   "meta": {...}
//! }
//! ```

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MODEL_SCHEMA: &str = "hetrisk.factor-model/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    PrincipalComponent,
    Heterotic,
}

/// How a model was built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub kind: ModelKind,
    pub num_factors: usize,
    /// Number of return observations (M+1) in the source panel.
    pub observations: usize,
    /// Divisor used for the sample covariance; always M.
    pub covariance_divisor: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub use_correlation: Option<bool>,
    /// `true` when K came from an explicit override rather than the
    /// g(K) heuristic.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub k_override: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub market_factor: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub drop_singletons: Option<bool>,
    /// Tickers whose specific variance was set to the full variance by the
    /// singleton fix.
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub singleton_fixed: Vec<String>,
    /// Tickers removed from the input universe.
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub dropped: Vec<String>,
}

/// `Γ = diag(ξ²) + Ω Φ* Ωᵀ` together with its inverse.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorModel {
    pub tickers: Vec<String>,
    /// Specific risk ξ (not variance).
    pub spec_risk: DVector<f64>,
    /// N x K loadings Ω.
    pub fac_load: DMatrix<f64>,
    /// K x K factor covariance Φ*.
    pub fac_cov: DMatrix<f64>,
    /// N x N model covariance Γ.
    pub cov_mat: DMatrix<f64>,
    /// Γ⁻¹; absent when the model is singular (e.g. K = M).
    pub inv_cov: Option<DMatrix<f64>>,
    pub meta: ModelMeta,
}

impl FactorModel {
    pub fn num_tickers(&self) -> usize {
        self.spec_risk.len()
    }

    pub fn num_factors(&self) -> usize {
        self.fac_load.ncols()
    }

    /// `diag(ξ²) + Ω Φ* Ωᵀ` recomputed from the factor form.
    pub fn factor_form_covariance(&self) -> DMatrix<f64> {
        let mut gamma = &self.fac_load * &self.fac_cov * self.fac_load.transpose();
        for i in 0..self.num_tickers() {
            gamma[(i, i)] += self.spec_risk[i] * self.spec_risk[i];
        }
        gamma
    }

    /// Model correlation matrix Γ̃_ij = Γ_ij / sqrt(Γ_ii Γ_jj).
    pub fn correlation(&self) -> DMatrix<f64> {
        crate::stats::correlation_from_covariance(&self.cov_mat)
    }

    pub fn inv_cov(&self) -> Result<&DMatrix<f64>> {
        self.inv_cov.as_ref().ok_or(Error::SingularFactorCovariance)
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = ModelDocument {
            schema: MODEL_SCHEMA.to_string(),
            tickers: self.tickers.clone(),
            spec_risk: self.spec_risk.iter().copied().collect(),
            fac_load: MatrixDoc::from(&self.fac_load),
            fac_cov: MatrixDoc::from(&self.fac_cov),
            cov_mat: MatrixDoc::from(&self.cov_mat),
            inv_cov: self.inv_cov.as_ref().map(MatrixDoc::from),
            meta: self.meta.clone(),
        };
        let mut s = serde_json::to_string_pretty(&doc)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: ModelDocument = serde_json::from_str(s)?;
        if doc.schema != MODEL_SCHEMA {
            return Err(Error::InvalidConfig(format!(
                "unknown model schema `{}`",
                doc.schema
            )));
        }
        let n = doc.tickers.len();
        let fac_load = doc.fac_load.into_matrix()?;
        let k = fac_load.ncols();
        let fac_cov = doc.fac_cov.into_matrix()?;
        let cov_mat = doc.cov_mat.into_matrix()?;
        let inv_cov = doc.inv_cov.map(MatrixDoc::into_matrix).transpose()?;
        let square_n = |m: &DMatrix<f64>| m.shape() == (n, n);
        if doc.spec_risk.len() != n
            || fac_load.nrows() != n
            || fac_cov.shape() != (k, k)
            || !square_n(&cov_mat)
            || inv_cov.as_ref().is_some_and(|m| !square_n(m))
        {
            return Err(Error::DimensionMismatch(
                "model document fields disagree on N or K".into(),
            ));
        }
        Ok(Self {
            tickers: doc.tickers,
            spec_risk: DVector::from_vec(doc.spec_risk),
            fac_load,
            fac_cov,
            cov_mat,
            inv_cov,
            meta: doc.meta,
        })
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[derive(Serialize, Deserialize)]
struct ModelDocument {
    schema: String,
    tickers: Vec<String>,
    spec_risk: Vec<f64>,
    fac_load: MatrixDoc,
    fac_cov: MatrixDoc,
    cov_mat: MatrixDoc,
    inv_cov: Option<MatrixDoc>,
    meta: ModelMeta,
}

/// Row-major matrix with explicit dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixDoc {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl From<&DMatrix<f64>> for MatrixDoc {
    fn from(m: &DMatrix<f64>) -> Self {
        let data = m
            .row_iter()
            .flat_map(|r| r.iter().copied().collect::<Vec<_>>())
            .collect();
        Self {
            rows: m.nrows(),
            cols: m.ncols(),
            data,
        }
    }
}

impl MatrixDoc {
    pub fn into_matrix(self) -> Result<DMatrix<f64>> {
        if self.data.len() != self.rows * self.cols {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} matrix with {} entries",
                self.rows,
                self.cols,
                self.data.len()
            )));
        }
        Ok(DMatrix::from_row_slice(self.rows, self.cols, &self.data))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_is_row_major_and_round_trips() {
        let model = FactorModel {
            tickers: vec!["A".into(), "B".into()],
            spec_risk: DVector::from_vec(vec![0.1, 0.2]),
            fac_load: DMatrix::from_row_slice(2, 1, &[0.3, 0.4]),
            fac_cov: DMatrix::identity(1, 1),
            cov_mat: DMatrix::from_row_slice(2, 2, &[0.1, 0.12, 0.12, 0.2]),
            inv_cov: None,
            meta: ModelMeta {
                kind: ModelKind::PrincipalComponent,
                num_factors: 1,
                observations: 5,
                covariance_divisor: 4,
                use_correlation: Some(true),
                k_override: Some(false),
                market_factor: None,
                drop_singletons: None,
                singleton_fixed: vec![],
                dropped: vec![],
            },
        };
        let json = model.to_json().unwrap();
        let value: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(
            value["cov_mat"]["data"],
            serde_json::json!([0.1, 0.12, 0.12, 0.2])
        );
        assert_eq!(value["inv_cov"], serde_json::Value::Null);
        assert_eq!(FactorModel::from_json(&json).unwrap(), model);
    }

    #[test]
    fn rejects_inconsistent_dimensions() {
        let doc = MatrixDoc {
            rows: 2,
            cols: 2,
            data: vec![1.0, 2.0, 3.0],
        };
        assert!(doc.into_matrix().is_err());
    }
}
