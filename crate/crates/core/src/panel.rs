//! Return panels: one row per ticker, one column per observation date.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// N x (M+1) matrix of returns with ticker and date labels.
///
/// Rows are tickers, columns are observations. The ordering of the
/// observation columns carries no meaning for the model builders.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnsPanel {
    tickers: Vec<String>,
    dates: Vec<String>,
    values: DMatrix<f64>,
}

impl ReturnsPanel {
    pub fn new(tickers: Vec<String>, dates: Vec<String>, values: DMatrix<f64>) -> Result<Self> {
        let (n, t) = values.shape();
        if tickers.len() != n || dates.len() != t {
            return Err(Error::DimensionMismatch(format!(
                "{} tickers and {} dates for a {}x{} matrix",
                tickers.len(),
                dates.len(),
                n,
                t
            )));
        }
        if n < 2 || t < 2 {
            return Err(Error::PanelTooSmall {
                tickers: n,
                observations: t,
            });
        }
        for i in 0..n {
            for s in 0..t {
                if !values[(i, s)].is_finite() {
                    return Err(Error::MissingValue {
                        ticker: tickers[i].clone(),
                        date: dates[s].clone(),
                    });
                }
            }
        }
        Ok(Self {
            tickers,
            dates,
            values,
        })
    }

    /// Panel with generated labels `T0..`, `D0..`; handy for tests and
    /// synthetic inputs.
    pub fn from_matrix(values: DMatrix<f64>) -> Result<Self> {
        let tickers = (0..values.nrows()).map(|i| format!("T{i}")).collect();
        let dates = (0..values.ncols()).map(|s| format!("D{s}")).collect();
        Self::new(tickers, dates, values)
    }

    pub fn tickers(&self) -> &[String] {
        &self.tickers
    }

    pub fn dates(&self) -> &[String] {
        &self.dates
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn num_tickers(&self) -> usize {
        self.values.nrows()
    }

    pub fn num_observations(&self) -> usize {
        self.values.ncols()
    }

    /// M, the number of observations minus one.
    pub fn m(&self) -> usize {
        self.values.ncols() - 1
    }

    /// Sub-panel with the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        let values = self.values.select_rows(rows.iter());
        let tickers = rows.iter().map(|&i| self.tickers[i].clone()).collect();
        Self::new(tickers, self.dates.clone(), values)
    }

    /// Sub-panel with the given observation columns, in the given order.
    pub fn select_columns(&self, cols: &[usize]) -> Result<Self> {
        let values = self.values.select_columns(cols.iter());
        let dates = cols.iter().map(|&s| self.dates[s].clone()).collect();
        Self::new(self.tickers.clone(), dates, values)
    }

    /// Each row divided by the given per-ticker scale.
    pub fn scale_rows(&self, scale: &[f64]) -> Result<Self> {
        let mut values = self.values.clone();
        for (i, mut row) in values.row_iter_mut().enumerate() {
            row /= scale[i];
        }
        Self::new(self.tickers.clone(), self.dates.clone(), values)
    }

    pub fn index_of(&self, ticker: &str) -> Option<usize> {
        self.tickers.iter().position(|t| t == ticker)
    }
}
