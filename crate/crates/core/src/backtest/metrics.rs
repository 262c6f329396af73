//! Annualized return on capital, Sharpe ratio and cents per share.

use serde::Serialize;

use crate::error::{Error, Result};

pub const TRADING_DAYS_PER_YEAR: f64 = 252.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Metrics {
    pub roc: f64,
    pub sharpe: f64,
    pub cps: f64,
}

/// `252 · mean(Π) / I`.
pub fn return_on_capital(pnl: &[f64], investment_level: f64) -> Result<f64> {
    if pnl.is_empty() {
        return Err(Error::EmptySeries);
    }
    Ok(TRADING_DAYS_PER_YEAR * mean(pnl) / investment_level)
}

/// `√252 · mean(Π) / sd(Π)` with the sample standard deviation.
pub fn sharpe_ratio(pnl: &[f64]) -> Result<f64> {
    if pnl.is_empty() {
        return Err(Error::EmptySeries);
    }
    if pnl.len() < 2 || pnl.iter().all(|&x| x == pnl[0]) {
        return Err(Error::ZeroVariancePnl);
    }
    let mu = mean(pnl);
    let var = pnl.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / (pnl.len() - 1) as f64;
    if !(var > 0.0) {
        return Err(Error::ZeroVariancePnl);
    }
    Ok(TRADING_DAYS_PER_YEAR.sqrt() * mu / var.sqrt())
}

/// `100 · ΣΠ / ΣQ`: P&L in cents per share traded.
pub fn cents_per_share(pnl: &[f64], shares: &[f64]) -> Result<f64> {
    if pnl.is_empty() {
        return Err(Error::EmptySeries);
    }
    let traded: f64 = shares.iter().sum();
    if !(traded > 0.0) {
        return Err(Error::ZeroTradedShares);
    }
    Ok(100.0 * pnl.iter().sum::<f64>() / traded)
}

pub fn compute_metrics(pnl: &[f64], shares: &[f64], investment_level: f64) -> Result<Metrics> {
    if pnl.len() != shares.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} P&L values, {} share counts",
            pnl.len(),
            shares.len()
        )));
    }
    Ok(Metrics {
        roc: return_on_capital(pnl, investment_level)?,
        sharpe: sharpe_ratio(pnl)?,
        cps: cents_per_share(pnl, shares)?,
    })
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}
