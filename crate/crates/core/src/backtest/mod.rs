//! Intraday horse race between regression and optimization portfolios.
//!
//! Each trading day `t` a delay-0 portfolio is opened at the open using the
//! overnight return `E_t` as the alpha and closed at the close. Trading
//! starts on day `lookback + 1`; from then on the backtest advances in
//! rebalancing intervals of `rebalance_period` days. At the start of each
//! interval the universe is fixed by average daily dollar volume over the
//! preceding `lookback` days, and the regression weights `z = 1/C_ii` and
//! the risk models are estimated from the `lookback` close-to-close returns
//! before that day. Everything used on day `t` is computed from prices up to
//! the close of day `t - 1`, plus the open of day `t` for the alpha.
//!
//! Days are indexed oldest first; the trading loop never looks at an index
//! greater than the day being traded.

mod metrics;
mod prices;

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use chrono::NaiveDate;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::heterotic::{build_heterotic_model, cluster_first_pc};
use crate::hierarchy::IndustryHierarchy;
use crate::optimizer::{
    optimize_bounded, optimize_unbounded, regression_holdings, AlphaVector, ConstraintSet,
    HoldingsVector,
};
use crate::panel::ReturnsPanel;
use crate::pc::{build_pc_model, correlation_eigen, scaled_components};
use crate::stats::sample_covariance;

pub use metrics::{
    cents_per_share, compute_metrics, return_on_capital, sharpe_ratio, Metrics,
    TRADING_DAYS_PER_YEAR,
};
pub use prices::{
    compute_returns, select_universe, DailyReturns, PricePanel, Universe, PRICE_CSV_HEADER,
    SPLIT_FACTOR_TOL,
};

/// Slack allowed on a liquidity bound, as a fraction of the investment level.
pub const BOUND_AUDIT_TOL: f64 = 1e-9;
/// Largest `|Σ w|` accepted by the holdings audit.
pub const NEUTRALITY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Regression on all principal components of the lookback correlation
    /// matrix, plus an intercept.
    RegressionPc,
    /// Regression on sub-industry indicators.
    RegressionSubIndustry,
    /// Regression on first-PC-weighted sub-industry indicators, plus an
    /// intercept.
    RegressionHeterotic,
    OptimizationPc,
    OptimizationHeterotic,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::RegressionPc,
        Variant::RegressionSubIndustry,
        Variant::RegressionHeterotic,
        Variant::OptimizationPc,
        Variant::OptimizationHeterotic,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::RegressionPc => "regression_pc",
            Variant::RegressionSubIndustry => "regression_sub_industry",
            Variant::RegressionHeterotic => "regression_heterotic",
            Variant::OptimizationPc => "optimization_pc",
            Variant::OptimizationHeterotic => "optimization_heterotic",
        }
    }

    pub fn is_regression(self) -> bool {
        matches!(
            self,
            Variant::RegressionPc | Variant::RegressionSubIndustry | Variant::RegressionHeterotic
        )
    }

    /// Variants whose singleton sub-industry holdings vanish identically.
    pub fn zeroes_singletons(self) -> bool {
        matches!(
            self,
            Variant::RegressionSubIndustry | Variant::RegressionHeterotic
        )
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown variant `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BacktestConfig {
    /// Days of history for the universe, weights and risk models.
    pub lookback: usize,
    pub universe_size: usize,
    pub rebalance_period: usize,
    /// Gross dollar holdings, split evenly between longs and shorts.
    pub investment_level: f64,
    /// Position cap as a fraction of average daily dollar volume.
    pub bound_fraction: Option<f64>,
    /// Use a one-factor model at the top of the heterotic construction.
    pub market_factor: bool,
    /// Recompute the regression loadings daily rather than per interval.
    pub daily_loadings: bool,
    /// Gross-weight accuracy of the bounded optimizer.
    pub prec: f64,
}

impl Default for BacktestConfig {
    fn default() -> Self {
        Self {
            lookback: 21,
            universe_size: 2000,
            rebalance_period: 21,
            investment_level: 2e7,
            bound_fraction: Some(0.01),
            market_factor: false,
            daily_loadings: true,
            prec: 1e-5,
        }
    }
}

impl BacktestConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.lookback < 2 {
            return bad(format!(
                "lookback must be at least 2, got {}",
                self.lookback
            ));
        }
        if self.rebalance_period < 1 {
            return bad("rebalance_period must be at least 1".into());
        }
        if self.universe_size < 3 {
            return bad(format!(
                "universe_size must be at least 3, got {}",
                self.universe_size
            ));
        }
        if !(self.investment_level > 0.0 && self.investment_level.is_finite()) {
            return bad(format!(
                "investment_level must be positive, got {}",
                self.investment_level
            ));
        }
        if let Some(f) = self.bound_fraction {
            if !(f > 0.0 && f <= 1.0) {
                return bad(format!("bound_fraction must lie in (0, 1], got {f}"));
            }
        }
        if !(self.prec > 0.0 && self.prec < 1.0) {
            return bad(format!("prec must lie in (0, 1), got {}", self.prec));
        }
        Ok(())
    }

    /// First day on which a portfolio can be traded.
    pub fn first_trading_day(&self) -> usize {
        self.lookback + 1
    }
}

/// Universe of one rebalancing interval `[start, end)`.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalUniverse {
    pub start: usize,
    pub end: usize,
    pub universe: Universe,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportSummary {
    pub variant: Variant,
    pub roc: f64,
    /// `None` when the P&L has zero variance.
    pub sharpe: Option<f64>,
    /// `None` when no shares were traded.
    pub cps: Option<f64>,
    pub days: usize,
    pub universe_size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BacktestReport {
    pub variant: Variant,
    pub investment_level: f64,
    /// Traded day indices into the price panel.
    pub days: Vec<usize>,
    pub dates: Vec<NaiveDate>,
    pub daily_pnl: Vec<f64>,
    pub shares_traded: Vec<f64>,
    /// Dollar holdings per day, aligned with the day's interval universe.
    pub holdings: Vec<DVector<f64>>,
    pub interval_of_day: Vec<usize>,
    pub intervals: Vec<IntervalUniverse>,
    pub summary: ReportSummary,
}

impl BacktestReport {
    fn summarize(&mut self) -> Result<()> {
        let roc = return_on_capital(&self.daily_pnl, self.investment_level)?;
        let sharpe = match sharpe_ratio(&self.daily_pnl) {
            Ok(s) => Some(s),
            Err(Error::ZeroVariancePnl) => None,
            Err(e) => return Err(e),
        };
        let cps = match cents_per_share(&self.daily_pnl, &self.shares_traded) {
            Ok(c) => Some(c),
            Err(Error::ZeroTradedShares) => None,
            Err(e) => return Err(e),
        };
        self.summary = ReportSummary {
            variant: self.variant,
            roc,
            sharpe,
            cps,
            days: self.days.len(),
            universe_size: self
                .intervals
                .iter()
                .map(|iv| iv.universe.tickers.len())
                .max()
                .unwrap_or(0),
        };
        Ok(())
    }

    /// Holdings of one day keyed by panel ticker index.
    pub fn holdings_on(&self, k: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let iv = &self.intervals[self.interval_of_day[k]];
        iv.universe
            .tickers
            .iter()
            .copied()
            .zip(self.holdings[k].iter().copied())
    }

    /// `date,pnl,shares_traded`, one row per traded day.
    pub fn write_pnl_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["date", "pnl", "shares_traded"])?;
        for k in 0..self.days.len() {
            w.write_record([
                self.dates[k].format("%Y-%m-%d").to_string(),
                self.daily_pnl[k].to_string(),
                self.shares_traded[k].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// `date,ticker,dollars` for every nonzero position.
    pub fn write_holdings_csv<W: Write>(&self, writer: W, prices: &PricePanel) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["date", "ticker", "dollars"])?;
        for k in 0..self.days.len() {
            let date = self.dates[k].format("%Y-%m-%d").to_string();
            for (i, h) in self.holdings_on(k).filter(|(_, h)| *h != 0.0) {
                w.write_record([
                    date.as_str(),
                    prices.tickers()[i].as_str(),
                    h.to_string().as_str(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn summary_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(&self.summary)?;
        s.push('\n');
        Ok(s)
    }
}

/// Run the horse race for the given variants. Per-day and per-interval
/// failures abort the run with the offending date.
pub fn run_horserace(
    prices: &PricePanel,
    hierarchy: &IndustryHierarchy,
    config: &BacktestConfig,
    variants: &[Variant],
) -> Result<Vec<BacktestReport>> {
    config.validate()?;
    if variants.is_empty() {
        return Err(Error::InvalidConfig("no variants selected".into()));
    }
    let hierarchy = hierarchy.restrict(prices.tickers())?;
    let returns = compute_returns(prices)?;
    let first = config.first_trading_day();
    let num_days = prices.num_days();
    if num_days <= first {
        return Err(Error::InsufficientHistory {
            day: first,
            needed: first + 1,
            available: num_days,
        });
    }

    let mut reports: Vec<BacktestReport> = variants
        .iter()
        .map(|&variant| BacktestReport {
            variant,
            investment_level: config.investment_level,
            days: Vec::new(),
            dates: Vec::new(),
            daily_pnl: Vec::new(),
            shares_traded: Vec::new(),
            holdings: Vec::new(),
            interval_of_day: Vec::new(),
            intervals: Vec::new(),
            summary: ReportSummary {
                variant,
                roc: 0.0,
                sharpe: None,
                cps: None,
                days: 0,
                universe_size: 0,
            },
        })
        .collect();
    let mut intervals = Vec::new();

    for start in (first..num_days).step_by(config.rebalance_period) {
        let end = (start + config.rebalance_period).min(num_days);
        let fail = |day: usize| {
            move |e: Error| Error::DateFailure {
                date: prices.date_label(day),
                source: Box::new(e),
            }
        };
        let ctx = Interval::build(prices, &returns, &hierarchy, config, variants, start)
            .map_err(fail(start))?;
        let outcomes: Vec<Result<Vec<DayOutcome>>> = (start..end)
            .into_par_iter()
            .map(|day| {
                variants
                    .iter()
                    .map(|&v| ctx.trade(v, day))
                    .collect::<Result<Vec<_>>>()
                    .map_err(fail(day))
            })
            .collect();
        for (day, out) in (start..end).zip(outcomes) {
            for (report, o) in reports.iter_mut().zip(out?) {
                report.days.push(day);
                report.dates.push(prices.dates()[day]);
                report.daily_pnl.push(o.pnl);
                report.shares_traded.push(o.shares);
                report.holdings.push(o.dollars);
                report.interval_of_day.push(intervals.len());
            }
        }
        intervals.push(IntervalUniverse {
            start,
            end,
            universe: ctx.universe,
        });
    }
    for report in &mut reports {
        report.intervals = intervals.clone();
        report.summarize()?;
    }
    Ok(reports)
}

struct DayOutcome {
    pnl: f64,
    shares: f64,
    dollars: DVector<f64>,
}

/// Everything shared by the days of one rebalancing interval.
struct Interval<'a> {
    prices: &'a PricePanel,
    returns: &'a DailyReturns,
    config: &'a BacktestConfig,
    universe: Universe,
    names: Vec<String>,
    hierarchy: IndustryHierarchy,
    z: DVector<f64>,
    upper: Option<DVector<f64>>,
    sub_industry: Option<ConstraintSet>,
    pc_inv: Option<DMatrix<f64>>,
    het_inv: Option<DMatrix<f64>>,
    /// Regression loadings frozen for the interval when not recomputed daily.
    pc_loadings: Option<ConstraintSet>,
    het_loadings: Option<ConstraintSet>,
}

impl<'a> Interval<'a> {
    fn build(
        prices: &'a PricePanel,
        returns: &'a DailyReturns,
        hierarchy: &IndustryHierarchy,
        config: &'a BacktestConfig,
        variants: &[Variant],
        start: usize,
    ) -> Result<Self> {
        let universe = select_universe(prices, start, config.lookback, config.universe_size)?;
        let names: Vec<String> = universe
            .tickers
            .iter()
            .map(|&i| prices.tickers()[i].clone())
            .collect();
        let hierarchy = hierarchy.restrict(&names)?;
        let panel = lookback_panel(prices, returns, &universe, &names, start, config.lookback)?;
        let cov = sample_covariance(&panel)?;
        let z = cov.variances.map(|v| 1.0 / v);
        let upper = config
            .bound_fraction
            .map(|f| &universe.addv * (f / config.investment_level));

        let has = |v: Variant| variants.contains(&v);
        let sub_industry = if has(Variant::RegressionSubIndustry) {
            Some(ConstraintSet::new(hierarchy.ticker_membership(0))?)
        } else {
            None
        };
        let pc_inv = if has(Variant::OptimizationPc) {
            Some(build_pc_model(&panel, true, None)?.inv_cov()?.clone())
        } else {
            None
        };
        let het_inv = if has(Variant::OptimizationHeterotic) {
            Some(
                build_heterotic_model(&panel, &hierarchy, config.market_factor, false)?
                    .inv_cov()?
                    .clone(),
            )
        } else {
            None
        };
        let mut ctx = Self {
            prices,
            returns,
            config,
            universe,
            names,
            hierarchy,
            z,
            upper,
            sub_industry,
            pc_inv,
            het_inv,
            pc_loadings: None,
            het_loadings: None,
        };
        if !config.daily_loadings {
            if has(Variant::RegressionPc) {
                ctx.pc_loadings = Some(pc_loadings(&panel)?);
            }
            if has(Variant::RegressionHeterotic) {
                ctx.het_loadings = Some(heterotic_loadings(&panel, &ctx.hierarchy)?);
            }
        }
        Ok(ctx)
    }

    fn trade(&self, variant: Variant, day: usize) -> Result<DayOutcome> {
        let overnight = self.returns.overnight_on(day);
        let alpha = AlphaVector::new(DVector::from_iterator(
            self.universe.tickers.len(),
            self.universe.tickers.iter().map(|&i| overnight[i]),
        ))?;
        let weights = match self.weights(variant, &alpha, day) {
            Ok(w) => w,
            Err(Error::ZeroAlpha) => HoldingsVector::zeros(alpha.len()),
            Err(e) => return Err(e),
        };
        let dollars = weights.dollars(self.config.investment_level);
        let (mut pnl, mut shares) = (0.0, 0.0);
        for (k, &i) in self.universe.tickers.iter().enumerate() {
            let (open, close) = (self.prices.open()[(i, day)], self.prices.close()[(i, day)]);
            pnl += dollars[k] * (close / open - 1.0);
            shares += 2.0 * dollars[k].abs() / open;
        }
        Ok(DayOutcome {
            pnl,
            shares,
            dollars,
        })
    }

    fn weights(&self, variant: Variant, alpha: &AlphaVector, day: usize) -> Result<HoldingsVector> {
        if variant.is_regression() {
            let daily;
            let constraints = match variant {
                Variant::RegressionSubIndustry => {
                    self.sub_industry.as_ref().expect("built for the variant")
                }
                Variant::RegressionPc => match &self.pc_loadings {
                    Some(c) => c,
                    None => {
                        daily = pc_loadings(&self.day_panel(day)?)?;
                        &daily
                    }
                },
                _ => match &self.het_loadings {
                    Some(c) => c,
                    None => {
                        daily = heterotic_loadings(&self.day_panel(day)?, &self.hierarchy)?;
                        &daily
                    }
                },
            };
            match &self.upper {
                Some(u) => optimize_bounded(
                    alpha,
                    constraints,
                    &DMatrix::from_diagonal(&self.z),
                    u,
                    &-u,
                    self.config.prec,
                ),
                None => regression_holdings(alpha, constraints, &self.z),
            }
        } else {
            let inv = match variant {
                Variant::OptimizationPc => self.pc_inv.as_ref(),
                _ => self.het_inv.as_ref(),
            }
            .expect("built for the variant");
            match &self.upper {
                Some(u) => {
                    let neutral = ConstraintSet::dollar_neutral(alpha.len())?;
                    optimize_bounded(alpha, &neutral, inv, u, &-u, self.config.prec)
                }
                None => optimize_unbounded(alpha, inv),
            }
        }
    }

    fn day_panel(&self, day: usize) -> Result<ReturnsPanel> {
        lookback_panel(
            self.prices,
            self.returns,
            &self.universe,
            &self.names,
            day,
            self.config.lookback,
        )
    }
}

/// Close-to-close returns of the universe over the `lookback` days before
/// `day`.
fn lookback_panel(
    prices: &PricePanel,
    returns: &DailyReturns,
    universe: &Universe,
    names: &[String],
    day: usize,
    lookback: usize,
) -> Result<ReturnsPanel> {
    if day <= lookback {
        return Err(Error::InsufficientHistory {
            day,
            needed: lookback + 1,
            available: day,
        });
    }
    let days: Vec<usize> = (day - lookback..day).collect();
    let values = DMatrix::from_fn(universe.tickers.len(), lookback, |r, c| {
        returns.close_to_close[(universe.tickers[r], days[c] - 1)]
    });
    let dates = days.iter().map(|&s| prices.date_label(s)).collect();
    ReturnsPanel::new(names.to_vec(), dates, values)
}

/// `[1, √C_ii √λ_a V_ia]` over all `M` principal components of the panel's
/// correlation matrix.
fn pc_loadings(panel: &ReturnsPanel) -> Result<ConstraintSet> {
    let (cov, eig) = correlation_eigen(panel)?;
    let mut omega = scaled_components(&eig, panel.m());
    let sd = cov.volatilities();
    for (i, mut row) in omega.row_iter_mut().enumerate() {
        row *= sd[i];
    }
    ConstraintSet::with_intercept(&omega)
}

/// `[1, √C_ii U_i δ_iA]` with `U` the sub-industry first principal
/// components of the panel's correlation matrix.
fn heterotic_loadings(
    panel: &ReturnsPanel,
    hierarchy: &IndustryHierarchy,
) -> Result<ConstraintSet> {
    let cov = sample_covariance(panel)?;
    let pc = cluster_first_pc(&cov.cor, hierarchy.level(0))?;
    let mut load = hierarchy.ticker_membership(0);
    let sd = cov.volatilities();
    for (i, mut row) in load.row_iter_mut().enumerate() {
        row *= sd[i] * pc.u[i];
    }
    ConstraintSet::with_intercept(&load)
}

/// Run-level checks on a report's holdings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HoldingsAudit {
    /// Largest `|Σ H| / I`.
    pub max_net: f64,
    /// Largest `|Σ|H| / I - 1|` over days with a position.
    pub max_gross_error: f64,
    /// Days without any position.
    pub flat_days: usize,
    /// Positions above their liquidity bound by more than
    /// `BOUND_AUDIT_TOL · I`.
    pub bound_violations: usize,
    /// Nonzero positions in single-ticker sub-industries.
    pub singleton_positions: usize,
}

impl HoldingsAudit {
    pub fn of(
        report: &BacktestReport,
        hierarchy: &IndustryHierarchy,
        prices: &PricePanel,
        config: &BacktestConfig,
    ) -> Result<Self> {
        let inv = report.investment_level;
        let mut audit = HoldingsAudit {
            max_net: 0.0,
            max_gross_error: 0.0,
            flat_days: 0,
            bound_violations: 0,
            singleton_positions: 0,
        };
        let mut singletons = Vec::with_capacity(report.intervals.len());
        for iv in &report.intervals {
            let names: Vec<String> = iv
                .universe
                .tickers
                .iter()
                .map(|&i| prices.tickers()[i].clone())
                .collect();
            let h = hierarchy.restrict(&names)?;
            let mut flags = vec![false; names.len()];
            for k in h.singleton_tickers() {
                flags[k] = true;
            }
            singletons.push(flags);
        }
        for (k, h) in report.holdings.iter().enumerate() {
            let iv_idx = report.interval_of_day[k];
            let iv = &report.intervals[iv_idx];
            audit.max_net = audit.max_net.max(h.sum().abs() / inv);
            let gross: f64 = h.iter().map(|x| x.abs()).sum();
            if gross == 0.0 {
                audit.flat_days += 1;
            } else {
                audit.max_gross_error = audit.max_gross_error.max((gross / inv - 1.0).abs());
            }
            if let Some(f) = config.bound_fraction {
                audit.bound_violations += h
                    .iter()
                    .zip(iv.universe.addv.iter())
                    .filter(|(x, a)| x.abs() > f * **a + BOUND_AUDIT_TOL * inv)
                    .count();
            }
            audit.singleton_positions += h
                .iter()
                .zip(&singletons[iv_idx])
                .filter(|(x, single)| **single && **x != 0.0)
                .count();
        }
        Ok(audit)
    }

    /// Failed checks for the given variant, empty when all pass. Gross
    /// weights must be one to `gross_tol`.
    pub fn failures(&self, variant: Variant, gross_tol: f64) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.max_net < NEUTRALITY_TOL) {
            out.push(format!("{variant}: net weight {:.3e}", self.max_net));
        }
        if !(self.max_gross_error < gross_tol) {
            out.push(format!(
                "{variant}: gross weight off by {:.3e}",
                self.max_gross_error
            ));
        }
        if self.bound_violations > 0 {
            out.push(format!(
                "{variant}: {} bound violations",
                self.bound_violations
            ));
        }
        if variant.zeroes_singletons() && self.singleton_positions > 0 {
            out.push(format!(
                "{variant}: {} singleton positions",
                self.singleton_positions
            ));
        }
        out
    }
}
