use std::path::PathBuf;
use std::str::FromStr;

use clap::Args;
use hetrisk::optimizer::{
    optimize_bounded_with, optimize_unbounded, AlphaVector, BoundedOptions, ConstraintSet,
    InnerStep, OuterUpdate,
};
use hetrisk::{Error, FactorModel};
use nalgebra::DVector;

use crate::config::{require, KvFile};
use crate::CliResult;

#[derive(Debug, Clone, Copy)]
pub struct Step(InnerStep);

impl FromStr for Step {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "exact" => Ok(Step(InnerStep::Exact)),
            "reference" => Ok(Step(InnerStep::Reference)),
            _ => Err(format!(
                "unknown inner step `{s}` (expected exact or reference)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Outer(OuterUpdate);

impl FromStr for Outer {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "secant" => Ok(Outer(OuterUpdate::Secant)),
            "rescale" => Ok(Outer(OuterUpdate::Rescale)),
            _ => Err(format!(
                "unknown outer update `{s}` (expected secant or rescale)"
            )),
        }
    }
}

/// Dollar-neutral weights with `Σ|w| = 1`. Without a bounds file the
/// closed-form solution is used; with one, the bounded active-set solver.
#[derive(Args)]
pub struct OptimizeArgs {
    /// Settings file in `key = value` format; keys are the flag names with
    /// underscores.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Model JSON written by `build`.
    #[arg(long)]
    model: Option<PathBuf>,
    /// CSV `ticker,alpha`.
    #[arg(long)]
    alpha: Option<PathBuf>,
    /// CSV `ticker,lower,upper` of weight bounds.
    #[arg(long)]
    bounds: Option<PathBuf>,
    /// Output CSV `ticker,weight`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Accuracy of the gross weight.
    #[arg(long)]
    prec: Option<f64>,
    /// Distance to a bound at which the reference step pins a coordinate.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_outer: Option<usize>,
    #[arg(long)]
    max_inner: Option<usize>,
    /// `exact` or `reference`.
    #[arg(long)]
    inner: Option<Step>,
    /// `secant` or `rescale`.
    #[arg(long)]
    outer: Option<Outer>,
}

pub fn run(a: OptimizeArgs) -> CliResult<()> {
    let mut file = KvFile::load(a.config.as_deref())?;
    let model_path = require(a.model.or(file.take_path("model")?), "model")?;
    let alpha_path = require(a.alpha.or(file.take_path("alpha")?), "alpha")?;
    let bounds_path = a.bounds.or(file.take_path("bounds")?);
    let out = require(a.out.or(file.take_path("out")?), "out")?;
    let d = BoundedOptions::default();
    let opts = BoundedOptions {
        prec: a.prec.or(file.take("prec")?).unwrap_or(d.prec),
        tol: a.tol.or(file.take("tol")?).unwrap_or(d.tol),
        max_outer: a
            .max_outer
            .or(file.take("max_outer")?)
            .unwrap_or(d.max_outer),
        max_inner: a.max_inner.or(file.take("max_inner")?).or(d.max_inner),
        step: a.inner.or(file.take("inner")?).map_or(d.step, |s| s.0),
        outer: a.outer.or(file.take("outer")?).map_or(d.outer, |o| o.0),
    };
    file.finish()?;
    if !(opts.prec > 0.0 && opts.prec < 1.0) {
        return Err(
            Error::InvalidConfig(format!("prec must lie in (0, 1), got {}", opts.prec)).into(),
        );
    }

    let model = FactorModel::read_json(&model_path)?;
    let n = model.num_tickers();
    let alpha_rows = super::align(
        super::read_ticker_table(&alpha_path, &["alpha"])?,
        &model.tickers,
        &alpha_path,
    )?;
    let alpha = AlphaVector::new(DVector::from_iterator(n, alpha_rows.iter().map(|r| r[0])))?;
    let inv_cov = model.inv_cov()?;
    let weights = match &bounds_path {
        None => optimize_unbounded(&alpha, inv_cov)?,
        Some(path) => {
            let rows = super::align(
                super::read_ticker_table(path, &["lower", "upper"])?,
                &model.tickers,
                path,
            )?;
            let lower = DVector::from_iterator(n, rows.iter().map(|r| r[0]));
            let upper = DVector::from_iterator(n, rows.iter().map(|r| r[1]));
            let sol = optimize_bounded_with(
                &alpha,
                &ConstraintSet::dollar_neutral(n)?,
                inv_cov,
                &upper,
                &lower,
                &opts,
            )?;
            let pinned = sol.pinned.iter().filter(|&&p| p != 0).count();
            println!(
                "bounded solve: {} outer iterations, {pinned} positions at a bound",
                sol.outer_iterations
            );
            sol.holdings
        }
    };

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["ticker", "weight"]).map_err(Error::from)?;
    for (t, x) in model.tickers.iter().zip(weights.weights.iter()) {
        w.write_record([t.as_str(), x.to_string().as_str()])
            .map_err(Error::from)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    super::write_file(&out, &bytes)?;
    println!(
        "net {:.3e}, gross {:.12} -> {}",
        weights.net(),
        weights.gross(),
        out.display()
    );
    Ok(())
}
