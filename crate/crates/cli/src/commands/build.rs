use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::Args;
use hetrisk::backtest::compute_returns;
use hetrisk::heterotic::build_heterotic_model;
use hetrisk::pc::fit_pc_model;
use hetrisk::stats::Summary;
use hetrisk::{Error, FactorModel, IndustryHierarchy, PricePanel, Result, ReturnsPanel};

use crate::config::{require, KvFile};
use crate::CliResult;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Pc,
    Heterotic,
}

impl FromStr for Kind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "pc" => Ok(Kind::Pc),
            "heterotic" => Ok(Kind::Heterotic),
            _ => Err(format!(
                "unknown model kind `{s}` (expected pc or heterotic)"
            )),
        }
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Kind::Pc => "pc",
            Kind::Heterotic => "heterotic",
        })
    }
}

#[derive(Args)]
pub struct BuildArgs {
    /// Settings file in `key = value` format; keys are the flag names with
    /// underscores.
    #[arg(long)]
    config: Option<PathBuf>,
    /// `pc` or `heterotic`.
    #[arg(long)]
    kind: Option<Kind>,
    /// Price CSV.
    #[arg(long)]
    prices: Option<PathBuf>,
    /// Hierarchy CSV; required for heterotic models.
    #[arg(long)]
    hierarchy: Option<PathBuf>,
    /// Model JSON to write.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Diagnostics CSV (default: the model path with `.diagnostics.csv`).
    #[arg(long)]
    diagnostics: Option<PathBuf>,
    /// Close-to-close returns to use, counting back from the last day
    /// (default: all).
    #[arg(long)]
    lookback: Option<usize>,
    /// Fixed number of PC factors instead of the g(K) heuristic.
    #[arg(long)]
    k: Option<usize>,
    /// Decompose the correlation rather than the covariance matrix (pc).
    #[arg(long, value_name = "BOOL")]
    use_correlation: Option<bool>,
    /// One-factor top level (heterotic).
    #[arg(long, value_name = "BOOL")]
    market_factor: Option<bool>,
    /// Leave single-ticker sub-industries out of the model (heterotic).
    #[arg(long, value_name = "BOOL")]
    drop_singletons: Option<bool>,
}

/// The last `lookback` close-to-close returns of every ticker.
pub fn returns_panel(prices: &PricePanel, lookback: Option<usize>) -> Result<ReturnsPanel> {
    let returns = compute_returns(prices)?;
    let available = returns.close_to_close.ncols();
    let d = lookback.unwrap_or(available);
    if d == 0 || d > available {
        return Err(Error::InvalidConfig(format!(
            "lookback {d} outside 1..={available} available returns"
        )));
    }
    let first = available - d;
    let values = returns.close_to_close.columns(first, d).into_owned();
    let dates = (first..available)
        .map(|c| prices.date_label(c + 1))
        .collect();
    ReturnsPanel::new(prices.tickers().to_vec(), dates, values)
}

/// `kind,tickers,num_factors,min,q1,median,mean,q3,max` for the specific
/// variance ratios `ξ_i² / Γ_ii`.
fn diagnostics_csv(model: &FactorModel, kind: Kind) -> Result<Vec<u8>> {
    let ratios: Vec<f64> = (0..model.num_tickers())
        .map(|i| model.spec_risk[i] * model.spec_risk[i] / model.cov_mat[(i, i)])
        .collect();
    let s = Summary::of(&ratios).ok_or(Error::EmptySeries)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "kind",
        "tickers",
        "num_factors",
        "min",
        "q1",
        "median",
        "mean",
        "q3",
        "max",
    ])?;
    let mut row = vec![
        kind.to_string(),
        model.num_tickers().to_string(),
        model.num_factors().to_string(),
    ];
    row.extend(
        [s.min, s.q1, s.median, s.mean, s.q3, s.max]
            .iter()
            .map(f64::to_string),
    );
    w.write_record(&row)?;
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

fn default_diagnostics(out: &Path) -> PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "model".into());
    out.with_file_name(format!("{stem}.diagnostics.csv"))
}

pub fn run(a: BuildArgs) -> CliResult<()> {
    let mut file = KvFile::load(a.config.as_deref())?;
    let kind = require(a.kind.or(file.take("kind")?), "kind")?;
    let prices_path = require(a.prices.or(file.take_path("prices")?), "prices")?;
    let hierarchy_path = a.hierarchy.or(file.take_path("hierarchy")?);
    let out = require(a.out.or(file.take_path("out")?), "out")?;
    let diagnostics = a
        .diagnostics
        .or(file.take_path("diagnostics")?)
        .unwrap_or_else(|| default_diagnostics(&out));
    let lookback = a.lookback.or(file.take("lookback")?);
    let k = a.k.or(file.take("k")?);
    let use_correlation = a.use_correlation.or(file.take("use_correlation")?);
    let market_factor = a.market_factor.or(file.take("market_factor")?);
    let drop_singletons = a.drop_singletons.or(file.take("drop_singletons")?);
    file.finish()?;

    let misplaced =
        |name: &str| Error::InvalidConfig(format!("`{name}` does not apply to {kind} models"));
    match kind {
        Kind::Pc => {
            if market_factor.is_some() {
                return Err(misplaced("market_factor").into());
            }
            if drop_singletons.is_some() {
                return Err(misplaced("drop_singletons").into());
            }
        }
        Kind::Heterotic => {
            if k.is_some() {
                return Err(misplaced("k").into());
            }
            if use_correlation.is_some() {
                return Err(misplaced("use_correlation").into());
            }
        }
    }

    let prices = PricePanel::read_csv(&prices_path)?;
    let hierarchy = hierarchy_path
        .as_deref()
        .map(IndustryHierarchy::read_csv)
        .transpose()?;
    let panel = returns_panel(&prices, lookback)?;
    let model = match kind {
        Kind::Pc => {
            let fit = fit_pc_model(&panel, use_correlation.unwrap_or(true), k)?;
            if let Some(sel) = &fit.selection {
                if sel.degenerate_top_eigenvalue {
                    eprintln!(
                        "warning: top two eigenvalues coincide; the first component is not unique"
                    );
                }
            }
            fit.model
        }
        Kind::Heterotic => {
            let h = hierarchy
                .ok_or_else(|| Error::InvalidConfig("heterotic models need --hierarchy".into()))?;
            build_heterotic_model(
                &panel,
                &h,
                market_factor.unwrap_or(false),
                drop_singletons.unwrap_or(false),
            )?
        }
    };
    super::write_file(&out, model.to_json()?.as_bytes())?;
    super::write_file(&diagnostics, &diagnostics_csv(&model, kind)?)?;
    println!(
        "{kind} model: {} tickers, {} factors, {} observations{} -> {}",
        model.num_tickers(),
        model.num_factors(),
        model.meta.observations,
        if model.inv_cov.is_none() {
            " (singular, no inverse)"
        } else {
            ""
        },
        out.display()
    );
    Ok(())
}
