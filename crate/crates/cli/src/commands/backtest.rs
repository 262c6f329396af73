use std::path::PathBuf;
use std::str::FromStr;

use clap::Args;
use hetrisk::backtest::HoldingsAudit;
use hetrisk::{run_horserace, BacktestConfig, Error, IndustryHierarchy, PricePanel, Variant};

use crate::config::{parse_bounds, require, KvFile};
use crate::{CliError, CliResult};

/// Comma-separated variant names, or `all`.
#[derive(Debug, Clone)]
pub struct VariantList(Vec<Variant>);

impl FromStr for VariantList {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        parse_variants(s).map(VariantList)
    }
}

/// `none` or a fraction of average daily dollar volume.
#[derive(Debug, Clone, Copy)]
pub struct Bounds(Option<f64>);

impl FromStr for Bounds {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        parse_bounds(s).map(Bounds)
    }
}

fn parse_variants(s: &str) -> Result<Vec<Variant>, String> {
    if s == "all" {
        return Ok(Variant::ALL.to_vec());
    }
    let mut out: Vec<Variant> = Vec::new();
    for name in s.split(',').map(str::trim) {
        let v = name.parse::<Variant>().map_err(|e| e.to_string())?;
        if out.contains(&v) {
            return Err(format!("variant `{name}` listed twice"));
        }
        out.push(v);
    }
    Ok(out)
}

/// Writes `<variant>_pnl.csv` and `<variant>_summary.json` per variant into
/// the output directory, then audits the holdings. Keys in the config file
/// are the flag names with underscores.
#[derive(Args)]
pub struct BacktestArgs {
    /// Settings file in `key = value` format; keys are the flag names with
    /// underscores.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Price CSV.
    #[arg(long)]
    prices: Option<PathBuf>,
    /// Hierarchy CSV.
    #[arg(long)]
    hierarchy: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated variant names, or `all`.
    #[arg(long)]
    variants: Option<VariantList>,
    /// Days of history for universe selection and the risk models.
    #[arg(long)]
    lookback: Option<usize>,
    #[arg(long)]
    universe_size: Option<usize>,
    /// Trading days per interval with a fixed universe and models.
    #[arg(long)]
    rebalance_period: Option<usize>,
    /// Gross dollar holdings.
    #[arg(long)]
    investment_level: Option<f64>,
    /// Position cap as a fraction of average daily dollar volume, or
    /// `none`.
    #[arg(long)]
    bounds: Option<Bounds>,
    /// One-factor top level in the heterotic models.
    #[arg(long, value_name = "BOOL")]
    market_factor: Option<bool>,
    /// Recompute regression loadings every day rather than per interval.
    #[arg(long, value_name = "BOOL")]
    daily_loadings: Option<bool>,
    /// Gross-weight accuracy of the bounded optimizer; also the audit
    /// tolerance on the gross weight.
    #[arg(long)]
    prec: Option<f64>,
    /// Also write `<variant>_holdings.csv`.
    #[arg(long, value_name = "BOOL")]
    holdings: Option<bool>,
}

pub fn run(a: BacktestArgs) -> CliResult<()> {
    let mut file = KvFile::load(a.config.as_deref())?;
    let prices_path = require(a.prices.or(file.take_path("prices")?), "prices")?;
    let hierarchy_path = require(a.hierarchy.or(file.take_path("hierarchy")?), "hierarchy")?;
    let out = require(a.out.or(file.take_path("out")?), "out")?;
    let variants = a
        .variants
        .map(|v| v.0)
        .or(file.take_with("variants", parse_variants)?)
        .unwrap_or_else(|| Variant::ALL.to_vec());
    let d = BacktestConfig::default();
    let config = BacktestConfig {
        lookback: a.lookback.or(file.take("lookback")?).unwrap_or(d.lookback),
        universe_size: a
            .universe_size
            .or(file.take("universe_size")?)
            .unwrap_or(d.universe_size),
        rebalance_period: a
            .rebalance_period
            .or(file.take("rebalance_period")?)
            .unwrap_or(d.rebalance_period),
        investment_level: a
            .investment_level
            .or(file.take("investment_level")?)
            .unwrap_or(d.investment_level),
        bound_fraction: a
            .bounds
            .map(|b| b.0)
            .or(file.take_with("bounds", parse_bounds)?)
            .unwrap_or(d.bound_fraction),
        market_factor: a
            .market_factor
            .or(file.take("market_factor")?)
            .unwrap_or(d.market_factor),
        daily_loadings: a
            .daily_loadings
            .or(file.take("daily_loadings")?)
            .unwrap_or(d.daily_loadings),
        prec: a.prec.or(file.take("prec")?).unwrap_or(d.prec),
    };
    let write_holdings = a.holdings.or(file.take("holdings")?).unwrap_or(false);
    file.finish()?;
    config.validate()?;

    let prices = PricePanel::read_csv(&prices_path)?;
    let hierarchy = IndustryHierarchy::read_csv(&hierarchy_path)?;
    let reports = run_horserace(&prices, &hierarchy, &config, &variants)?;

    std::fs::create_dir_all(&out)?;
    let mut failures = Vec::new();
    println!(
        "{:<24} {:>5} {:>9} {:>9} {:>9}  audit",
        "variant", "days", "roc", "sharpe", "cps"
    );
    for report in &reports {
        let name = report.variant.name();
        let mut buf = Vec::new();
        report.write_pnl_csv(&mut buf)?;
        super::write_file(&out.join(format!("{name}_pnl.csv")), &buf)?;
        super::write_file(
            &out.join(format!("{name}_summary.json")),
            report.summary_json()?.as_bytes(),
        )?;
        if write_holdings {
            buf.clear();
            report.write_holdings_csv(&mut buf, &prices)?;
            super::write_file(&out.join(format!("{name}_holdings.csv")), &buf)?;
        }

        let audit = HoldingsAudit::of(report, &hierarchy, &prices, &config)?;
        let failed = audit.failures(report.variant, config.prec);
        let s = &report.summary;
        let opt = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{v:.4}"));
        println!(
            "{:<24} {:>5} {:>9.4} {:>9} {:>9}  {}",
            name,
            s.days,
            s.roc,
            opt(s.sharpe),
            opt(s.cps),
            if failed.is_empty() { "ok" } else { "FAILED" }
        );
        if audit.flat_days > 0 {
            eprintln!("note: {name} held no position on {} days", audit.flat_days);
        }
        failures.extend(failed);
    }
    if !failures.is_empty() {
        return Err(CliError::Checks(failures));
    }
    if reports.is_empty() {
        return Err(Error::InvalidConfig("no variants ran".into()).into());
    }
    Ok(())
}
