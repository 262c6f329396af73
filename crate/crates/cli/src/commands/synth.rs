use std::path::PathBuf;

use chrono::NaiveDate;
use clap::Args;
use hetrisk::synth::{generate_synthetic_panel, SynthSpec};

use crate::config::{require, KvFile};
use crate::CliResult;

/// Every spec field may be set in the config file under its flag name with
/// underscores.
#[derive(Args)]
pub struct SynthArgs {
    /// Generator settings in `key = value` format; keys are the flag names
    /// with underscores.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; receives prices.csv and hierarchy.csv.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    tickers: Option<usize>,
    #[arg(long)]
    days: Option<usize>,
    #[arg(long)]
    sectors: Option<usize>,
    #[arg(long)]
    industries: Option<usize>,
    #[arg(long)]
    sub_industries: Option<usize>,
    /// Sub-industries with a single ticker.
    #[arg(long)]
    singletons: Option<usize>,
    #[arg(long)]
    sector_corr: Option<f64>,
    #[arg(long)]
    industry_corr: Option<f64>,
    #[arg(long)]
    sub_industry_corr: Option<f64>,
    /// Median daily volatility.
    #[arg(long)]
    vol_median: Option<f64>,
    #[arg(long)]
    vol_dispersion: Option<f64>,
    /// Share of the return variance realized overnight.
    #[arg(long)]
    overnight_share: Option<f64>,
    /// Fraction of the overnight return reversed intraday.
    #[arg(long)]
    reversal: Option<f64>,
    #[arg(long)]
    dollar_volume_median: Option<f64>,
    #[arg(long)]
    dollar_volume_dispersion: Option<f64>,
    /// Split probability per ticker and day.
    #[arg(long)]
    split_prob: Option<f64>,
    /// First date, YYYY-MM-DD.
    #[arg(long)]
    start_date: Option<NaiveDate>,
}

fn spec(a: SynthArgs, file: &mut KvFile) -> CliResult<(SynthSpec, PathBuf)> {
    let d = SynthSpec::default();
    let out = require(a.out.or(file.take_path("out")?), "out")?;
    let spec = SynthSpec {
        seed: a.seed.or(file.take("seed")?).unwrap_or(d.seed),
        tickers: a.tickers.or(file.take("tickers")?).unwrap_or(d.tickers),
        days: a.days.or(file.take("days")?).unwrap_or(d.days),
        sectors: a.sectors.or(file.take("sectors")?).unwrap_or(d.sectors),
        industries: a
            .industries
            .or(file.take("industries")?)
            .unwrap_or(d.industries),
        sub_industries: a
            .sub_industries
            .or(file.take("sub_industries")?)
            .unwrap_or(d.sub_industries),
        singletons: a
            .singletons
            .or(file.take("singletons")?)
            .unwrap_or(d.singletons),
        sector_corr: a
            .sector_corr
            .or(file.take("sector_corr")?)
            .unwrap_or(d.sector_corr),
        industry_corr: a
            .industry_corr
            .or(file.take("industry_corr")?)
            .unwrap_or(d.industry_corr),
        sub_industry_corr: a
            .sub_industry_corr
            .or(file.take("sub_industry_corr")?)
            .unwrap_or(d.sub_industry_corr),
        vol_median: a
            .vol_median
            .or(file.take("vol_median")?)
            .unwrap_or(d.vol_median),
        vol_dispersion: a
            .vol_dispersion
            .or(file.take("vol_dispersion")?)
            .unwrap_or(d.vol_dispersion),
        overnight_share: a
            .overnight_share
            .or(file.take("overnight_share")?)
            .unwrap_or(d.overnight_share),
        reversal: a.reversal.or(file.take("reversal")?).unwrap_or(d.reversal),
        dollar_volume_median: a
            .dollar_volume_median
            .or(file.take("dollar_volume_median")?)
            .unwrap_or(d.dollar_volume_median),
        dollar_volume_dispersion: a
            .dollar_volume_dispersion
            .or(file.take("dollar_volume_dispersion")?)
            .unwrap_or(d.dollar_volume_dispersion),
        split_prob: a
            .split_prob
            .or(file.take("split_prob")?)
            .unwrap_or(d.split_prob),
        start_date: a
            .start_date
            .or(file.take("start_date")?)
            .unwrap_or(d.start_date),
    };
    Ok((spec, out))
}

pub fn run(a: SynthArgs) -> CliResult<()> {
    let mut file = KvFile::load(a.config.as_deref())?;
    let (spec, out) = spec(a, &mut file)?;
    file.finish()?;
    let (prices, hierarchy) = generate_synthetic_panel(&spec)?;
    std::fs::create_dir_all(&out)?;
    let mut buf = Vec::new();
    prices.write_csv(&mut buf)?;
    super::write_file(&out.join("prices.csv"), &buf)?;
    buf.clear();
    hierarchy.write_csv(&mut buf)?;
    super::write_file(&out.join("hierarchy.csv"), &buf)?;
    println!(
        "wrote {} tickers x {} days to {}",
        prices.num_tickers(),
        prices.num_days(),
        out.display()
    );
    Ok(())
}
