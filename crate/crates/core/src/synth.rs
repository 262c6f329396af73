//! Seeded synthetic price panels with a nested industry structure and an
//! overnight reversal.
//!
//! Each ticker's daily log return is split into an overnight and an intraday
//! part. Both parts are driven by independent shocks with the same
//! correlation structure: two tickers in the same sub-industry have
//! correlation `sub_industry_corr`, in the same industry `industry_corr`, in
//! the same sector `sector_corr`, and zero otherwise. The intraday part also
//! reverses a fraction `reversal` of the overnight return, which is the
//! signal the backtest portfolios trade. Close-to-close returns therefore
//! keep the configured correlations exactly.

use chrono::{Datelike, NaiveDate, Weekday};
use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::backtest::PricePanel;
use crate::error::{Error, Result};
use crate::hierarchy::{IndustryHierarchy, Membership, DEFAULT_LEVEL_NAMES};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub tickers: usize,
    pub days: usize,
    pub sectors: usize,
    pub industries: usize,
    pub sub_industries: usize,
    /// Sub-industries with exactly one ticker; every other one gets at
    /// least two.
    pub singletons: usize,
    pub sector_corr: f64,
    pub industry_corr: f64,
    pub sub_industry_corr: f64,
    /// Median daily close-to-close volatility.
    pub vol_median: f64,
    /// Standard deviation of log volatility across tickers.
    pub vol_dispersion: f64,
    /// Fraction of the return variance realized overnight.
    pub overnight_share: f64,
    /// Fraction of the overnight return reversed during the day.
    pub reversal: f64,
    pub dollar_volume_median: f64,
    pub dollar_volume_dispersion: f64,
    /// Probability of a 2:1 or 3:1 split per ticker and day.
    pub split_prob: f64,
    pub start_date: NaiveDate,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            tickers: 500,
            days: 300,
            sectors: 8,
            industries: 24,
            sub_industries: 80,
            singletons: 6,
            sector_corr: 0.1,
            industry_corr: 0.2,
            sub_industry_corr: 0.35,
            vol_median: 0.02,
            vol_dispersion: 0.3,
            overnight_share: 0.3,
            reversal: 0.3,
            dollar_volume_median: 5e7,
            dollar_volume_dispersion: 1.0,
            split_prob: 0.001,
            start_date: NaiveDate::from_ymd_opt(2015, 1, 2).expect("valid date"),
            seed: 1,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSpec(m));
        if self.days < 2 {
            return bad(format!("days must be at least 2, got {}", self.days));
        }
        if self.sectors == 0
            || self.industries < self.sectors
            || self.sub_industries < self.industries
        {
            return bad(format!(
                "need 1 <= sectors <= industries <= sub_industries, got {}, {}, {}",
                self.sectors, self.industries, self.sub_industries
            ));
        }
        if self.singletons > self.sub_industries {
            return bad(format!(
                "{} singletons among {} sub-industries",
                self.singletons, self.sub_industries
            ));
        }
        let min_tickers = self.singletons + 2 * (self.sub_industries - self.singletons);
        if self.tickers < min_tickers.max(2)
            || (self.singletons == self.sub_industries && self.tickers != self.singletons)
        {
            return bad(format!(
                "{} tickers cannot fill {} sub-industries with {} singletons",
                self.tickers, self.sub_industries, self.singletons
            ));
        }
        let (s, i, k) = (self.sector_corr, self.industry_corr, self.sub_industry_corr);
        if !(0.0 <= s && s <= i && i <= k && k < 1.0) {
            return bad(format!("need 0 <= sector_corr <= industry_corr <= sub_industry_corr < 1, got {s}, {i}, {k}"));
        }
        let positive = [
            ("vol_median", self.vol_median),
            ("dollar_volume_median", self.dollar_volume_median),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        let unit = [
            ("overnight_share", self.overnight_share),
            ("reversal", self.reversal),
            ("split_prob", self.split_prob),
        ];
        for (name, v) in unit {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} must lie in [0, 1], got {v}"));
            }
        }
        for (name, v) in [
            ("vol_dispersion", self.vol_dispersion),
            ("dollar_volume_dispersion", self.dollar_volume_dispersion),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be nonnegative, got {v}"));
            }
        }
        Ok(())
    }
}

/// `n` items assigned to `count` clusters, the first `count` items one per
/// cluster and the rest uniformly.
fn spread<R: Rng>(rng: &mut R, n: usize, count: usize) -> Vec<usize> {
    (0..n)
        .map(|j| {
            if j < count {
                j
            } else {
                rng.random_range(0..count)
            }
        })
        .collect()
}

fn ticker_assignment<R: Rng>(rng: &mut R, spec: &SynthSpec) -> Vec<usize> {
    let k = spec.sub_industries;
    let mut parent: Vec<usize> = (0..spec.singletons).collect();
    for a in spec.singletons..k {
        parent.extend([a, a]);
    }
    if spec.singletons < k {
        while parent.len() < spec.tickers {
            parent.push(rng.random_range(spec.singletons..k));
        }
    }
    parent.shuffle(rng);
    parent
}

fn trading_days(start: NaiveDate, count: usize) -> Vec<NaiveDate> {
    start
        .iter_days()
        .filter(|d| !matches!(d.weekday(), Weekday::Sat | Weekday::Sun))
        .take(count)
        .collect()
}

pub fn generate_synthetic_panel(spec: &SynthSpec) -> Result<(PricePanel, IndustryHierarchy)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (n, t) = (spec.tickers, spec.days);

    let sub = ticker_assignment(&mut rng, spec);
    let ind = spread(&mut rng, spec.sub_industries, spec.industries);
    let sec = spread(&mut rng, spec.industries, spec.sectors);
    let width = n.to_string().len();
    let tickers: Vec<String> = (0..n).map(|i| format!("TK{i:0width$}")).collect();
    let hierarchy = IndustryHierarchy::from_memberships(
        tickers.clone(),
        DEFAULT_LEVEL_NAMES.iter().map(|s| s.to_string()).collect(),
        vec![
            Membership::new(sub.clone(), spec.sub_industries, 0)?,
            Membership::new(ind.clone(), spec.industries, 1)?,
            Membership::new(sec.clone(), spec.sectors, 2)?,
        ],
    )?;

    let vol: Vec<f64> = (0..n)
        .map(|_| spec.vol_median * (spec.vol_dispersion * gauss(&mut rng)).exp())
        .collect();
    let addv: Vec<f64> = (0..n)
        .map(|_| {
            spec.dollar_volume_median * (spec.dollar_volume_dispersion * gauss(&mut rng)).exp()
        })
        .collect();
    let start_price: Vec<f64> = (0..n)
        .map(|_| 40.0 * (0.5 * gauss(&mut rng)).exp())
        .collect();

    let w_sec = spec.sector_corr.sqrt();
    let w_ind = (spec.industry_corr - spec.sector_corr).sqrt();
    let w_sub = (spec.sub_industry_corr - spec.industry_corr).sqrt();
    let w_idio = (1.0 - spec.sub_industry_corr).sqrt();
    let shocks = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        let s: Vec<f64> = (0..spec.sectors).map(|_| gauss(rng)).collect();
        let f: Vec<f64> = (0..spec.industries).map(|_| gauss(rng)).collect();
        let g: Vec<f64> = (0..spec.sub_industries).map(|_| gauss(rng)).collect();
        (0..n)
            .map(|i| {
                let a = sub[i];
                w_sec * s[sec[ind[a]]] + w_ind * f[ind[a]] + w_sub * g[a] + w_idio * gauss(rng)
            })
            .collect()
    };

    let mut adj_open = DMatrix::zeros(n, t);
    let mut adj_close = DMatrix::zeros(n, t);
    let mut volume = DMatrix::zeros(n, t);
    let mut split = DMatrix::from_element(n, t, 1.0);
    for i in 0..n {
        adj_close[(i, 0)] = start_price[i];
        adj_open[(i, 0)] = start_price[i];
    }
    let on_scale = spec.overnight_share.sqrt();
    let id_scale = (1.0 - spec.overnight_share).sqrt();
    let volume_noise = 0.3;
    for s in 0..t {
        if s > 0 {
            let zo = shocks(&mut rng);
            let zi = shocks(&mut rng);
            for i in 0..n {
                let overnight = vol[i] * on_scale * zo[i];
                let intraday = -spec.reversal * overnight + vol[i] * id_scale * zi[i];
                let prev = adj_close[(i, s - 1)];
                adj_open[(i, s)] = prev * overnight.exp();
                adj_close[(i, s)] = prev * (overnight + intraday).exp();
            }
        }
        for i in 0..n {
            let dollars = addv[i]
                * (volume_noise * gauss(&mut rng) - 0.5 * volume_noise * volume_noise).exp();
            volume[(i, s)] = dollars;
            if s > 0 && rng.random::<f64>() < spec.split_prob {
                split[(i, s)] = if rng.random::<bool>() { 3.0 } else { 2.0 };
            }
        }
    }

    // Unadjusted prices carry every split that happens after the day.
    let mut open = adj_open.clone();
    let mut close = adj_close.clone();
    for i in 0..n {
        let mut factor = 1.0;
        for s in (0..t).rev() {
            open[(i, s)] *= factor;
            close[(i, s)] *= factor;
            volume[(i, s)] = (volume[(i, s)] / close[(i, s)]).round();
            factor *= split[(i, s)];
        }
    }

    let prices = PricePanel::new(
        tickers,
        trading_days(spec.start_date, t),
        open,
        close,
        adj_open,
        adj_close,
        volume,
    )?;
    Ok((prices, hierarchy))
}

fn gauss<R: Rng>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}
