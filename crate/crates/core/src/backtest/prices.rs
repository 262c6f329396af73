//! Daily price and volume panels, overnight and close-to-close returns, and
//! liquidity-based universe selection.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDate;
use nalgebra::{DMatrix, DVector};
use serde::Deserialize;

use crate::error::{Error, Result};

/// Relative tolerance on the split factor implied by open and close prices.
pub const SPLIT_FACTOR_TOL: f64 = 1e-6;

pub const PRICE_CSV_HEADER: [&str; 7] = [
    "ticker",
    "date",
    "open",
    "close",
    "adj_open",
    "adj_close",
    "volume",
];

const DATE_FORMAT: &str = "%Y-%m-%d";

/// Prices and volumes, one row per ticker and one column per trading day.
/// Days are stored oldest first.
#[derive(Debug, Clone, PartialEq)]
pub struct PricePanel {
    tickers: Vec<String>,
    dates: Vec<NaiveDate>,
    open: DMatrix<f64>,
    close: DMatrix<f64>,
    adj_open: DMatrix<f64>,
    adj_close: DMatrix<f64>,
    volume: DMatrix<f64>,
}

#[derive(Debug, Deserialize)]
struct PriceRow {
    ticker: String,
    date: String,
    open: f64,
    close: f64,
    adj_open: f64,
    adj_close: f64,
    volume: f64,
}

impl PricePanel {
    pub fn new(
        tickers: Vec<String>,
        dates: Vec<NaiveDate>,
        open: DMatrix<f64>,
        close: DMatrix<f64>,
        adj_open: DMatrix<f64>,
        adj_close: DMatrix<f64>,
        volume: DMatrix<f64>,
    ) -> Result<Self> {
        let shape = (tickers.len(), dates.len());
        for (name, m) in [
            ("open", &open),
            ("close", &close),
            ("adj_open", &adj_open),
            ("adj_close", &adj_close),
            ("volume", &volume),
        ] {
            if m.shape() != shape {
                return Err(Error::DimensionMismatch(format!(
                    "{name} is {}x{}, expected {}x{}",
                    m.nrows(),
                    m.ncols(),
                    shape.0,
                    shape.1
                )));
            }
        }
        if let Some(w) = dates.windows(2).find(|w| w[0] >= w[1]) {
            return Err(Error::InvalidPrices(format!(
                "dates not strictly increasing at {}",
                w[1]
            )));
        }
        let mut seen = std::collections::HashSet::new();
        if let Some(t) = tickers.iter().find(|t| !seen.insert(t.as_str())) {
            return Err(Error::InvalidPrices(format!("duplicate ticker `{t}`")));
        }
        let panel = Self {
            tickers,
            dates,
            open,
            close,
            adj_open,
            adj_close,
            volume,
        };
        panel.validate()?;
        Ok(panel)
    }

    fn validate(&self) -> Result<()> {
        for i in 0..self.tickers.len() {
            for s in 0..self.dates.len() {
                let at = || format!("ticker `{}` on {}", self.tickers[i], self.dates[s]);
                let (o, c, ao, ac) = (
                    self.open[(i, s)],
                    self.close[(i, s)],
                    self.adj_open[(i, s)],
                    self.adj_close[(i, s)],
                );
                if [o, c, ao, ac].iter().any(|p| !(p.is_finite() && *p > 0.0)) {
                    return Err(Error::InvalidPrices(format!(
                        "non-positive price for {}",
                        at()
                    )));
                }
                let v = self.volume[(i, s)];
                if !(v.is_finite() && v >= 0.0) {
                    return Err(Error::InvalidPrices(format!(
                        "negative volume for {}",
                        at()
                    )));
                }
                let (fo, fc) = (ao / o, ac / c);
                if (fo - fc).abs() > SPLIT_FACTOR_TOL * fo.max(fc) {
                    return Err(Error::InvalidPrices(format!(
                        "adjustment factors differ between open ({fo}) and close ({fc}) for {}",
                        at()
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::from_csv_reader(file, &path.display().to_string())
    }

    /// Parse a long-format CSV with header
    /// `ticker,date,open,close,adj_open,adj_close,volume` and ISO dates.
    /// Every ticker must have a row for every date that appears in the file.
    pub fn from_csv_reader<R: Read>(reader: R, source: &str) -> Result<Self> {
        let parse_err = |line: usize, message: String| Error::Parse {
            path: source.to_string(),
            line,
            message,
        };
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        let header = rdr
            .headers()
            .map_err(|e| parse_err(1, e.to_string()))?
            .clone();
        if header.iter().ne(PRICE_CSV_HEADER) {
            return Err(parse_err(
                1,
                format!("header must be `{}`", PRICE_CSV_HEADER.join(",")),
            ));
        }
        let mut rows = Vec::new();
        for rec in rdr.deserialize::<PriceRow>() {
            let row = rec.map_err(|e| {
                let line = e.position().map_or(0, |p| p.line() as usize);
                parse_err(line, e.to_string())
            })?;
            let line = rows.len() + 2;
            let date = NaiveDate::parse_from_str(&row.date, DATE_FORMAT)
                .map_err(|e| parse_err(line, format!("bad date `{}`: {e}", row.date)))?;
            rows.push((line, date, row));
        }
        if rows.is_empty() {
            return Err(parse_err(1, "no rows".into()));
        }
        let mut tickers: Vec<String> = Vec::new();
        let mut ticker_index = HashMap::new();
        for (_, _, row) in &rows {
            if !ticker_index.contains_key(&row.ticker) {
                ticker_index.insert(row.ticker.clone(), tickers.len());
                tickers.push(row.ticker.clone());
            }
        }
        let mut dates: Vec<NaiveDate> = rows.iter().map(|r| r.1).collect();
        dates.sort_unstable();
        dates.dedup();
        let date_index: HashMap<NaiveDate, usize> =
            dates.iter().enumerate().map(|(s, d)| (*d, s)).collect();

        let (n, t) = (tickers.len(), dates.len());
        let mut filled = vec![0usize; n * t];
        let mut m = [(); 5].map(|_| DMatrix::zeros(n, t));
        for (line, date, row) in &rows {
            let (i, s) = (ticker_index[&row.ticker], date_index[date]);
            if filled[i * t + s] != 0 {
                return Err(parse_err(
                    *line,
                    format!(
                        "duplicate row for `{}` on {date}, first on line {}",
                        row.ticker,
                        filled[i * t + s]
                    ),
                ));
            }
            filled[i * t + s] = *line;
            for (k, v) in [row.open, row.close, row.adj_open, row.adj_close, row.volume]
                .into_iter()
                .enumerate()
            {
                m[k][(i, s)] = v;
            }
        }
        if let Some(pos) = filled.iter().position(|&l| l == 0) {
            return Err(Error::MissingPrice {
                ticker: tickers[pos / t].clone(),
                date: dates[pos % t].format(DATE_FORMAT).to_string(),
            });
        }
        let [open, close, adj_open, adj_close, volume] = m;
        Self::new(tickers, dates, open, close, adj_open, adj_close, volume)
    }

    /// Write in long format, ticker by ticker, oldest date first.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(PRICE_CSV_HEADER)?;
        for (i, ticker) in self.tickers.iter().enumerate() {
            for s in 0..self.dates.len() {
                w.write_record([
                    ticker.clone(),
                    self.date_label(s),
                    self.open[(i, s)].to_string(),
                    self.close[(i, s)].to_string(),
                    self.adj_open[(i, s)].to_string(),
                    self.adj_close[(i, s)].to_string(),
                    self.volume[(i, s)].to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn tickers(&self) -> &[String] {
        &self.tickers
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn date_label(&self, day: usize) -> String {
        self.dates[day].format(DATE_FORMAT).to_string()
    }

    pub fn num_tickers(&self) -> usize {
        self.tickers.len()
    }

    pub fn num_days(&self) -> usize {
        self.dates.len()
    }

    pub fn open(&self) -> &DMatrix<f64> {
        &self.open
    }

    pub fn close(&self) -> &DMatrix<f64> {
        &self.close
    }

    pub fn adj_open(&self) -> &DMatrix<f64> {
        &self.adj_open
    }

    pub fn adj_close(&self) -> &DMatrix<f64> {
        &self.adj_close
    }

    pub fn volume(&self) -> &DMatrix<f64> {
        &self.volume
    }
}

/// Log returns computed from adjusted prices. Column `t - 1` holds the
/// return into day `t`, so both matrices have one column fewer than the
/// price panel.
#[derive(Debug, Clone, PartialEq)]
pub struct DailyReturns {
    /// `E_it = ln(AO_it / AC_i,t-1)`, previous close to open.
    pub overnight: DMatrix<f64>,
    /// `R_it = ln(AC_it / AC_i,t-1)`, close to close.
    pub close_to_close: DMatrix<f64>,
}

impl DailyReturns {
    pub fn overnight_on(&self, day: usize) -> DVector<f64> {
        self.overnight.column(day - 1).into_owned()
    }
}

pub fn compute_returns(prices: &PricePanel) -> Result<DailyReturns> {
    let (n, t) = (prices.num_tickers(), prices.num_days());
    if t < 2 {
        return Err(Error::InsufficientHistory {
            day: 0,
            needed: 2,
            available: t,
        });
    }
    let mut overnight = DMatrix::zeros(n, t - 1);
    let mut close_to_close = DMatrix::zeros(n, t - 1);
    for i in 0..n {
        for s in 1..t {
            let prev = prices.adj_close[(i, s - 1)];
            overnight[(i, s - 1)] = (prices.adj_open[(i, s)] / prev).ln();
            close_to_close[(i, s - 1)] = (prices.adj_close[(i, s)] / prev).ln();
        }
    }
    Ok(DailyReturns {
        overnight,
        close_to_close,
    })
}

/// Tickers traded over one rebalancing interval.
#[derive(Debug, Clone, PartialEq)]
pub struct Universe {
    /// Ticker indices into the price panel, in panel order.
    pub tickers: Vec<usize>,
    /// Average daily dollar volume of each selected ticker.
    pub addv: DVector<f64>,
}

/// The `size` most liquid tickers by average daily dollar volume
/// `(1/d) Σ V P^C` over the `lookback` days strictly before `day`. Ties are
/// broken by panel order.
pub fn select_universe(
    prices: &PricePanel,
    day: usize,
    lookback: usize,
    size: usize,
) -> Result<Universe> {
    if day < lookback || day > prices.num_days() {
        return Err(Error::InsufficientHistory {
            day,
            needed: lookback,
            available: day.min(prices.num_days()),
        });
    }
    let addv: Vec<f64> = (0..prices.num_tickers())
        .map(|i| {
            (day - lookback..day)
                .map(|s| prices.volume[(i, s)] * prices.close[(i, s)])
                .sum::<f64>()
                / lookback as f64
        })
        .collect();
    let mut order: Vec<usize> = (0..addv.len()).collect();
    order.sort_by(|&a, &b| addv[b].total_cmp(&addv[a]).then(a.cmp(&b)));
    order.truncate(size);
    order.sort_unstable();
    let selected = DVector::from_iterator(order.len(), order.iter().map(|&i| addv[i]));
    Ok(Universe {
        tickers: order,
        addv: selected,
    })
}
