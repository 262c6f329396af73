pub mod backtest;
pub mod build;
pub mod optimize;
pub mod synth;
pub mod verify;

use std::collections::HashMap;
use std::path::Path;

use hetrisk::{Error, Result};

/// Create the parent directory of `path` if needed and write `contents`.
pub fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, contents)?;
    Ok(())
}

/// A CSV with a `ticker` column followed by the numeric `columns`, keyed by
/// ticker.
pub fn read_ticker_table(path: &Path, columns: &[&str]) -> Result<HashMap<String, Vec<f64>>> {
    let source = path.display().to_string();
    let err = |line: usize, message: String| Error::Parse {
        path: source.clone(),
        line,
        message,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            other => err(1, format!("{other:?}")),
        })?;
    let header = rdr.headers().map_err(|e| err(1, e.to_string()))?.clone();
    let expected: Vec<&str> = std::iter::once("ticker")
        .chain(columns.iter().copied())
        .collect();
    if header.iter().collect::<Vec<_>>() != expected {
        return Err(err(1, format!("header must be `{}`", expected.join(","))));
    }
    let mut out = HashMap::new();
    for rec in rdr.records() {
        let rec =
            rec.map_err(|e| err(e.position().map_or(0, |p| p.line() as usize), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let values = rec
            .iter()
            .skip(1)
            .map(|s| s.parse::<f64>().ok().filter(|v| v.is_finite()))
            .collect::<Option<Vec<f64>>>()
            .ok_or_else(|| err(line, "expected finite numbers".into()))?;
        if out.insert(rec[0].to_string(), values).is_some() {
            return Err(err(line, format!("duplicate ticker `{}`", &rec[0])));
        }
    }
    Ok(out)
}

/// Rows of `table` in the order of `tickers`; every ticker must be present
/// and the table may not name others.
pub fn align(
    table: HashMap<String, Vec<f64>>,
    tickers: &[String],
    path: &Path,
) -> Result<Vec<Vec<f64>>> {
    let mut table = table;
    let rows = tickers
        .iter()
        .map(|t| {
            table.remove(t).ok_or_else(|| {
                Error::InvalidConfig(format!("{}: no row for ticker `{t}`", path.display()))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if let Some(extra) = table.keys().min() {
        return Err(Error::InvalidConfig(format!(
            "{}: ticker `{extra}` is not in the model",
            path.display()
        )));
    }
    Ok(rows)
}
