//! `key = value` run configuration files.
//!
//! One setting per line. `#` starts a comment that runs to the end of the
//! line and blank lines are ignored. A key may appear only once, and every
//! key in a file must be consumed by the command reading it, so a misspelled
//! key is reported instead of silently ignored. Relative paths are resolved
//! against the directory of the file.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use hetrisk::{Error, Result};

#[derive(Debug)]
struct Entry {
    value: String,
    line: usize,
}

#[derive(Debug)]
pub struct KvFile {
    source: String,
    base: PathBuf,
    entries: BTreeMap<String, Entry>,
}

impl KvFile {
    pub fn empty() -> Self {
        Self {
            source: String::new(),
            base: PathBuf::new(),
            entries: BTreeMap::new(),
        }
    }

    /// Read `path`, or return an empty file when `path` is `None`.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::empty()),
            Some(p) => {
                let text = std::fs::read_to_string(p)?;
                let base = p.parent().map(Path::to_path_buf).unwrap_or_default();
                Self::parse(&text, &p.display().to_string(), base)
            }
        }
    }

    pub fn parse(text: &str, source: &str, base: PathBuf) -> Result<Self> {
        let err = |line: usize, message: String| Error::Parse {
            path: source.to_string(),
            line,
            message,
        };
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| err(line, format!("expected `key = value`, found `{content}`")))?;
            let (key, value) = (key.trim(), value.trim());
            if key.is_empty()
                || !key
                    .chars()
                    .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
            {
                return Err(err(line, format!("invalid key `{key}`")));
            }
            if value.is_empty() {
                return Err(err(line, format!("missing value for `{key}`")));
            }
            if let Some(prev) = entries.insert(
                key.to_string(),
                Entry {
                    value: value.to_string(),
                    line,
                },
            ) {
                return Err(err(
                    line,
                    format!("`{key}` already set on line {}", prev.line),
                ));
            }
        }
        Ok(Self {
            source: source.to_string(),
            base,
            entries,
        })
    }

    /// Remove `key` and parse it with `parse`.
    pub fn take_with<T>(
        &mut self,
        key: &str,
        parse: impl Fn(&str) -> std::result::Result<T, String>,
    ) -> Result<Option<T>> {
        match self.entries.remove(key) {
            None => Ok(None),
            Some(e) => parse(&e.value).map(Some).map_err(|m| Error::Parse {
                path: self.source.clone(),
                line: e.line,
                message: format!("invalid value `{}` for `{key}`: {m}", e.value),
            }),
        }
    }

    pub fn take<T>(&mut self, key: &str) -> Result<Option<T>>
    where
        T: FromStr,
        T::Err: Display,
    {
        self.take_with(key, |s| s.parse::<T>().map_err(|e| e.to_string()))
    }

    pub fn take_path(&mut self, key: &str) -> Result<Option<PathBuf>> {
        let base = self.base.clone();
        self.take_with(key, |s| Ok(base.join(s)))
    }

    /// Fail on the first key (by line) that no one asked for.
    pub fn finish(self) -> Result<()> {
        match self.entries.iter().min_by_key(|(_, e)| e.line) {
            None => Ok(()),
            Some((key, e)) => Err(Error::Parse {
                path: self.source,
                line: e.line,
                message: format!("unknown key `{key}`"),
            }),
        }
    }
}

/// `none` or a fraction in `(0, 1]`.
pub fn parse_bounds(s: &str) -> std::result::Result<Option<f64>, String> {
    if s.eq_ignore_ascii_case("none") {
        return Ok(None);
    }
    let f: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if !(f > 0.0 && f <= 1.0) {
        return Err(format!("bound fraction must lie in (0, 1], got {f}"));
    }
    Ok(Some(f))
}

/// Required setting that may come from a flag or the config file.
pub fn require<T>(value: Option<T>, key: &str) -> Result<T> {
    value.ok_or_else(|| {
        Error::InvalidConfig(format!(
            "`{key}` must be given as --{} or in the config file",
            key.replace('_', "-")
        ))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<KvFile> {
        KvFile::parse(text, "run.conf", PathBuf::from("/data"))
    }

    #[test]
    fn values_comments_and_paths() {
        let mut f =
            parse("# header\nlookback = 21\n\nprices = p.csv  # relative\nbounds=none\n").unwrap();
        assert_eq!(f.take::<usize>("lookback").unwrap(), Some(21));
        assert_eq!(f.take::<usize>("universe_size").unwrap(), None);
        assert_eq!(
            f.take_path("prices").unwrap(),
            Some(PathBuf::from("/data/p.csv"))
        );
        assert_eq!(f.take_with("bounds", parse_bounds).unwrap(), Some(None));
        f.finish().unwrap();
    }

    #[test]
    fn unknown_key_names_its_line() {
        let mut f = parse("lookback = 5\nlokback = 6\n").unwrap();
        f.take::<usize>("lookback").unwrap();
        let e = f.finish().unwrap_err().to_string();
        assert_eq!(e, "run.conf:2: unknown key `lokback`");
    }

    #[test]
    fn malformed_lines() {
        assert!(parse("lookback 5")
            .unwrap_err()
            .to_string()
            .starts_with("run.conf:1:"));
        assert!(parse("a = 1\na = 2")
            .unwrap_err()
            .to_string()
            .contains("already set on line 1"));
        assert!(parse("Lookback = 1").is_err());
        assert!(parse("lookback =").is_err());
        let mut f = parse("\nlookback = x").unwrap();
        assert!(f
            .take::<usize>("lookback")
            .unwrap_err()
            .to_string()
            .starts_with("run.conf:2: invalid value `x`"));
    }

    #[test]
    fn bounds_values() {
        assert_eq!(parse_bounds("0.01"), Ok(Some(0.01)));
        assert_eq!(parse_bounds("None"), Ok(None));
        assert!(parse_bounds("0").is_err());
        assert!(parse_bounds("1.5").is_err());
    }
}
