//! Nested binary industry classifications.
//!
//! Level 0 is the most granular (sub-industries); each further level groups
//! the clusters of the level below (industries, then sectors). Every ticker
//! belongs to exactly one level-0 cluster and every cluster to exactly one
//! parent.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Cluster assignment of one level: `parent[x]` is the cluster of item `x`
/// (a ticker for level 0, a cluster of the previous level otherwise).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Membership {
    parent: Vec<usize>,
    count: usize,
}

impl Membership {
    /// Fails with `EmptyCluster` (reported at `level`) unless every cluster
    /// in `0..count` has at least one member.
    pub fn new(parent: Vec<usize>, count: usize, level: usize) -> Result<Self> {
        let mut sizes = vec![0usize; count];
        for &p in &parent {
            if p >= count {
                return Err(Error::InvalidHierarchy(format!(
                    "cluster index {p} out of range at level {level} ({count} clusters)"
                )));
            }
            sizes[p] += 1;
        }
        if let Some(cluster) = sizes.iter().position(|&s| s == 0) {
            return Err(Error::EmptyCluster { level, cluster });
        }
        Ok(Self { parent, count })
    }

    pub fn parent(&self) -> &[usize] {
        &self.parent
    }

    pub fn num_items(&self) -> usize {
        self.parent.len()
    }

    pub fn num_clusters(&self) -> usize {
        self.count
    }

    /// Members of each cluster, in item order.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.count];
        for (x, &p) in self.parent.iter().enumerate() {
            out[p].push(x);
        }
        out
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.count];
        for &p in &self.parent {
            sizes[p] += 1;
        }
        sizes
    }

    /// Binary items x clusters matrix.
    pub fn matrix(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.parent.len(), self.count);
        for (x, &p) in self.parent.iter().enumerate() {
            m[(x, p)] = 1.0;
        }
        m
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndustryHierarchy {
    tickers: Vec<String>,
    level_names: Vec<String>,
    cluster_names: Vec<Vec<String>>,
    levels: Vec<Membership>,
}

pub const DEFAULT_LEVEL_NAMES: [&str; 3] = ["sub_industry", "industry", "sector"];

impl IndustryHierarchy {
    /// Hierarchy from per-level memberships. `levels[0]` maps tickers to
    /// level-0 clusters, `levels[l]` maps level-(l-1) clusters to level-l
    /// clusters. Cluster names are generated as `<level name><index>`.
    pub fn from_memberships(
        tickers: Vec<String>,
        level_names: Vec<String>,
        levels: Vec<Membership>,
    ) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::InvalidHierarchy(
                "at least one level is required".into(),
            ));
        }
        if level_names.len() != levels.len() {
            return Err(Error::InvalidHierarchy(format!(
                "{} level names for {} levels",
                level_names.len(),
                levels.len()
            )));
        }
        let mut expected = tickers.len();
        for (l, m) in levels.iter().enumerate() {
            if m.num_items() != expected {
                return Err(Error::InvalidHierarchy(format!(
                    "level {l} assigns {} items, expected {expected}",
                    m.num_items()
                )));
            }
            expected = m.num_clusters();
        }
        check_unique(&tickers)?;
        let cluster_names = levels
            .iter()
            .zip(&level_names)
            .map(|(m, name)| {
                (0..m.num_clusters())
                    .map(|c| format!("{name}{c}"))
                    .collect()
            })
            .collect();
        Ok(Self {
            tickers,
            level_names,
            cluster_names,
            levels,
        })
    }

    /// Hierarchy from per-ticker labels: `labels[i][l]` is the name of
    /// ticker i's cluster at level l. Clusters are numbered in order of first
    /// appearance. Fails unless every cluster has a single parent.
    pub fn from_labels(
        tickers: Vec<String>,
        level_names: Vec<String>,
        labels: &[Vec<String>],
    ) -> Result<Self> {
        let depth = level_names.len();
        if labels.len() != tickers.len() {
            return Err(Error::InvalidHierarchy(format!(
                "{} label rows for {} tickers",
                labels.len(),
                tickers.len()
            )));
        }
        let rows = labels.iter().map(|r| r.as_slice()).collect::<Vec<_>>();
        let (cluster_names, levels) = nest(&rows, depth, |i, msg| {
            Error::InvalidHierarchy(format!("ticker `{}`: {msg}", tickers[i]))
        })?;
        let mut h = Self::from_memberships(tickers, level_names, levels)?;
        h.cluster_names = cluster_names;
        Ok(h)
    }

    pub fn tickers(&self) -> &[String] {
        &self.tickers
    }

    pub fn num_tickers(&self) -> usize {
        self.tickers.len()
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn level(&self, l: usize) -> &Membership {
        &self.levels[l]
    }

    pub fn levels(&self) -> &[Membership] {
        &self.levels
    }

    pub fn level_names(&self) -> &[String] {
        &self.level_names
    }

    pub fn cluster_names(&self, l: usize) -> &[String] {
        &self.cluster_names[l]
    }

    /// Cluster of each ticker at level `l`.
    pub fn ticker_clusters(&self, l: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self.levels[0].parent().to_vec();
        for m in &self.levels[1..=l] {
            for c in out.iter_mut() {
                *c = m.parent()[*c];
            }
        }
        out
    }

    /// Binary N x (count at level l) ticker membership matrix.
    pub fn ticker_membership(&self, l: usize) -> DMatrix<f64> {
        let clusters = self.ticker_clusters(l);
        let mut m = DMatrix::zeros(self.tickers.len(), self.levels[l].num_clusters());
        for (i, &c) in clusters.iter().enumerate() {
            m[(i, c)] = 1.0;
        }
        m
    }

    /// Indices of tickers that are alone in their level-0 cluster.
    pub fn singleton_tickers(&self) -> Vec<usize> {
        let sizes = self.levels[0].sizes();
        (0..self.tickers.len())
            .filter(|&i| sizes[self.levels[0].parent()[i]] == 1)
            .collect()
    }

    /// Hierarchy over `tickers` (in that order). Clusters left without
    /// members are removed at every level; the survivors keep their relative
    /// order.
    pub fn restrict(&self, tickers: &[String]) -> Result<Self> {
        let index: HashMap<&str, usize> = self
            .tickers
            .iter()
            .enumerate()
            .map(|(i, t)| (t.as_str(), i))
            .collect();
        let mut rows = Vec::with_capacity(tickers.len());
        for t in tickers {
            let i = index.get(t.as_str()).ok_or_else(|| {
                Error::HierarchyMismatch(format!("ticker `{t}` has no classification"))
            })?;
            rows.push(*i);
        }
        check_unique(tickers)?;

        let mut items: Vec<usize> = rows;
        let mut levels = Vec::with_capacity(self.levels.len());
        let mut cluster_names = Vec::with_capacity(self.levels.len());
        for (l, m) in self.levels.iter().enumerate() {
            let mut remap = vec![usize::MAX; m.num_clusters()];
            let mut kept = Vec::new();
            let mut parent = Vec::with_capacity(items.len());
            for &x in &items {
                let c = m.parent()[x];
                if remap[c] == usize::MAX {
                    remap[c] = 0;
                    kept.push(c);
                }
                parent.push(c);
            }
            kept.sort_unstable();
            for (new, &old) in kept.iter().enumerate() {
                remap[old] = new;
            }
            let parent = parent.into_iter().map(|c| remap[c]).collect();
            levels.push(Membership::new(parent, kept.len(), l)?);
            cluster_names.push(
                kept.iter()
                    .map(|&c| self.cluster_names[l][c].clone())
                    .collect(),
            );
            items = kept;
        }
        Ok(Self {
            tickers: tickers.to_vec(),
            level_names: self.level_names.clone(),
            cluster_names,
            levels,
        })
    }

    /// Parse a classification CSV: a header `ticker,<level0>,<level1>,...`
    /// followed by one row per ticker.
    pub fn read_csv(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::from_csv_reader(file, &path.display().to_string())
    }

    pub fn from_csv_reader<R: Read>(reader: R, source: &str) -> Result<Self> {
        let parse_err = |line: usize, message: String| Error::Parse {
            path: source.to_string(),
            line,
            message,
        };
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let header = rdr
            .headers()
            .map_err(|e| parse_err(1, e.to_string()))?
            .clone();
        if header.len() < 2 || &header[0] != "ticker" {
            return Err(parse_err(
                1,
                "header must be `ticker` followed by one column per level".into(),
            ));
        }
        let level_names: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
        let mut tickers = Vec::new();
        let mut labels = Vec::new();
        let mut lines = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| {
                let line = e.position().map_or(0, |p| p.line() as usize);
                parse_err(line, e.to_string())
            })?;
            let line = rec.position().map_or(0, |p| p.line() as usize);
            if rec.len() != header.len() {
                return Err(parse_err(
                    line,
                    format!("expected {} fields, found {}", header.len(), rec.len()),
                ));
            }
            if rec.iter().any(str::is_empty) {
                return Err(parse_err(line, "empty field".into()));
            }
            tickers.push(rec[0].to_string());
            labels.push(rec.iter().skip(1).map(str::to_string).collect::<Vec<_>>());
            lines.push(line);
        }
        if tickers.is_empty() {
            return Err(parse_err(1, "no rows".into()));
        }
        let mut seen = HashMap::new();
        for (i, t) in tickers.iter().enumerate() {
            if let Some(first) = seen.insert(t.as_str(), lines[i]) {
                return Err(parse_err(
                    lines[i],
                    format!("ticker `{t}` already listed on line {first}"),
                ));
            }
        }
        let rows = labels.iter().map(|r| r.as_slice()).collect::<Vec<_>>();
        let (cluster_names, levels) =
            nest(&rows, level_names.len(), |i, msg| parse_err(lines[i], msg))?;
        let mut h = Self::from_memberships(tickers, level_names, levels)?;
        h.cluster_names = cluster_names;
        Ok(h)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["ticker".to_string()];
        header.extend(self.level_names.iter().cloned());
        w.write_record(&header)?;
        let clusters: Vec<Vec<usize>> = (0..self.num_levels())
            .map(|l| self.ticker_clusters(l))
            .collect();
        for (i, t) in self.tickers.iter().enumerate() {
            let mut row = vec![t.clone()];
            for (l, c) in clusters.iter().enumerate() {
                row.push(self.cluster_names[l][c[i]].clone());
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn check_unique(tickers: &[String]) -> Result<()> {
    let mut seen = std::collections::HashSet::new();
    for t in tickers {
        if !seen.insert(t.as_str()) {
            return Err(Error::InvalidHierarchy(format!("duplicate ticker `{t}`")));
        }
    }
    Ok(())
}

type Nested = (Vec<Vec<String>>, Vec<Membership>);

/// Number clusters by first appearance and check that each cluster has one
/// parent. `err(row, message)` builds the error for an offending row.
fn nest(rows: &[&[String]], depth: usize, err: impl Fn(usize, String) -> Error) -> Result<Nested> {
    let mut ids: Vec<HashMap<&str, usize>> = vec![HashMap::new(); depth];
    let mut names: Vec<Vec<String>> = vec![Vec::new(); depth];
    let mut assign: Vec<Vec<usize>> = Vec::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        if row.len() != depth {
            return Err(err(
                i,
                format!("expected {depth} levels, found {}", row.len()),
            ));
        }
        let mut a = Vec::with_capacity(depth);
        for l in 0..depth {
            let next = ids[l].len();
            let id = *ids[l].entry(row[l].as_str()).or_insert_with(|| {
                names[l].push(row[l].clone());
                next
            });
            a.push(id);
        }
        assign.push(a);
    }
    let mut levels = Vec::with_capacity(depth);
    levels.push(Membership::new(
        assign.iter().map(|a| a[0]).collect(),
        names[0].len(),
        0,
    )?);
    for l in 1..depth {
        let mut parent = vec![usize::MAX; names[l - 1].len()];
        for (i, a) in assign.iter().enumerate() {
            let child = a[l - 1];
            if parent[child] == usize::MAX {
                parent[child] = a[l];
            } else if parent[child] != a[l] {
                return Err(err(
                    i,
                    format!(
                        "cluster `{}` is placed under both `{}` and `{}`",
                        names[l - 1][child],
                        names[l][parent[child]],
                        names[l][a[l]]
                    ),
                ));
            }
        }
        levels.push(Membership::new(parent, names[l].len(), l)?);
    }
    Ok((names, levels))
}

#[cfg(test)]
mod tests {
    use super::*;

    const CSV: &str = "ticker,sub_industry,industry,sector\n\
        AAA,banks,finance,fin\n\
        BBB,banks,finance,fin\n\
        CCC,insurers,finance,fin\n\
        DDD,chips,semis,tech\n\
        EEE,chips,semis,tech\n";

    #[test]
    fn parses_nested_levels() {
        let h = IndustryHierarchy::from_csv_reader(CSV.as_bytes(), "h.csv").unwrap();
        assert_eq!(h.num_levels(), 3);
        assert_eq!(h.level(0).num_clusters(), 3);
        assert_eq!(h.level(1).num_clusters(), 2);
        assert_eq!(h.level(2).num_clusters(), 2);
        assert_eq!(h.ticker_clusters(2), vec![0, 0, 0, 1, 1]);
        assert_eq!(h.singleton_tickers(), vec![2]);
        let mut out = Vec::new();
        h.write_csv(&mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), CSV);
    }

    #[test]
    fn rejects_broken_nesting_naming_the_row() {
        let bad = "ticker,sub_industry,industry,sector\nA,x,i1,s1\nB,x,i2,s1\n";
        match IndustryHierarchy::from_csv_reader(bad.as_bytes(), "h.csv") {
            Err(Error::Parse { line, message, .. }) => {
                assert_eq!(line, 3);
                assert!(message.contains("`x`"), "{message}");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_short_rows_and_missing_header() {
        let short = "ticker,sub_industry,industry,sector\nA,x,i1\n";
        assert!(matches!(
            IndustryHierarchy::from_csv_reader(short.as_bytes(), "h.csv"),
            Err(Error::Parse { line: 2, .. })
        ));
        let headless = "A,x,i1,s1\n";
        assert!(matches!(
            IndustryHierarchy::from_csv_reader(headless.as_bytes(), "h.csv"),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn restrict_drops_empty_clusters() {
        let h = IndustryHierarchy::from_csv_reader(CSV.as_bytes(), "h.csv").unwrap();
        let r = h
            .restrict(&["EEE".to_string(), "AAA".to_string(), "DDD".to_string()])
            .unwrap();
        assert_eq!(r.level(0).num_clusters(), 2);
        assert_eq!(
            r.cluster_names(0),
            &["banks".to_string(), "chips".to_string()]
        );
        assert_eq!(r.ticker_clusters(0), vec![1, 0, 1]);
        assert_eq!(r.ticker_clusters(2), vec![1, 0, 1]);
        assert!(matches!(
            h.restrict(&["ZZZ".to_string()]),
            Err(Error::HierarchyMismatch(_))
        ));
    }

    #[test]
    fn empty_cluster_is_rejected() {
        assert!(matches!(
            Membership::new(vec![0, 0, 2], 3, 1),
            Err(Error::EmptyCluster {
                level: 1,
                cluster: 1
            })
        ));
    }
}
