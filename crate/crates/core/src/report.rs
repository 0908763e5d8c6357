//! Tabulates search runs (stats files plus accepted PSMs) as CSV.

use std::collections::{BTreeMap, HashMap};
use std::io::{self, Write};

use crate::error::{Error, Result};
use crate::oms_search::{Psm, SearchMode};

/// Parses `key=value` lines; blank lines and `#` comments are skipped.
pub fn parse_stats(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::parse(i + 1, "expected key=value"))?;
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct RunRecord {
    pub stats: BTreeMap<String, String>,
    /// Accepted PSMs of the run.
    pub psms: Vec<Psm>,
}

impl RunRecord {
    fn num(&self, key: &str) -> Result<f64> {
        let v = self
            .stats
            .get(key)
            .ok_or_else(|| Error::Format(format!("stats file lacks `{key}`")))?;
        v.parse()
            .map_err(|_| Error::Format(format!("stats value `{key}={v}` is not a number")))
    }

    fn text(&self, key: &str) -> String {
        self.stats.get(key).cloned().unwrap_or_else(|| "NA".into())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub open_tol_da: f64,
    pub tol_ppm: f64,
    pub queries: String,
    pub comparisons: String,
    pub blocks_scored: String,
    pub standard_ids: usize,
    pub open_ids: usize,
    pub overlap: usize,
    pub union: usize,
    pub standard_cutoff: String,
    pub open_cutoff: String,
    pub standard_precision: Option<f64>,
    pub open_precision: Option<f64>,
}

pub const CSV_HEADER: &str = "open_tol_da,tol_ppm,queries,comparisons,blocks_scored,standard_ids,open_ids,overlap,union,standard_cutoff,open_cutoff,standard_precision,open_precision";

/// Fraction of accepted PSMs of `mode` whose reference is the known source
/// of the query. PSMs for queries without a truth entry are not counted.
pub fn precision(psms: &[Psm], mode: SearchMode, truth: &HashMap<String, String>) -> Option<f64> {
    let (mut judged, mut correct) = (0usize, 0usize);
    for p in psms.iter().filter(|p| p.mode == mode) {
        if let Some(expected) = truth.get(&p.query_title) {
            judged += 1;
            correct += usize::from(*expected == p.ref_title);
        }
    }
    (judged > 0).then(|| correct as f64 / judged as f64)
}

/// One row per run, sorted by open tolerance then standard tolerance.
/// Identification counts are recomputed from the PSMs.
pub fn report_rows(
    runs: &[RunRecord],
    truth: Option<&[(String, String)]>,
) -> Result<Vec<ReportRow>> {
    let truth: Option<HashMap<String, String>> = truth.map(|t| t.iter().cloned().collect());
    let mut rows = Vec::with_capacity(runs.len());
    for run in runs {
        let ids = |mode| {
            run.psms
                .iter()
                .filter(|p| p.mode == mode)
                .map(|p| p.query_id)
                .collect::<std::collections::BTreeSet<_>>()
        };
        let (s, o) = (ids(SearchMode::Standard), ids(SearchMode::Open));
        rows.push(ReportRow {
            open_tol_da: run.num("open_tol_da")?,
            tol_ppm: run.num("tol_ppm")?,
            queries: run.text("queries"),
            comparisons: run.text("comparisons"),
            blocks_scored: run.text("blocks_scored"),
            standard_ids: s.len(),
            open_ids: o.len(),
            overlap: s.intersection(&o).count(),
            union: s.union(&o).count(),
            standard_cutoff: run.text("standard_cutoff"),
            open_cutoff: run.text("open_cutoff"),
            standard_precision: truth
                .as_ref()
                .and_then(|t| precision(&run.psms, SearchMode::Standard, t)),
            open_precision: truth
                .as_ref()
                .and_then(|t| precision(&run.psms, SearchMode::Open, t)),
        });
    }
    rows.sort_by(|a, b| {
        a.open_tol_da
            .total_cmp(&b.open_tol_da)
            .then(a.tol_ppm.total_cmp(&b.tol_ppm))
    });
    Ok(rows)
}

pub fn write_csv<W: Write>(rows: &[ReportRow], mut w: W) -> io::Result<()> {
    let prec = |p: Option<f64>| p.map_or_else(|| "NA".to_string(), |v| format!("{v:.6}"));
    writeln!(w, "{CSV_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.open_tol_da,
            r.tol_ppm,
            r.queries,
            r.comparisons,
            r.blocks_scored,
            r.standard_ids,
            r.open_ids,
            r.overlap,
            r.union,
            r.standard_cutoff,
            r.open_cutoff,
            prec(r.standard_precision),
            prec(r.open_precision),
        )?;
    }
    w.flush()
}
