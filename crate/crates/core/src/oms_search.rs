//! Blocked Hamming search with per-query running maxima for standard
//! (ppm window) and open (Dalton window) precursor tolerances.
//!
//! Queries are sorted by `(charge, precursor m/z)` and batched in groups of
//! `q_block`. Each group loads only the blocks overlapping the union of its
//! members' open windows, scores the full group-by-block matrix, and then
//! re-checks each query's own windows before updating its maxima.

use std::collections::BTreeMap;
use std::fmt;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::hd_encoder::{hamming_words, Hypervector};
use crate::library_index::{Block, BlockCache, BlockKey};

#[derive(Clone, Debug, PartialEq)]
pub struct SearchConfig {
    pub tol_ppm: f64,
    pub open_tol_da: f64,
    pub q_block: usize,
    pub max_q: usize,
    pub count_comparisons: bool,
    pub workers: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            tol_ppm: 20.0,
            open_tol_da: 75.0,
            q_block: 16,
            max_q: 2048,
            count_comparisons: true,
            workers: std::thread::available_parallelism().map_or(1, |n| n.get()),
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol_ppm > 0.0 && self.tol_ppm.is_finite()) {
            return Err(Error::Config("tol_ppm must be positive".into()));
        }
        if !(self.open_tol_da > 0.0 && self.open_tol_da.is_finite()) {
            return Err(Error::Config("open_tol_da must be positive".into()));
        }
        if self.q_block == 0 {
            return Err(Error::Config("q_block must be at least 1".into()));
        }
        if self.max_q < self.q_block {
            return Err(Error::Config("max_q must be at least q_block".into()));
        }
        if self.workers == 0 {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SearchMode {
    Standard,
    Open,
}

impl fmt::Display for SearchMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SearchMode::Standard => "standard",
            SearchMode::Open => "open",
        })
    }
}

/// Best match of one query in one mode.
#[derive(Clone, Debug, PartialEq)]
pub struct Psm {
    pub query_id: u32,
    pub query_title: String,
    pub ref_id: u32,
    pub ref_title: String,
    pub mode: SearchMode,
    pub score: u32,
    /// Query precursor m/z minus reference precursor m/z.
    pub mass_diff: f64,
    pub is_decoy: bool,
}

/// An encoded query with the metadata the search needs.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedQuery {
    pub id: u32,
    pub title: String,
    pub precursor_mz: f64,
    pub charge: u8,
    pub hv: Hypervector,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct SearchStats {
    pub queries: u64,
    pub groups: u64,
    pub comparisons: u64,
    pub blocks_scored: u64,
    pub cache_hits: u64,
    pub cache_misses: u64,
    /// Wall time per phase, in seconds.
    pub phase_seconds: BTreeMap<String, f64>,
}

impl SearchStats {
    pub fn to_kv_text(&self) -> String {
        let mut s = format!(
            "queries={}\ngroups={}\ncomparisons={}\nblocks_scored={}\ncache_hits={}\ncache_misses={}\n",
            self.queries,
            self.groups,
            self.comparisons,
            self.blocks_scored,
            self.cache_hits,
            self.cache_misses
        );
        for (phase, secs) in &self.phase_seconds {
            s.push_str(&format!("time_{phase}_s={secs:.6}\n"));
        }
        s
    }
}

#[derive(Clone, Debug, Default)]
pub struct SearchOutput {
    pub standard: Vec<Psm>,
    pub open: Vec<Psm>,
    pub stats: SearchStats,
}

/// Relative difference against the reference precursor, in ppm, inclusive.
pub fn in_standard_window(q_pmz: f64, r_pmz: f64, tol_ppm: f64) -> bool {
    (q_pmz - r_pmz).abs() / r_pmz * 1e6 <= tol_ppm
}

pub fn in_open_window(q_pmz: f64, r_pmz: f64, open_tol_da: f64) -> bool {
    (q_pmz - r_pmz).abs() <= open_tol_da
}

/// Row-major `queries.len() x block.len()` similarity matrix (`Dhv - hamming`).
pub fn score_group(queries: &[&Hypervector], block: &Block) -> Vec<u32> {
    let dim = block.dim() as u32;
    let mut out = Vec::with_capacity(queries.len() * block.len());
    for q in queries {
        debug_assert_eq!(q.dim(), block.dim());
        let qw = q.words();
        out.extend((0..block.len()).map(|j| dim - hamming_words(qw, block.hv_words(j))));
    }
    out
}

#[derive(Clone)]
struct Best {
    score: u32,
    ref_id: u32,
    block: usize,
    row: usize,
    /// `(title, pmz, is_decoy)`, filled in before the block is released.
    meta: Option<(String, f64, bool)>,
}

impl Best {
    fn offer(slot: &mut Option<Best>, score: u32, ref_id: u32, block: usize, row: usize) {
        let better = match slot {
            None => true,
            Some(b) => score > b.score || (score == b.score && ref_id < b.ref_id),
        };
        if better {
            *slot = Some(Best {
                score,
                ref_id,
                block,
                row,
                meta: None,
            });
        }
    }
}

struct GroupResult {
    psms: Vec<Psm>,
    comparisons: u64,
    blocks_scored: u64,
}

fn search_group(
    group: &[&EncodedQuery],
    cache: &BlockCache<'_>,
    cfg: &SearchConfig,
) -> Result<GroupResult> {
    let charge = group[0].charge;
    let lo = group
        .iter()
        .map(|q| q.precursor_mz)
        .fold(f64::INFINITY, f64::min);
    let hi = group
        .iter()
        .map(|q| q.precursor_mz)
        .fold(f64::NEG_INFINITY, f64::max);
    let keys: Vec<BlockKey> =
        cache
            .source()
            .manifest()
            .select_blocks(charge, lo - cfg.open_tol_da, hi + cfg.open_tol_da);

    let hvs: Vec<&Hypervector> = group.iter().map(|q| &q.hv).collect();
    let mut standard: Vec<Option<Best>> = vec![None; group.len()];
    let mut open: Vec<Option<Best>> = vec![None; group.len()];
    let mut comparisons = 0u64;
    for (b, &key) in keys.iter().enumerate() {
        let block = cache.get_block(key)?;
        let scores = score_group(&hvs, &block);
        comparisons += (group.len() * block.len()) as u64;
        for (i, q) in group.iter().enumerate() {
            let row = &scores[i * block.len()..(i + 1) * block.len()];
            for (j, &score) in row.iter().enumerate() {
                let r_pmz = block.pmz[j];
                if !in_open_window(q.precursor_mz, r_pmz, cfg.open_tol_da) {
                    continue;
                }
                let ref_id = block.ref_ids[j];
                Best::offer(&mut open[i], score, ref_id, b, j);
                if in_standard_window(q.precursor_mz, r_pmz, cfg.tol_ppm) {
                    Best::offer(&mut standard[i], score, ref_id, b, j);
                }
            }
        }
        for best in standard.iter_mut().chain(open.iter_mut()).flatten() {
            if best.block == b && best.meta.is_none() {
                let j = best.row;
                best.meta = Some((block.titles[j].clone(), block.pmz[j], block.decoys[j]));
            }
        }
    }

    let mut psms = Vec::new();
    for (i, q) in group.iter().enumerate() {
        for (mode, best) in [
            (SearchMode::Standard, &mut standard[i]),
            (SearchMode::Open, &mut open[i]),
        ] {
            if let Some(best) = best.take() {
                let (ref_title, r_pmz, is_decoy) =
                    best.meta.expect("winner resolved with its block");
                psms.push(Psm {
                    query_id: q.id,
                    query_title: q.title.clone(),
                    ref_id: best.ref_id,
                    ref_title,
                    mode,
                    score: best.score,
                    mass_diff: q.precursor_mz - r_pmz,
                    is_decoy,
                });
            }
        }
    }
    Ok(GroupResult {
        psms,
        comparisons,
        blocks_scored: keys.len() as u64,
    })
}

/// Partitions a sorted run of queries into same-charge groups of at most `q_block`.
fn make_groups<'q>(sorted: &[&'q EncodedQuery], q_block: usize) -> Vec<Vec<&'q EncodedQuery>> {
    sorted
        .chunk_by(|a, b| a.charge == b.charge)
        .flat_map(|run| run.chunks(q_block).map(<[_]>::to_vec))
        .collect()
}

pub fn search_all(
    queries: &[EncodedQuery],
    cache: &BlockCache<'_>,
    cfg: &SearchConfig,
) -> Result<SearchOutput> {
    cfg.validate()?;
    let dim = cache.source().manifest().dim;
    if let Some(q) = queries.iter().find(|q| q.hv.dim() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: q.hv.dim(),
        });
    }

    let mut stats = SearchStats {
        queries: queries.len() as u64,
        ..Default::default()
    };
    let counters_before = cache.counters();

    let t = Instant::now();
    let mut sorted: Vec<&EncodedQuery> = queries.iter().collect();
    sorted.sort_by(|a, b| {
        a.charge
            .cmp(&b.charge)
            .then(a.precursor_mz.total_cmp(&b.precursor_mz))
            .then(a.id.cmp(&b.id))
    });
    stats
        .phase_seconds
        .insert("sort".into(), t.elapsed().as_secs_f64());

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;

    let t = Instant::now();
    let mut psms = Vec::new();
    for segment in sorted.chunks(cfg.max_q) {
        let groups = make_groups(segment, cfg.q_block);
        stats.groups += groups.len() as u64;
        let results: Vec<GroupResult> = pool.install(|| {
            groups
                .par_iter()
                .map(|g| search_group(g, cache, cfg))
                .collect::<Result<_>>()
        })?;
        for r in results {
            if cfg.count_comparisons {
                stats.comparisons += r.comparisons;
            }
            stats.blocks_scored += r.blocks_scored;
            psms.extend(r.psms);
        }
    }
    stats
        .phase_seconds
        .insert("score".into(), t.elapsed().as_secs_f64());

    let t = Instant::now();
    psms.sort_by_key(|p| (p.query_id, p.mode));
    let (standard, open) = psms
        .into_iter()
        .partition(|p| p.mode == SearchMode::Standard);
    stats
        .phase_seconds
        .insert("merge".into(), t.elapsed().as_secs_f64());

    let counters = cache.counters();
    stats.cache_hits = counters.hits - counters_before.hits;
    stats.cache_misses = counters.misses - counters_before.misses;
    Ok(SearchOutput {
        standard,
        open,
        stats,
    })
}
