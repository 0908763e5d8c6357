//! End-to-end glue: spectra to index, queries to filtered PSMs.

use rayon::prelude::*;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::fdr_filter::{fdr_summary, filter_fdr, FdrResult, FdrSummary};
use crate::hd_encoder::{encode_spectrum, ItemMemory};
use crate::library_index::{BlockCache, BlockSource, LibraryIndex, RefRecord};
use crate::oms_search::{search_all, EncodedQuery, SearchStats};
use crate::preprocess::{preprocess, PreprocessConfig};
use crate::spectra_io::Spectrum;

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))
}

pub fn encode_library(
    spectra: &[Spectrum],
    pcfg: &PreprocessConfig,
    im: &ItemMemory,
    workers: usize,
) -> Result<Vec<RefRecord>> {
    pool(workers)?.install(|| {
        spectra
            .par_iter()
            .map(|s| {
                let hv = encode_spectrum(&preprocess(s, pcfg), im)?;
                Ok(RefRecord {
                    ref_id: s.id,
                    title: s.title.clone(),
                    precursor_mz: s.precursor_mz,
                    charge: s.charge,
                    is_decoy: s.is_decoy,
                    hv,
                })
            })
            .collect()
    })
}

pub fn encode_queries(
    spectra: &[Spectrum],
    pcfg: &PreprocessConfig,
    im: &ItemMemory,
    workers: usize,
) -> Result<Vec<EncodedQuery>> {
    pool(workers)?.install(|| {
        spectra
            .par_iter()
            .map(|s| {
                let hv = encode_spectrum(&preprocess(s, pcfg), im)?;
                Ok(EncodedQuery {
                    id: s.id,
                    title: s.title.clone(),
                    precursor_mz: s.precursor_mz,
                    charge: s.charge,
                    hv,
                })
            })
            .collect()
    })
}

/// Generates the item memory from `cfg`, encodes `spectra` and builds the index.
pub fn build_library_index(spectra: &[Spectrum], cfg: &RunConfig) -> Result<LibraryIndex> {
    cfg.validate()?;
    let im = cfg.generate_item_memory()?;
    let refs = encode_library(spectra, &cfg.preprocess, &im, cfg.search.workers)?;
    LibraryIndex::build(refs, cfg.max_r, cfg.preprocess.clone(), im)
}

#[derive(Clone, Debug)]
pub struct RunResult {
    pub standard: FdrResult,
    pub open: FdrResult,
    pub summary: FdrSummary,
    pub stats: SearchStats,
    /// Best-per-query PSMs of both modes before FDR filtering.
    pub raw_psm_count: usize,
}

/// Encodes `queries` with the index's own item memory and preprocessing,
/// searches through `cache` and filters each mode at the configured FDR.
pub fn run_search(
    queries: &[Spectrum],
    cache: &BlockCache<'_>,
    cfg: &RunConfig,
) -> Result<RunResult> {
    let source: &dyn BlockSource = cache.source();
    let im = source.item_memory();
    let pcfg = &source.manifest().preprocess;
    let t = std::time::Instant::now();
    let encoded = encode_queries(queries, pcfg, im, cfg.search.workers)?;
    let encode_secs = t.elapsed().as_secs_f64();
    let out = search_all(&encoded, cache, &cfg.search)?;
    let mut stats = out.stats;
    stats.phase_seconds.insert("encode".into(), encode_secs);
    let t = std::time::Instant::now();
    let standard = filter_fdr(&out.standard, &cfg.fdr);
    let open = filter_fdr(&out.open, &cfg.fdr);
    stats
        .phase_seconds
        .insert("fdr".into(), t.elapsed().as_secs_f64());
    let summary = fdr_summary(&standard, &open);
    Ok(RunResult {
        raw_psm_count: out.standard.len() + out.open.len(),
        standard,
        open,
        summary,
        stats,
    })
}

impl RunResult {
    /// Accepted PSMs of both modes in output order.
    pub fn accepted(&self) -> Vec<crate::oms_search::Psm> {
        let mut all: Vec<_> = self
            .standard
            .accepted
            .iter()
            .chain(&self.open.accepted)
            .cloned()
            .collect();
        all.sort_by_key(|p| (p.query_id, p.mode, p.ref_id));
        all
    }
}
