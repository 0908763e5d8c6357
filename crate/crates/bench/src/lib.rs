//! Fixtures shared by the benchmarks.

use hdoms_core::library_index::BlockSource;
use hdoms_core::oms_search::EncodedQuery;
use hdoms_core::pipeline::{build_library_index, encode_queries};
use hdoms_core::synth::{generate, SynthConfig, SynthData};
use hdoms_core::{Hypervector, LibraryIndex, RunConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn random_vectors(n: usize, dim: usize, seed: u64) -> Vec<Hypervector> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| Hypervector::random(dim, &mut rng)).collect()
}

pub fn dataset(n_refs: usize, n_queries: usize) -> SynthData {
    generate(&SynthConfig {
        n_refs,
        n_queries,
        perturb_rate: 0.1,
        dropout_rate: 0.05,
        decoy_fraction: 0.1,
        shift_fraction: 0.3,
        seed: 7,
        ..Default::default()
    })
    .expect("synthetic data")
}

pub struct SearchFixture {
    pub config: RunConfig,
    pub index: LibraryIndex,
    pub queries: Vec<EncodedQuery>,
}

pub fn search_fixture(n_refs: usize, n_queries: usize, max_r: usize) -> SearchFixture {
    let data = dataset(n_refs, n_queries);
    let mut config = RunConfig::default();
    config.max_r = max_r;
    let index = build_library_index(&data.library, &config).expect("index");
    let queries = encode_queries(
        &data.queries,
        &index.manifest().preprocess,
        index.item_memory(),
        config.search.workers,
    )
    .expect("encode");
    SearchFixture {
        config,
        index,
        queries,
    }
}
