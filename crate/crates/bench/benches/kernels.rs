use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use hdoms_bench::{dataset, random_vectors, search_fixture};
use hdoms_core::hd_encoder::{encode_spectrum, hamming_words};
use hdoms_core::library_index::BlockSource;
use hdoms_core::oms_search::score_group;
use hdoms_core::{preprocess, search_all, BlockCache, Hypervector, PreprocessConfig, RunConfig};

fn hamming(c: &mut Criterion) {
    let mut g = c.benchmark_group("hamming");
    for dim in [1024, 4096, 8192] {
        let v = random_vectors(2, dim, 1);
        g.throughput(Throughput::Bytes((dim / 8) as u64));
        g.bench_with_input(BenchmarkId::from_parameter(dim), &v, |b, v| {
            b.iter(|| hamming_words(black_box(v[0].words()), black_box(v[1].words())))
        });
    }
    g.finish();
}

fn encode(c: &mut Criterion) {
    let data = dataset(64, 0);
    let cfg = PreprocessConfig::default();
    let im = RunConfig::default().generate_item_memory().unwrap();
    let quantized: Vec<_> = data.library.iter().map(|s| preprocess(s, &cfg)).collect();
    let mut g = c.benchmark_group("encode");
    g.throughput(Throughput::Elements(quantized.len() as u64));
    g.bench_function("40_peaks_4096", |b| {
        b.iter(|| {
            for q in &quantized {
                black_box(encode_spectrum(q, &im).unwrap());
            }
        })
    });
    g.finish();
}

fn score_group_bench(c: &mut Criterion) {
    let fx = search_fixture(4096, 16, 4096);
    let key = fx.index.manifest().keys().next().unwrap();
    let block = fx.index.load_block(key).unwrap();
    let mut g = c.benchmark_group("score_group");
    for q in [1usize, 4, 16] {
        let hvs: Vec<&Hypervector> = fx.queries.iter().take(q).map(|e| &e.hv).collect();
        g.throughput(Throughput::Elements((q * block.len()) as u64));
        g.bench_with_input(BenchmarkId::new("queries", q), &hvs, |b, hvs| {
            b.iter(|| score_group(black_box(hvs), &block))
        });
    }
    g.finish();
}

fn search(c: &mut Criterion) {
    let fx = search_fixture(20_000, 500, 1024);
    let mut g = c.benchmark_group("search_all");
    g.sample_size(10);
    for tol in [20.0, 75.0, 150.0] {
        let mut sc = fx.config.search.clone();
        sc.open_tol_da = tol;
        g.bench_with_input(BenchmarkId::new("open_tol_da", tol), &sc, |b, sc| {
            b.iter(|| {
                let cache = BlockCache::unbounded(&fx.index);
                search_all(&fx.queries, &cache, sc).unwrap()
            })
        });
    }
    g.finish();
}

criterion_group!(benches, hamming, encode, score_group_bench, search);
criterion_main!(benches);
