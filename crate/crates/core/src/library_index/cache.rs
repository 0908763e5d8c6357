use std::collections::HashMap;
use std::sync::Arc;

use parking_lot::Mutex;

use super::{Block, BlockKey, BlockSource};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct CacheCounters {
    pub hits: u64,
    pub misses: u64,
    pub evictions: u64,
}

struct Resident {
    block: Arc<Block>,
    bytes: u64,
    last_use: u64,
}

#[derive(Default)]
struct State {
    resident: HashMap<BlockKey, Resident>,
    resident_bytes: u64,
    clock: u64,
    counters: CacheCounters,
    trace: Option<Vec<BlockKey>>,
}

/// Byte-budgeted LRU cache of blocks in front of a [`BlockSource`].
///
/// Only hypervector payload bytes count against the budget. The lock is held
/// across a miss load, so concurrent callers never load the same block twice
/// and counter updates are never lost.
pub struct BlockCache<'a> {
    source: &'a dyn BlockSource,
    budget: u64,
    state: Mutex<State>,
}

impl<'a> BlockCache<'a> {
    pub fn new(source: &'a dyn BlockSource, budget_bytes: u64) -> Result<Self> {
        let largest = source.manifest().max_block_payload_bytes();
        if largest > budget_bytes {
            return Err(Error::Config(format!(
                "cache budget of {budget_bytes} bytes cannot hold a {largest}-byte block"
            )));
        }
        Ok(Self {
            source,
            budget: budget_bytes,
            state: Mutex::new(State::default()),
        })
    }

    /// Unbounded cache: every block stays resident once loaded.
    pub fn unbounded(source: &'a dyn BlockSource) -> Self {
        Self {
            source,
            budget: u64::MAX,
            state: Mutex::new(State::default()),
        }
    }

    pub fn source(&self) -> &'a dyn BlockSource {
        self.source
    }

    pub fn budget(&self) -> u64 {
        self.budget
    }

    /// Starts recording every requested key, in request order.
    pub fn record_trace(&self) {
        self.state.lock().trace = Some(Vec::new());
    }

    pub fn take_trace(&self) -> Vec<BlockKey> {
        self.state.lock().trace.take().unwrap_or_default()
    }

    pub fn counters(&self) -> CacheCounters {
        self.state.lock().counters
    }

    pub fn resident_bytes(&self) -> u64 {
        self.state.lock().resident_bytes
    }

    pub fn get_block(&self, key: BlockKey) -> Result<Arc<Block>> {
        let bytes = self
            .source
            .manifest()
            .block_payload_bytes(key)
            .ok_or_else(|| Error::BlockIo {
                key,
                source: std::io::Error::new(std::io::ErrorKind::NotFound, "block not in manifest"),
            })?;
        if bytes > self.budget {
            return Err(Error::Config(format!(
                "{key} needs {bytes} bytes, above the cache budget of {}",
                self.budget
            )));
        }

        let mut st = self.state.lock();
        st.clock += 1;
        let now = st.clock;
        if let Some(trace) = st.trace.as_mut() {
            trace.push(key);
        }
        if let Some(entry) = st.resident.get_mut(&key) {
            entry.last_use = now;
            let block = Arc::clone(&entry.block);
            st.counters.hits += 1;
            return Ok(block);
        }

        st.counters.misses += 1;
        let block = self.source.load_block(key)?;
        while st.resident_bytes + bytes > self.budget {
            let victim = st
                .resident
                .iter()
                .min_by_key(|(_, r)| r.last_use)
                .map(|(k, _)| *k)
                .expect("budget exceeded with nothing resident");
            let evicted = st.resident.remove(&victim).unwrap();
            st.resident_bytes -= evicted.bytes;
            st.counters.evictions += 1;
        }
        st.resident_bytes += bytes;
        st.resident.insert(
            key,
            Resident {
                block: Arc::clone(&block),
                bytes,
                last_use: now,
            },
        );
        Ok(block)
    }
}

#[cfg(test)]
mod tests {
    use super::super::tests::random_refs;
    use super::super::LibraryIndex;
    use super::*;
    use crate::hd_encoder::ItemMemory;
    use crate::preprocess::PreprocessConfig;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::VecDeque;

    fn index() -> LibraryIndex {
        let im = ItemMemory::generate(4, 2, 64, 1).unwrap();
        // 10 equal blocks of 20 records, 160 payload bytes each.
        LibraryIndex::build(
            random_refs(200, &[2], 64, 7),
            20,
            PreprocessConfig::default(),
            im,
        )
        .unwrap()
    }

    fn key(i: u32) -> BlockKey {
        BlockKey {
            charge: 2,
            index: i,
        }
    }

    /// Independent LRU model: a recency queue of keys with a block-count capacity.
    fn lru_oracle(trace: &[BlockKey], capacity: usize) -> (u64, u64) {
        let mut q: VecDeque<BlockKey> = VecDeque::new();
        let (mut hits, mut misses) = (0, 0);
        for k in trace {
            if let Some(pos) = q.iter().position(|x| x == k) {
                hits += 1;
                q.remove(pos);
            } else {
                misses += 1;
                if q.len() == capacity {
                    q.pop_back();
                }
            }
            q.push_front(*k);
        }
        (hits, misses)
    }

    #[test]
    fn repeat_get_hits() {
        let idx = index();
        let cache = BlockCache::new(&idx, 1 << 20).unwrap();
        cache.get_block(key(3)).unwrap();
        cache.get_block(key(3)).unwrap();
        assert_eq!(cache.counters().misses, 1);
        assert_eq!(cache.counters().hits, 1);
    }

    #[test]
    fn one_block_budget_trace() {
        let idx = index();
        let cache = BlockCache::new(&idx, 160).unwrap();
        for k in [0, 1, 0] {
            cache.get_block(key(k)).unwrap();
        }
        assert_eq!(cache.counters().misses, 3);
        assert_eq!(cache.counters().hits, 0);
        assert!(cache.resident_bytes() <= 160);
    }

    #[test]
    fn random_trace_matches_oracle() {
        let idx = index();
        let cache = BlockCache::new(&idx, 4 * 160).unwrap();
        cache.record_trace();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..500 {
            cache.get_block(key(rng.gen_range(0..10))).unwrap();
            assert!(cache.resident_bytes() <= 4 * 160);
        }
        let trace = cache.take_trace();
        assert_eq!(trace.len(), 500);
        let (hits, misses) = lru_oracle(&trace, 4);
        let c = cache.counters();
        assert_eq!((c.hits, c.misses), (hits, misses));
    }

    #[test]
    fn budget_below_one_block_is_rejected() {
        let idx = index();
        assert!(matches!(BlockCache::new(&idx, 159), Err(Error::Config(_))));
    }

    #[test]
    fn unknown_key_is_an_error() {
        let idx = index();
        let cache = BlockCache::unbounded(&idx);
        assert!(matches!(
            cache.get_block(key(99)),
            Err(Error::BlockIo { .. })
        ));
    }

    #[test]
    fn concurrent_gets_keep_counters_exact() {
        let idx = index();
        let cache = BlockCache::new(&idx, 3 * 160).unwrap();
        std::thread::scope(|s| {
            for t in 0..4u64 {
                let cache = &cache;
                s.spawn(move || {
                    let mut rng = ChaCha8Rng::seed_from_u64(t);
                    for _ in 0..250 {
                        let b = cache.get_block(key(rng.gen_range(0..10))).unwrap();
                        assert_eq!(b.len(), 20);
                    }
                });
            }
        });
        let c = cache.counters();
        assert_eq!(c.hits + c.misses, 1000);
        assert!(cache.resident_bytes() <= 3 * 160);
    }
}
