//! Charge-partitioned, precursor-sorted block index of encoded references.
//!
//! References are grouped by charge, sorted by `(precursor_mz, ref_id)` and
//! chunked into blocks of at most `max_r` records. Each block carries its
//! PMZ range so a precursor window maps to a contiguous run of blocks.

mod cache;
mod format;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

pub use cache::{BlockCache, CacheCounters};
pub use format::{IndexFile, FORMAT_VERSION, MAGIC};

use crate::error::{Error, Result};
use crate::hd_encoder::{Hypervector, ItemMemory, WORD_BITS};
use crate::preprocess::PreprocessConfig;

pub const DEFAULT_MAX_R: usize = 4096;

#[derive(Clone, Debug, PartialEq)]
pub struct RefRecord {
    pub ref_id: u32,
    pub title: String,
    pub precursor_mz: f64,
    pub charge: u8,
    pub is_decoy: bool,
    pub hv: Hypervector,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BlockKey {
    pub charge: u8,
    pub index: u32,
}

impl fmt::Display for BlockKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "charge {} block {}", self.charge, self.index)
    }
}

/// A run of references of one charge, PMZ-ascending, with packed hypervectors.
#[derive(Clone, Debug, PartialEq)]
pub struct Block {
    pub charge: u8,
    pub pmz: Vec<f64>,
    pub ref_ids: Vec<u32>,
    pub decoys: Vec<bool>,
    pub titles: Vec<String>,
    words_per_hv: usize,
    payload: Vec<u64>,
}

impl Block {
    pub(crate) fn new(
        charge: u8,
        pmz: Vec<f64>,
        ref_ids: Vec<u32>,
        decoys: Vec<bool>,
        titles: Vec<String>,
        words_per_hv: usize,
        payload: Vec<u64>,
    ) -> Self {
        debug_assert_eq!(payload.len(), pmz.len() * words_per_hv);
        Self {
            charge,
            pmz,
            ref_ids,
            decoys,
            titles,
            words_per_hv,
            payload,
        }
    }

    pub fn len(&self) -> usize {
        self.pmz.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pmz.is_empty()
    }

    pub fn min_pmz(&self) -> f64 {
        self.pmz[0]
    }

    pub fn max_pmz(&self) -> f64 {
        self.pmz[self.pmz.len() - 1]
    }

    pub fn dim(&self) -> usize {
        self.words_per_hv * WORD_BITS
    }

    pub fn words_per_hv(&self) -> usize {
        self.words_per_hv
    }

    pub fn hv_words(&self, i: usize) -> &[u64] {
        &self.payload[i * self.words_per_hv..(i + 1) * self.words_per_hv]
    }

    pub fn payload(&self) -> &[u64] {
        &self.payload
    }

    pub fn payload_bytes(&self) -> u64 {
        (self.payload.len() * 8) as u64
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlockMeta {
    /// Byte offset of the block record in the index file (0 for in-memory builds
    /// until written).
    pub offset: u64,
    pub count: u32,
    pub min_pmz: f64,
    pub max_pmz: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Partition {
    pub charge: u8,
    pub blocks: Vec<BlockMeta>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct IndexManifest {
    pub dim: usize,
    pub max_r: usize,
    pub preprocess: PreprocessConfig,
    /// Ascending by charge.
    pub partitions: Vec<Partition>,
}

impl IndexManifest {
    pub fn partition(&self, charge: u8) -> Option<&Partition> {
        self.partitions
            .binary_search_by_key(&charge, |p| p.charge)
            .ok()
            .map(|i| &self.partitions[i])
    }

    pub fn block_meta(&self, key: BlockKey) -> Option<&BlockMeta> {
        self.partition(key.charge)?.blocks.get(key.index as usize)
    }

    pub fn keys(&self) -> impl Iterator<Item = BlockKey> + '_ {
        self.partitions.iter().flat_map(|p| {
            (0..p.blocks.len() as u32).map(move |index| BlockKey {
                charge: p.charge,
                index,
            })
        })
    }

    pub fn num_blocks(&self) -> usize {
        self.partitions.iter().map(|p| p.blocks.len()).sum()
    }

    pub fn num_records(&self) -> u64 {
        self.partitions
            .iter()
            .flat_map(|p| &p.blocks)
            .map(|b| b.count as u64)
            .sum()
    }

    pub fn block_payload_bytes(&self, key: BlockKey) -> Option<u64> {
        self.block_meta(key)
            .map(|m| m.count as u64 * (self.dim / 8) as u64)
    }

    pub fn max_block_payload_bytes(&self) -> u64 {
        self.partitions
            .iter()
            .flat_map(|p| &p.blocks)
            .map(|b| b.count as u64 * (self.dim / 8) as u64)
            .max()
            .unwrap_or(0)
    }

    /// Blocks of `charge` whose `[min_pmz, max_pmz]` intersects `[lo, hi]`,
    /// ascending.
    pub fn select_blocks(&self, charge: u8, lo: f64, hi: f64) -> Vec<BlockKey> {
        let Some(part) = self.partition(charge) else {
            return Vec::new();
        };
        // Both min_pmz and max_pmz are non-decreasing across a partition.
        let first = part.blocks.partition_point(|b| b.max_pmz < lo);
        let end = part.blocks.partition_point(|b| b.min_pmz <= hi);
        (first..end.max(first))
            .map(|index| BlockKey {
                charge,
                index: index as u32,
            })
            .collect()
    }
}

/// Supplies block contents by key.
pub trait BlockSource: Sync {
    fn manifest(&self) -> &IndexManifest;

    fn item_memory(&self) -> &ItemMemory;

    fn load_block(&self, key: BlockKey) -> Result<Arc<Block>>;
}

/// Fully in-memory index, as produced by [`LibraryIndex::build`] or
/// [`IndexFile::load_all`].
#[derive(Clone, Debug, PartialEq)]
pub struct LibraryIndex {
    manifest: IndexManifest,
    item_memory: ItemMemory,
    blocks: BTreeMap<BlockKey, Arc<Block>>,
}

impl LibraryIndex {
    pub fn build(
        mut refs: Vec<RefRecord>,
        max_r: usize,
        preprocess: PreprocessConfig,
        item_memory: ItemMemory,
    ) -> Result<Self> {
        if max_r == 0 {
            return Err(Error::Config("max_r must be at least 1".into()));
        }
        let dim = item_memory.dim();
        for r in &refs {
            if r.hv.dim() != dim {
                return Err(Error::Build(format!(
                    "reference {} has dimension {} but the item memory has {dim}",
                    r.ref_id,
                    r.hv.dim()
                )));
            }
            if !(r.precursor_mz > 0.0 && r.precursor_mz.is_finite()) {
                return Err(Error::Build(format!(
                    "reference {} has invalid precursor m/z {}",
                    r.ref_id, r.precursor_mz
                )));
            }
        }
        refs.sort_by(|a, b| {
            a.charge
                .cmp(&b.charge)
                .then(a.precursor_mz.total_cmp(&b.precursor_mz))
                .then(a.ref_id.cmp(&b.ref_id))
        });

        let words = item_memory.words_per_vector();
        let mut partitions: Vec<Partition> = Vec::new();
        let mut blocks = BTreeMap::new();
        for group in refs.chunk_by(|a, b| a.charge == b.charge) {
            let charge = group[0].charge;
            let mut metas = Vec::new();
            for (index, chunk) in group.chunks(max_r).enumerate() {
                let mut payload = Vec::with_capacity(chunk.len() * words);
                for r in chunk {
                    payload.extend_from_slice(r.hv.words());
                }
                let block = Block::new(
                    charge,
                    chunk.iter().map(|r| r.precursor_mz).collect(),
                    chunk.iter().map(|r| r.ref_id).collect(),
                    chunk.iter().map(|r| r.is_decoy).collect(),
                    chunk.iter().map(|r| r.title.clone()).collect(),
                    words,
                    payload,
                );
                metas.push(BlockMeta {
                    offset: 0,
                    count: block.len() as u32,
                    min_pmz: block.min_pmz(),
                    max_pmz: block.max_pmz(),
                });
                blocks.insert(
                    BlockKey {
                        charge,
                        index: index as u32,
                    },
                    Arc::new(block),
                );
            }
            partitions.push(Partition {
                charge,
                blocks: metas,
            });
        }

        let mut index = Self {
            manifest: IndexManifest {
                dim,
                max_r,
                preprocess,
                partitions,
            },
            item_memory,
            blocks,
        };
        index.assign_offsets();
        Ok(index)
    }

    pub(crate) fn from_parts(
        manifest: IndexManifest,
        item_memory: ItemMemory,
        blocks: BTreeMap<BlockKey, Arc<Block>>,
    ) -> Self {
        Self {
            manifest,
            item_memory,
            blocks,
        }
    }

    pub fn block(&self, key: BlockKey) -> Option<&Arc<Block>> {
        self.blocks.get(&key)
    }

    pub fn blocks(&self) -> impl Iterator<Item = (&BlockKey, &Arc<Block>)> {
        self.blocks.iter()
    }
}

impl BlockSource for LibraryIndex {
    fn manifest(&self) -> &IndexManifest {
        &self.manifest
    }

    fn item_memory(&self) -> &ItemMemory {
        &self.item_memory
    }

    fn load_block(&self, key: BlockKey) -> Result<Arc<Block>> {
        self.blocks
            .get(&key)
            .cloned()
            .ok_or_else(|| Error::BlockIo {
                key,
                source: std::io::Error::new(std::io::ErrorKind::NotFound, "no such block"),
            })
    }
}
