//! Binary hypervectors, ID/level item memories and spectrum encoding.
//!
//! A spectrum is encoded by binding each `(bin, level)` entry as
//! `ID[bin] ^ L[level]` and bundling the bound vectors with a bitwise
//! majority. Even-count ties take the bit from a fixed tiebreak vector.

use std::io::{self, Read, Write};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::preprocess::QuantizedSpectrum;

pub const WORD_BITS: usize = 64;

pub const DEFAULT_DIM: usize = 4096;

/// Name of the generator behind [`ItemMemory::generate`], stored in index files.
pub const GENERATOR_NAME: &str = "chacha8-stream/v1";

/// Documented for parity with the streamed FPGA kernel width divisor. Software
/// scoring is sliced by 64-bit words, so the value never changes a result.
pub const DEFAULT_FACTOR: usize = 16;

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Hypervector {
    words: Vec<u64>,
}

impl std::fmt::Debug for Hypervector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "Hypervector(dim={}, ones={})",
            self.dim(),
            self.count_ones()
        )
    }
}

impl Hypervector {
    pub fn zeros(dim: usize) -> Self {
        assert_eq!(dim % WORD_BITS, 0, "dimension must be a multiple of 64");
        Self {
            words: vec![0; dim / WORD_BITS],
        }
    }

    pub fn from_words(words: Vec<u64>) -> Self {
        Self { words }
    }

    pub fn random<R: RngCore>(dim: usize, rng: &mut R) -> Self {
        let mut hv = Self::zeros(dim);
        rng.fill(&mut hv.words[..]);
        hv
    }

    pub fn dim(&self) -> usize {
        self.words.len() * WORD_BITS
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn into_words(self) -> Vec<u64> {
        self.words
    }

    pub fn bit(&self, i: usize) -> bool {
        self.words[i / WORD_BITS] >> (i % WORD_BITS) & 1 == 1
    }

    pub fn set_bit(&mut self, i: usize, value: bool) {
        let mask = 1u64 << (i % WORD_BITS);
        if value {
            self.words[i / WORD_BITS] |= mask;
        } else {
            self.words[i / WORD_BITS] &= !mask;
        }
    }

    pub fn flip_bit(&mut self, i: usize) {
        self.words[i / WORD_BITS] ^= 1u64 << (i % WORD_BITS);
    }

    pub fn count_ones(&self) -> u32 {
        self.words.iter().map(|w| w.count_ones()).sum()
    }

    pub fn complement(&self) -> Self {
        Self {
            words: self.words.iter().map(|w| !w).collect(),
        }
    }

    pub fn xor(&self, other: &Self) -> Self {
        Self {
            words: xor_words(&self.words, &other.words),
        }
    }
}

fn xor_words(a: &[u64], b: &[u64]) -> Vec<u64> {
    a.iter().zip(b).map(|(x, y)| x ^ y).collect()
}

/// Popcount of `a ^ b` over equal-length word slices.
#[inline]
pub fn hamming_words(a: &[u64], b: &[u64]) -> u32 {
    debug_assert_eq!(a.len(), b.len());
    // Four independent accumulators let the popcounts pipeline.
    let mut acc = [0u32; 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (x, y) in (&mut ca).zip(&mut cb) {
        acc[0] += (x[0] ^ y[0]).count_ones();
        acc[1] += (x[1] ^ y[1]).count_ones();
        acc[2] += (x[2] ^ y[2]).count_ones();
        acc[3] += (x[3] ^ y[3]).count_ones();
    }
    let tail: u32 = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .map(|(x, y)| (x ^ y).count_ones())
        .sum();
    acc.iter().sum::<u32>() + tail
}

pub fn hamming(a: &Hypervector, b: &Hypervector) -> Result<u32> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    Ok(hamming_words(&a.words, &b.words))
}

/// `Dhv - hamming`; identical vectors score `Dhv`.
pub fn similarity_score(a: &Hypervector, b: &Hypervector) -> Result<u32> {
    Ok(a.dim() as u32 - hamming(a, b)?)
}

#[derive(Clone, PartialEq, Eq)]
pub struct ItemMemory {
    seed: u64,
    dim: usize,
    num_bins: usize,
    num_levels: usize,
    generator: String,
    /// `num_bins` vectors, contiguous.
    ids: Vec<u64>,
    /// `num_levels` vectors, contiguous.
    levels: Vec<u64>,
    tiebreak: Vec<u64>,
}

impl std::fmt::Debug for ItemMemory {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ItemMemory")
            .field("seed", &self.seed)
            .field("dim", &self.dim)
            .field("num_bins", &self.num_bins)
            .field("num_levels", &self.num_levels)
            .field("generator", &self.generator)
            .finish_non_exhaustive()
    }
}

const STREAM_ID: u64 = 1;
const STREAM_LEVEL_BASE: u64 = 2;
const STREAM_LEVEL_FLIPS: u64 = 3;
const STREAM_TIEBREAK: u64 = 4;

/// One independent ChaCha8 stream per `(seed, domain, index)`.
fn stream_rng(seed: u64, domain: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(domain << 48 | index);
    rng
}

/// Positions flipped between consecutive level vectors:
/// `2 * floor(dim / (4 * (q - 1)))`.
pub fn level_flip_step(dim: usize, num_levels: usize) -> usize {
    if num_levels < 2 {
        return 0;
    }
    2 * (dim / (4 * (num_levels - 1)))
}

impl ItemMemory {
    pub fn generate(num_bins: usize, num_levels: usize, dim: usize, seed: u64) -> Result<Self> {
        if dim == 0 || !dim.is_multiple_of(WORD_BITS) {
            return Err(Error::Config(format!(
                "hypervector dimension {dim} must be a positive multiple of 64"
            )));
        }
        if num_bins == 0 || num_levels == 0 {
            return Err(Error::Config(
                "item memory needs at least one bin and one level".into(),
            ));
        }
        let step = level_flip_step(dim, num_levels);
        if num_levels > 1 && step == 0 {
            return Err(Error::Config(format!(
                "dimension {dim} is too small for {num_levels} levels (needs >= {})",
                4 * (num_levels - 1)
            )));
        }
        let words = dim / WORD_BITS;

        let mut ids = vec![0u64; num_bins * words];
        for (i, chunk) in ids.chunks_exact_mut(words).enumerate() {
            stream_rng(seed, STREAM_ID, i as u64).fill(chunk);
        }

        let mut levels = vec![0u64; num_levels * words];
        stream_rng(seed, STREAM_LEVEL_BASE, 0).fill(&mut levels[..words]);
        if num_levels > 1 {
            let mut rng = stream_rng(seed, STREAM_LEVEL_FLIPS, 0);
            let mut positions: Vec<u32> = (0..dim as u32).collect();
            // Partial Fisher-Yates: only the first step * (q - 1) positions are used.
            let used = step * (num_levels - 1);
            for i in 0..used {
                let j = rng.gen_range(i..dim);
                positions.swap(i, j);
            }
            for level in 1..num_levels {
                let (prev, next) = levels.split_at_mut(level * words);
                let next = &mut next[..words];
                next.copy_from_slice(&prev[(level - 1) * words..]);
                for &pos in &positions[(level - 1) * step..level * step] {
                    let pos = pos as usize;
                    next[pos / WORD_BITS] ^= 1u64 << (pos % WORD_BITS);
                }
            }
        }

        let mut tiebreak = vec![0u64; words];
        stream_rng(seed, STREAM_TIEBREAK, 0).fill(&mut tiebreak[..]);

        Ok(Self {
            seed,
            dim,
            num_bins,
            num_levels,
            generator: GENERATOR_NAME.to_string(),
            ids,
            levels,
            tiebreak,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn words_per_vector(&self) -> usize {
        self.dim / WORD_BITS
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn num_bins(&self) -> usize {
        self.num_bins
    }

    pub fn num_levels(&self) -> usize {
        self.num_levels
    }

    pub fn generator(&self) -> &str {
        &self.generator
    }

    pub fn id_words(&self, bin: usize) -> &[u64] {
        let w = self.words_per_vector();
        &self.ids[bin * w..(bin + 1) * w]
    }

    pub fn level_words(&self, level: usize) -> &[u64] {
        let w = self.words_per_vector();
        &self.levels[level * w..(level + 1) * w]
    }

    pub fn tiebreak_words(&self) -> &[u64] {
        &self.tiebreak
    }

    pub fn id(&self, bin: usize) -> Hypervector {
        Hypervector::from_words(self.id_words(bin).to_vec())
    }

    pub fn level(&self, level: usize) -> Hypervector {
        Hypervector::from_words(self.level_words(level).to_vec())
    }

    pub fn tiebreak(&self) -> Hypervector {
        Hypervector::from_words(self.tiebreak.clone())
    }

    /// Serialized layout: `f`, `q`, `Dhv` (u32), seed (u64), generator name
    /// (u32 length + UTF-8), then ID, level and tiebreak words, little-endian.
    pub fn write_to<W: Write>(&self, w: &mut W) -> io::Result<()> {
        w.write_all(&(self.num_bins as u32).to_le_bytes())?;
        w.write_all(&(self.num_levels as u32).to_le_bytes())?;
        w.write_all(&(self.dim as u32).to_le_bytes())?;
        w.write_all(&self.seed.to_le_bytes())?;
        w.write_all(&(self.generator.len() as u32).to_le_bytes())?;
        w.write_all(self.generator.as_bytes())?;
        write_words(w, &self.ids)?;
        write_words(w, &self.levels)?;
        write_words(w, &self.tiebreak)
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let num_bins = read_u32(r)? as usize;
        let num_levels = read_u32(r)? as usize;
        let dim = read_u32(r)? as usize;
        let seed = read_u64(r)?;
        if dim == 0 || !dim.is_multiple_of(WORD_BITS) {
            return Err(Error::Format(format!("item memory dimension {dim}")));
        }
        let name_len = read_u32(r)? as usize;
        if name_len > 4096 {
            return Err(Error::Format("generator name too long".into()));
        }
        let mut name = vec![0u8; name_len];
        r.read_exact(&mut name)?;
        let generator = String::from_utf8(name)
            .map_err(|_| Error::Format("generator name is not UTF-8".into()))?;
        let words = dim / WORD_BITS;
        let ids = read_words(r, num_bins * words)?;
        let levels = read_words(r, num_levels * words)?;
        let tiebreak = read_words(r, words)?;
        Ok(Self {
            seed,
            dim,
            num_bins,
            num_levels,
            generator,
            ids,
            levels,
            tiebreak,
        })
    }
}

pub(crate) fn write_words<W: Write>(w: &mut W, words: &[u64]) -> io::Result<()> {
    let mut buf = Vec::with_capacity(words.len() * 8);
    for word in words {
        buf.extend_from_slice(&word.to_le_bytes());
    }
    w.write_all(&buf)
}

pub(crate) fn read_words<R: Read>(r: &mut R, n: usize) -> io::Result<Vec<u64>> {
    let mut buf = vec![0u8; n * 8];
    r.read_exact(&mut buf)?;
    Ok(buf
        .chunks_exact(8)
        .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

pub(crate) fn read_u32<R: Read>(r: &mut R) -> io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub(crate) fn read_u64<R: Read>(r: &mut R) -> io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

/// Bundles `ID[bin] ^ L[level]` for every entry by bitwise majority.
///
/// Per-bit counts are kept as bit-sliced binary counters (one u64 plane per
/// counter bit), so each entry costs a handful of word ops rather than one
/// op per bit.
pub fn encode_spectrum(qs: &QuantizedSpectrum, im: &ItemMemory) -> Result<Hypervector> {
    let words = im.words_per_vector();
    let n = qs.entries.len();
    for (k, &(bin, level)) in qs.entries.iter().enumerate() {
        if bin as usize >= im.num_bins() || level as usize >= im.num_levels() {
            return Err(Error::Encoding(format!(
                "entry {k} of spectrum {} has (bin {bin}, level {level}) outside item memory ({} bins, {} levels)",
                qs.source_id,
                im.num_bins(),
                im.num_levels()
            )));
        }
    }
    if n == 0 {
        return Ok(Hypervector::zeros(im.dim()));
    }

    let num_planes = (usize::BITS - n.leading_zeros()) as usize;
    let mut planes = vec![0u64; num_planes * words];
    for &(bin, level) in &qs.entries {
        let id = im.id_words(bin as usize);
        let lv = im.level_words(level as usize);
        for w in 0..words {
            let mut carry = id[w] ^ lv[w];
            for p in 0..num_planes {
                if carry == 0 {
                    break;
                }
                let plane = &mut planes[p * words + w];
                let next = *plane & carry;
                *plane ^= carry;
                carry = next;
            }
        }
    }

    let tiebreak = im.tiebreak_words();
    let mut out = vec![0u64; words];
    for w in 0..words {
        let mut word = 0u64;
        for b in 0..WORD_BITS {
            let mut count = 0usize;
            for p in 0..num_planes {
                count |= ((planes[p * words + w] >> b & 1) as usize) << p;
            }
            let bit = match (2 * count).cmp(&n) {
                std::cmp::Ordering::Greater => 1,
                std::cmp::Ordering::Less => 0,
                std::cmp::Ordering::Equal => tiebreak[w] >> b & 1,
            };
            word |= bit << b;
        }
        out[w] = word;
    }
    Ok(Hypervector::from_words(out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn qs(entries: Vec<(u32, u32)>) -> QuantizedSpectrum {
        QuantizedSpectrum {
            source_id: 0,
            precursor_mz: 500.0,
            charge: 2,
            entries,
        }
    }

    /// Unpacked per-bit reference encoder.
    #[allow(clippy::needless_range_loop)]
    fn naive_encode(q: &QuantizedSpectrum, im: &ItemMemory) -> Hypervector {
        let dim = im.dim();
        let mut counts = vec![0usize; dim];
        for &(bin, level) in &q.entries {
            let id = im.id(bin as usize);
            let lv = im.level(level as usize);
            for i in 0..dim {
                if id.bit(i) != lv.bit(i) {
                    counts[i] += 1;
                }
            }
        }
        let n = q.entries.len();
        let tb = im.tiebreak();
        let mut out = Hypervector::zeros(dim);
        if n == 0 {
            return out;
        }
        for i in 0..dim {
            let bit = if 2 * counts[i] > n {
                true
            } else if 2 * counts[i] < n {
                false
            } else {
                tb.bit(i)
            };
            out.set_bit(i, bit);
        }
        out
    }

    fn naive_hamming(a: &Hypervector, b: &Hypervector) -> u32 {
        (0..a.dim()).filter(|&i| a.bit(i) != b.bit(i)).count() as u32
    }

    #[test]
    fn generation_is_deterministic() {
        let a = ItemMemory::generate(1, 2, 64, 7).unwrap();
        let b = ItemMemory::generate(1, 2, 64, 7).unwrap();
        assert_eq!(a, b);
        let c = ItemMemory::generate(1, 2, 64, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn two_levels_differ_by_half() {
        let im = ItemMemory::generate(1, 2, 4096, 3).unwrap();
        assert_eq!(hamming(&im.level(0), &im.level(1)).unwrap(), 2048);
    }

    #[test]
    fn level_gradient() {
        let (q, dim) = (64, 4096);
        let im = ItemMemory::generate(4, q, dim, 21).unwrap();
        let step = level_flip_step(dim, q);
        assert_eq!(step, 32);
        assert_eq!(
            hamming(&im.level(0), &im.level(q - 1)).unwrap() as usize,
            2 * (q - 1) * (dim / (4 * (q - 1)))
        );
        for a in 0..q {
            for b in a..q {
                // Disjoint flips: distance is exactly step * |a - b|.
                let d = hamming(&im.level(a), &im.level(b)).unwrap() as usize;
                assert_eq!(d, step * (b - a));
            }
        }
    }

    #[test]
    fn id_vectors_quasi_orthogonal() {
        let im = ItemMemory::generate(1000, 2, 4096, 0xfeed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let bound = 4.0 * 4096f64.sqrt();
        let mut total = 0u64;
        for _ in 0..200 {
            let a = rng.gen_range(0..1000);
            let mut b = rng.gen_range(0..1000);
            while b == a {
                b = rng.gen_range(0..1000);
            }
            let d = hamming(&im.id(a), &im.id(b)).unwrap();
            assert!((d as f64 - 2048.0).abs() <= bound, "pair distance {d}");
            total += d as u64;
        }
        let mean = total as f64 / 200.0;
        assert!((mean - 2048.0).abs() <= 64.0, "mean {mean}");
    }

    #[test]
    fn generation_errors() {
        assert!(ItemMemory::generate(1, 2, 100, 0).is_err());
        assert!(ItemMemory::generate(1, 2, 0, 0).is_err());
        assert!(ItemMemory::generate(0, 2, 64, 0).is_err());
        // 64 < 4 * (64 - 1)
        assert!(ItemMemory::generate(1, 64, 64, 0).is_err());
        assert!(ItemMemory::generate(1, 1, 64, 0).is_ok());
    }

    #[test]
    fn single_entry_is_bound_pair() {
        let im = ItemMemory::generate(50, 8, 1024, 4).unwrap();
        let hv = encode_spectrum(&qs(vec![(17, 5)]), &im).unwrap();
        assert_eq!(hv, im.id(17).xor(&im.level(5)));
    }

    #[test]
    fn empty_spectrum_encodes_to_zero() {
        let im = ItemMemory::generate(5, 4, 256, 4).unwrap();
        assert_eq!(
            encode_spectrum(&qs(vec![]), &im).unwrap(),
            Hypervector::zeros(256)
        );
    }

    #[test]
    fn toy_majority() {
        // Bits 0..4 of three bound vectors: 1010, 1100, 1001 -> majority 1000.
        let im = ItemMemory::generate(3, 2, 64, 0).unwrap();
        let mut bound = Vec::new();
        let patterns = [[1, 0, 1, 0], [1, 1, 0, 0], [1, 0, 0, 1]];
        for (bin, pat) in patterns.iter().enumerate() {
            let mut hv = im.id(bin).xor(&im.level(0));
            for (i, &b) in pat.iter().enumerate() {
                hv.set_bit(i, b == 1);
            }
            bound.push(hv);
        }
        // Build an item memory whose bound vectors carry the toy patterns.
        let mut custom = im.clone();
        for (bin, hv) in bound.iter().enumerate() {
            let id = hv.xor(&im.level(0));
            let w = custom.words_per_vector();
            custom.ids[bin * w..(bin + 1) * w].copy_from_slice(id.words());
        }
        let out = encode_spectrum(&qs(vec![(0, 0), (1, 0), (2, 0)]), &custom).unwrap();
        let first4: Vec<bool> = (0..4).map(|i| out.bit(i)).collect();
        assert_eq!(first4, vec![true, false, false, false]);
    }

    #[test]
    fn even_ties_use_tiebreak() {
        let im = ItemMemory::generate(10, 4, 512, 9).unwrap();
        let q = qs(vec![(1, 2), (3, 1)]);
        let a = im.id(1).xor(&im.level(2));
        let b = im.id(3).xor(&im.level(1));
        let tb = im.tiebreak();
        let out = encode_spectrum(&q, &im).unwrap();
        for i in 0..512 {
            let expected = if a.bit(i) == b.bit(i) {
                a.bit(i)
            } else {
                tb.bit(i)
            };
            assert_eq!(out.bit(i), expected);
        }
    }

    #[test]
    fn encode_matches_bit_loop_oracle() {
        let im = ItemMemory::generate(2000, 64, 4096, 77).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for n in [1usize, 2, 3, 24, 25, 64, 255, 256] {
            let mut bins: Vec<u32> = (0..2000).collect();
            for i in 0..n {
                let j = rng.gen_range(i..bins.len());
                bins.swap(i, j);
            }
            let mut entries: Vec<(u32, u32)> = bins[..n]
                .iter()
                .map(|&b| (b, rng.gen_range(0..64)))
                .collect();
            entries.sort();
            let q = qs(entries);
            assert_eq!(
                encode_spectrum(&q, &im).unwrap(),
                naive_encode(&q, &im),
                "n={n}"
            );
        }
    }

    #[test]
    fn encode_rejects_out_of_range() {
        let im = ItemMemory::generate(10, 4, 64, 0).unwrap();
        let err = encode_spectrum(&qs(vec![(1, 1), (10, 0)]), &im).unwrap_err();
        assert!(err.to_string().contains("entry 1"), "{err}");
        assert!(encode_spectrum(&qs(vec![(1, 4)]), &im).is_err());
    }

    #[test]
    fn hamming_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = Hypervector::random(4096, &mut rng);
        assert_eq!(hamming(&a, &a).unwrap(), 0);
        assert_eq!(hamming(&a, &a.complement()).unwrap(), 4096);
        assert_eq!(similarity_score(&a, &a).unwrap(), 4096);
        assert_eq!(similarity_score(&a, &a.complement()).unwrap(), 0);
        let short = Hypervector::zeros(64);
        assert!(matches!(
            hamming(&a, &short),
            Err(Error::DimensionMismatch {
                expected: 4096,
                got: 64
            })
        ));
    }

    #[test]
    fn hamming_matches_bit_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for dim in [64, 192, 4096] {
            for _ in 0..100 {
                let a = Hypervector::random(dim, &mut rng);
                let b = Hypervector::random(dim, &mut rng);
                let h = naive_hamming(&a, &b);
                assert_eq!(hamming(&a, &b).unwrap(), h);
                assert_eq!(similarity_score(&a, &b).unwrap(), dim as u32 - h);
            }
        }
    }

    #[test]
    fn serialization_round_trip() {
        let im = ItemMemory::generate(33, 16, 256, 5).unwrap();
        let mut buf = Vec::new();
        im.write_to(&mut buf).unwrap();
        let expected_len = 4 * 3 + 8 + 4 + GENERATOR_NAME.len() + (33 + 16 + 1) * 256 / 8;
        assert_eq!(buf.len(), expected_len);
        let back = ItemMemory::read_from(&mut &buf[..]).unwrap();
        assert_eq!(back, im);
    }

    #[test]
    fn perturbed_spectra_stay_closer_than_unrelated() {
        let im = ItemMemory::generate(49_000, 64, 4096, 1234).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let random_spec = |rng: &mut ChaCha8Rng, exclude: &[u32]| {
            let mut bins = Vec::new();
            while bins.len() < 30 {
                let b = rng.gen_range(0..49_000);
                if !bins.contains(&b) && !exclude.contains(&b) {
                    bins.push(b);
                }
            }
            bins.sort();
            bins.into_iter()
                .map(|b| (b, rng.gen_range(1..63)))
                .collect::<Vec<_>>()
        };
        let mut wins = 0;
        for _ in 0..100 {
            let base = random_spec(&mut rng, &[]);
            let mut perturbed = base.clone();
            for e in perturbed.iter_mut() {
                if rng.gen_bool(0.1) {
                    e.1 = if rng.gen_bool(0.5) { e.1 + 1 } else { e.1 - 1 };
                }
            }
            let base_bins: Vec<u32> = base.iter().map(|e| e.0).collect();
            let other = random_spec(&mut rng, &base_bins);
            let hb = encode_spectrum(&qs(base), &im).unwrap();
            let hp = encode_spectrum(&qs(perturbed), &im).unwrap();
            let ho = encode_spectrum(&qs(other), &im).unwrap();
            if hamming(&hb, &hp).unwrap() < hamming(&hb, &ho).unwrap() {
                wins += 1;
            }
        }
        assert!(wins >= 99, "wins {wins}");
    }

    fn arb_hv(dim: usize) -> impl Strategy<Value = Hypervector> {
        prop::collection::vec(any::<u64>(), dim / 64).prop_map(Hypervector::from_words)
    }

    proptest! {
        #[test]
        fn hamming_is_a_metric(a in arb_hv(256), b in arb_hv(256), c in arb_hv(256)) {
            let ab = hamming(&a, &b).unwrap();
            prop_assert_eq!(ab, hamming(&b, &a).unwrap());
            prop_assert_eq!(ab == 0, a == b);
            prop_assert!(hamming(&a, &c).unwrap() <= ab + hamming(&b, &c).unwrap());
        }

        #[test]
        fn bundling_is_order_free(
            entries in prop::collection::btree_map(0u32..500, 0u32..16, 0..40),
            seed in any::<u64>(),
        ) {
            let im = ItemMemory::generate(500, 16, 256, 42).unwrap();
            let mut list: Vec<(u32, u32)> = entries.into_iter().collect();
            let forward = encode_spectrum(&qs(list.clone()), &im).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for i in (1..list.len()).rev() {
                let j = rng.gen_range(0..=i);
                list.swap(i, j);
            }
            prop_assert_eq!(encode_spectrum(&qs(list), &im).unwrap(), forward);
        }
    }
}
