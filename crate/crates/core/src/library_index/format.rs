//! On-disk index layout (all integers and floats little-endian):
//!
//! ```text
//! "RAPIDOMS"  version:u32  dim:u32  max_r:u32
//! preprocess config: len:u32 + UTF-8 key=value text
//! item memory (see ItemMemory::write_to)
//! partition count:u32
//! per partition: charge:u8  block count:u32
//!   per block: count:u32  min_pmz:f64  max_pmz:f64
//!              pmz[count]:f64  ref_id[count]:u32  decoy[count]:u8
//!              title[count]: len:u32 + UTF-8
//!              payload: count * dim/8 bytes
//! ```

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use parking_lot::Mutex;

use super::{Block, BlockKey, BlockMeta, BlockSource, IndexManifest, LibraryIndex, Partition};
use crate::error::{Error, Result};
use crate::hd_encoder::{read_u32, read_u64, read_words, write_words, ItemMemory, WORD_BITS};
use crate::preprocess::PreprocessConfig;

pub const MAGIC: &[u8; 8] = b"RAPIDOMS";
pub const FORMAT_VERSION: u32 = 1;

const MAX_TEXT_LEN: usize = 1 << 24;

fn item_memory_bytes(im: &ItemMemory) -> u64 {
    let words = (im.num_bins() + im.num_levels() + 1) * im.words_per_vector();
    (4 * 3 + 8 + 4 + im.generator().len() + words * 8) as u64
}

fn block_record_bytes(block: &Block) -> u64 {
    let n = block.len() as u64;
    let titles: u64 = block.titles.iter().map(|t| 4 + t.len() as u64).sum();
    4 + 8 + 8 + n * (8 + 4 + 1) + titles + block.payload_bytes()
}

impl LibraryIndex {
    /// Fills `BlockMeta::offset` with the positions [`write_to`] will use.
    ///
    /// [`write_to`]: LibraryIndex::write_to
    pub(super) fn assign_offsets(&mut self) {
        let mut pos = (MAGIC.len() + 4 * 3) as u64
            + 4
            + self.manifest.preprocess.to_kv_text().len() as u64
            + item_memory_bytes(&self.item_memory)
            + 4;
        for part in &mut self.manifest.partitions {
            pos += 1 + 4;
            for (i, meta) in part.blocks.iter_mut().enumerate() {
                meta.offset = pos;
                let key = BlockKey {
                    charge: part.charge,
                    index: i as u32,
                };
                pos += block_record_bytes(&self.blocks[&key]);
            }
        }
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> io::Result<()> {
        let m = &self.manifest;
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&(m.dim as u32).to_le_bytes())?;
        w.write_all(&(m.max_r as u32).to_le_bytes())?;
        let cfg = m.preprocess.to_kv_text();
        w.write_all(&(cfg.len() as u32).to_le_bytes())?;
        w.write_all(cfg.as_bytes())?;
        self.item_memory.write_to(w)?;
        w.write_all(&(m.partitions.len() as u32).to_le_bytes())?;
        for part in &m.partitions {
            w.write_all(&[part.charge])?;
            w.write_all(&(part.blocks.len() as u32).to_le_bytes())?;
            for i in 0..part.blocks.len() {
                let key = BlockKey {
                    charge: part.charge,
                    index: i as u32,
                };
                write_block(w, &self.blocks[&key])?;
            }
        }
        w.flush()
    }

    /// Writes the index to `path` through a temporary sibling file and a
    /// rename, so a failed write never leaves a truncated index behind.
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = temp_sibling(path);
        let result = (|| -> io::Result<()> {
            let file = File::create(&tmp)?;
            let mut w = BufWriter::with_capacity(1 << 20, file);
            self.write_to(&mut w)?;
            let file = w.into_inner().map_err(|e| e.into_error())?;
            file.sync_all()?;
            fs::rename(&tmp, path)
        })();
        if result.is_err() {
            let _ = fs::remove_file(&tmp);
        }
        Ok(result?)
    }
}

fn temp_sibling(path: &Path) -> PathBuf {
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "index".into());
    path.with_file_name(format!(".{name}.{}.partial", std::process::id()))
}

fn write_block<W: Write>(w: &mut W, block: &Block) -> io::Result<()> {
    w.write_all(&(block.len() as u32).to_le_bytes())?;
    w.write_all(&block.min_pmz().to_le_bytes())?;
    w.write_all(&block.max_pmz().to_le_bytes())?;
    let mut buf = Vec::with_capacity(block.len() * 13);
    for p in &block.pmz {
        buf.extend_from_slice(&p.to_le_bytes());
    }
    for id in &block.ref_ids {
        buf.extend_from_slice(&id.to_le_bytes());
    }
    buf.extend(block.decoys.iter().map(|&d| u8::from(d)));
    for t in &block.titles {
        buf.extend_from_slice(&(t.len() as u32).to_le_bytes());
        buf.extend_from_slice(t.as_bytes());
    }
    w.write_all(&buf)?;
    write_words(w, block.payload())
}

fn read_f64<R: Read>(r: &mut R) -> io::Result<f64> {
    Ok(f64::from_bits(read_u64(r)?))
}

fn read_text<R: Read>(r: &mut R, what: &str) -> Result<String> {
    let len = read_u32(r)? as usize;
    if len > MAX_TEXT_LEN {
        return Err(Error::Format(format!("{what} length {len} is implausible")));
    }
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|_| Error::Format(format!("{what} is not UTF-8")))
}

fn read_block<R: Read>(r: &mut R, charge: u8, dim: usize, max_r: usize) -> Result<Block> {
    let count = read_u32(r)? as usize;
    if count == 0 || count > max_r {
        return Err(Error::Format(format!(
            "block count {count} outside 1..={max_r}"
        )));
    }
    let min_pmz = read_f64(r)?;
    let max_pmz = read_f64(r)?;
    let mut raw = vec![0u8; count * 8];
    r.read_exact(&mut raw)?;
    let pmz: Vec<f64> = raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let mut raw = vec![0u8; count * 4];
    r.read_exact(&mut raw)?;
    let ref_ids: Vec<u32> = raw
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let mut raw = vec![0u8; count];
    r.read_exact(&mut raw)?;
    let decoys = raw
        .iter()
        .map(|&b| match b {
            0 => Ok(false),
            1 => Ok(true),
            other => Err(Error::Format(format!("decoy flag {other}"))),
        })
        .collect::<Result<Vec<bool>>>()?;
    let titles = (0..count)
        .map(|_| read_text(r, "title"))
        .collect::<Result<Vec<_>>>()?;
    let words = dim / WORD_BITS;
    let payload = read_words(r, count * words)?;
    if pmz[0] != min_pmz || pmz[count - 1] != max_pmz || pmz.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::Format(
            "block PMZ values are not sorted or disagree with its range".into(),
        ));
    }
    Ok(Block::new(
        charge, pmz, ref_ids, decoys, titles, words, payload,
    ))
}

/// Reads a byte stream positioned after the block count/min/max header,
/// skipping the record body.
fn skip_block_body<R: Read + Seek>(r: &mut R, count: usize, dim: usize) -> Result<u64> {
    let fixed = count as i64 * (8 + 4 + 1);
    r.seek_relative(fixed)?;
    let mut titles = 0u64;
    for _ in 0..count {
        let len = read_u32(r)? as i64;
        r.seek_relative(len)?;
        titles += 4 + len as u64;
    }
    let payload = (count * dim / 8) as i64;
    r.seek_relative(payload)?;
    Ok(fixed as u64 + titles + payload as u64)
}

struct Header {
    manifest: IndexManifest,
    item_memory: ItemMemory,
}

fn read_header<R: Read>(r: &mut R) -> Result<(u32, usize, usize, PreprocessConfig, ItemMemory)> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)
        .map_err(|_| Error::Format("file too short for an index header".into()))?;
    if &magic != MAGIC {
        return Err(Error::Format("not an index file (bad magic bytes)".into()));
    }
    let version = read_u32(r)?;
    if version != FORMAT_VERSION {
        return Err(Error::Version {
            found: version,
            supported: FORMAT_VERSION,
        });
    }
    let dim = read_u32(r)? as usize;
    let max_r = read_u32(r)? as usize;
    if dim == 0 || !dim.is_multiple_of(WORD_BITS) || max_r == 0 {
        return Err(Error::Format(format!(
            "bad dimension {dim} or max_r {max_r}"
        )));
    }
    let cfg = PreprocessConfig::from_kv_text(&read_text(r, "config block")?)?;
    let im = ItemMemory::read_from(r)?;
    if im.dim() != dim {
        return Err(Error::Format(format!(
            "item memory dimension {} differs from index dimension {dim}",
            im.dim()
        )));
    }
    Ok((version, dim, max_r, cfg, im))
}

fn scan_manifest<R: Read + Seek>(r: &mut R) -> Result<Header> {
    let (_, dim, max_r, preprocess, item_memory) = read_header(r)?;
    let mut pos = r.stream_position()?;
    let num_partitions = read_u32(r)?;
    pos += 4;
    let mut partitions: Vec<Partition> = Vec::new();
    for _ in 0..num_partitions {
        let mut charge = [0u8; 1];
        r.read_exact(&mut charge)?;
        let charge = charge[0];
        if partitions.last().is_some_and(|p| p.charge >= charge) {
            return Err(Error::Format("charge partitions out of order".into()));
        }
        let num_blocks = read_u32(r)?;
        pos += 5;
        let mut blocks: Vec<BlockMeta> = Vec::new();
        for _ in 0..num_blocks {
            let offset = pos;
            let count = read_u32(r)?;
            let min_pmz = read_f64(r)?;
            let max_pmz = read_f64(r)?;
            if count == 0
                || count as usize > max_r
                || min_pmz.partial_cmp(&max_pmz).is_none_or(|o| o.is_gt())
            {
                return Err(Error::Format(format!(
                    "bad block header at offset {offset}"
                )));
            }
            if blocks.last().is_some_and(|b| b.max_pmz > min_pmz) {
                return Err(Error::Format(format!(
                    "overlapping blocks at offset {offset}"
                )));
            }
            pos += 20 + skip_block_body(r, count as usize, dim)?;
            blocks.push(BlockMeta {
                offset,
                count,
                min_pmz,
                max_pmz,
            });
        }
        partitions.push(Partition { charge, blocks });
    }
    // Skipped bodies are seeked over, so a short file only shows up here.
    let end = r.stream_position()?;
    let len = r.seek(SeekFrom::End(0))?;
    if end > len {
        return Err(Error::Format("index file is truncated".into()));
    }
    if end < len {
        return Err(Error::Format("trailing bytes after the last block".into()));
    }
    Ok(Header {
        manifest: IndexManifest {
            dim,
            max_r,
            preprocess,
            partitions,
        },
        item_memory,
    })
}

/// A persisted index opened for block-at-a-time reads. Only the manifest and
/// item memory are held in memory.
pub struct IndexFile {
    path: PathBuf,
    manifest: IndexManifest,
    item_memory: ItemMemory,
    file: Mutex<BufReader<File>>,
}

impl std::fmt::Debug for IndexFile {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("IndexFile")
            .field("path", &self.path)
            .field("blocks", &self.manifest.num_blocks())
            .finish()
    }
}

impl IndexFile {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let mut reader = BufReader::with_capacity(1 << 16, File::open(&path)?);
        let header = scan_manifest(&mut reader).map_err(|e| match e {
            Error::Io(io) if io.kind() == io::ErrorKind::UnexpectedEof => {
                Error::Format("index file is truncated".into())
            }
            other => other,
        })?;
        Ok(Self {
            path,
            manifest: header.manifest,
            item_memory: header.item_memory,
            file: Mutex::new(reader),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn read_block(&self, key: BlockKey) -> Result<Block> {
        let meta = self
            .manifest
            .block_meta(key)
            .ok_or_else(|| Error::BlockIo {
                key,
                source: io::Error::new(io::ErrorKind::NotFound, "block not in manifest"),
            })?;
        let mut file = self.file.lock();
        let result = file
            .seek(SeekFrom::Start(meta.offset))
            .map_err(Error::from)
            .and_then(|_| {
                read_block(
                    &mut *file,
                    key.charge,
                    self.manifest.dim,
                    self.manifest.max_r,
                )
            });
        result.map_err(|e| match e {
            Error::Io(source) => Error::BlockIo { key, source },
            other => other,
        })
    }

    /// Reads every block into memory.
    pub fn load_all(&self) -> Result<LibraryIndex> {
        let mut blocks = BTreeMap::new();
        for key in self.manifest.keys() {
            blocks.insert(key, Arc::new(self.read_block(key)?));
        }
        Ok(LibraryIndex::from_parts(
            self.manifest.clone(),
            self.item_memory.clone(),
            blocks,
        ))
    }
}

impl BlockSource for IndexFile {
    fn manifest(&self) -> &IndexManifest {
        &self.manifest
    }

    fn item_memory(&self) -> &ItemMemory {
        &self.item_memory
    }

    fn load_block(&self, key: BlockKey) -> Result<Arc<Block>> {
        self.read_block(key).map(Arc::new)
    }
}

#[cfg(test)]
mod tests {
    use super::super::tests::random_refs;
    use super::*;

    fn build(n: usize, charges: &[u8], max_r: usize) -> LibraryIndex {
        let im = ItemMemory::generate(8, 4, 128, 3).unwrap();
        LibraryIndex::build(
            random_refs(n, charges, 128, 5),
            max_r,
            PreprocessConfig::default(),
            im,
        )
        .unwrap()
    }

    #[test]
    fn offsets_match_written_layout() {
        let idx = build(700, &[2, 3], 100);
        let mut buf = Vec::new();
        idx.write_to(&mut buf).unwrap();
        let header = scan_manifest(&mut io::Cursor::new(&buf)).unwrap();
        assert_eq!(&header.manifest, idx.manifest());
        assert_eq!(&header.item_memory, idx.item_memory());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("lib.idx");
        let idx = build(900, &[1, 2, 4], 64);
        idx.save(&path).unwrap();
        let file = IndexFile::open(&path).unwrap();
        assert_eq!(file.load_all().unwrap(), idx);
        assert_eq!(
            fs::read_dir(dir.path()).unwrap().count(),
            1,
            "temp file left behind"
        );
    }

    #[test]
    fn empty_index_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.idx");
        let idx = build(0, &[2], 64);
        idx.save(&path).unwrap();
        let file = IndexFile::open(&path).unwrap();
        assert_eq!(file.manifest().num_blocks(), 0);
    }

    #[test]
    fn version_and_magic_checks() {
        let idx = build(10, &[2], 64);
        let mut buf = Vec::new();
        idx.write_to(&mut buf).unwrap();

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v2.idx");
        let mut v2 = buf.clone();
        v2[8..12].copy_from_slice(&2u32.to_le_bytes());
        fs::write(&path, &v2).unwrap();
        assert!(matches!(
            IndexFile::open(&path),
            Err(Error::Version {
                found: 2,
                supported: 1
            })
        ));

        let mut bad = buf.clone();
        bad[0] = b'X';
        fs::write(&path, &bad).unwrap();
        assert!(matches!(IndexFile::open(&path), Err(Error::Format(_))));

        fs::write(&path, &buf[..buf.len() - 3]).unwrap();
        assert!(matches!(IndexFile::open(&path), Err(Error::Format(_))));

        let mut trailing = buf.clone();
        trailing.push(0);
        fs::write(&path, &trailing).unwrap();
        assert!(matches!(IndexFile::open(&path), Err(Error::Format(_))));
    }

    #[test]
    fn identical_inputs_give_identical_bytes() {
        let (mut a, mut b) = (Vec::new(), Vec::new());
        build(500, &[2, 3], 50).write_to(&mut a).unwrap();
        build(500, &[2, 3], 50).write_to(&mut b).unwrap();
        assert_eq!(a, b);
    }
}
