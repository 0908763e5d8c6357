//! Hyperdimensional open modification search over MS/MS spectra.
//!
//! Spectra are binned and quantized, encoded into binary hypervectors and
//! stored in a charge-partitioned, precursor-sorted block index. Queries are
//! scored by Hamming similarity against the blocks inside their precursor
//! windows, and the best standard and open matches are filtered with a
//! target-decoy FDR.

pub mod config;
pub mod error;
pub mod fdr_filter;
pub mod hd_encoder;
pub mod library_index;
pub mod oms_search;
pub mod pipeline;
pub mod preprocess;
pub mod report;
pub mod spectra_io;
pub mod synth;

pub use config::RunConfig;
pub use error::{Error, Result};
pub use fdr_filter::{filter_fdr, FdrConfig, FdrResult, FdrSummary};
pub use hd_encoder::{encode_spectrum, hamming, similarity_score, Hypervector, ItemMemory};
pub use library_index::{
    Block, BlockCache, BlockKey, BlockSource, IndexFile, IndexManifest, LibraryIndex, RefRecord,
};
pub use oms_search::{
    search_all, EncodedQuery, Psm, SearchConfig, SearchMode, SearchOutput, SearchStats,
};
pub use preprocess::{preprocess, PreprocessConfig, QuantizedSpectrum};
pub use spectra_io::{parse_mgf, write_mgf, write_psms, Peak, Spectrum};
