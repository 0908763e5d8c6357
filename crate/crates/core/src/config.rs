//! Run configuration merged from defaults, a `key=value` file and flags.
//!
//! Keys use the long flag spelling without dashes in front (`bin-size`,
//! `open-tol-da`, ...); underscores are accepted in place of dashes.

use std::collections::BTreeSet;
use std::path::Path;

use crate::error::{Error, Result};
use crate::fdr_filter::FdrConfig;
use crate::hd_encoder::{ItemMemory, DEFAULT_DIM, DEFAULT_FACTOR};
use crate::library_index::{IndexManifest, DEFAULT_MAX_R};
use crate::oms_search::SearchConfig;
use crate::preprocess::PreprocessConfig;
use crate::spectra_io::DEFAULT_DECOY_PREFIX;

pub const CONFIG_ENV_VAR: &str = "RAPIDOMS_CONFIG";

pub const DEFAULT_SEED: u64 = 42;

pub const DEFAULT_CACHE_BUDGET_BYTES: u64 = 1 << 30;

/// Keys that determine how spectra become hypervectors. At search time these
/// come from the index; an explicit differing value is an incompatibility.
pub const ENCODING_KEYS: &[&str] = &[
    "bin-size",
    "mz-min",
    "mz-max",
    "levels",
    "dim",
    "seed",
    "rel-intensity-floor",
    "intensity-transform",
    "drop-level-zero",
];

pub const KEYS: &[&str] = &[
    "bin-size",
    "mz-min",
    "mz-max",
    "levels",
    "dim",
    "seed",
    "rel-intensity-floor",
    "intensity-transform",
    "drop-level-zero",
    "factor",
    "max-r",
    "cache-budget-bytes",
    "q-block",
    "max-q",
    "tol-ppm",
    "open-tol-da",
    "count-comparisons",
    "workers",
    "fdr",
    "conservative-plus-one",
    "decoy-prefix",
];

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub preprocess: PreprocessConfig,
    pub dim: usize,
    pub seed: u64,
    pub factor: usize,
    pub max_r: usize,
    pub cache_budget_bytes: u64,
    pub search: SearchConfig,
    pub fdr: FdrConfig,
    pub decoy_prefix: String,
    explicit: BTreeSet<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            preprocess: PreprocessConfig::default(),
            dim: DEFAULT_DIM,
            seed: DEFAULT_SEED,
            factor: DEFAULT_FACTOR,
            max_r: DEFAULT_MAX_R,
            cache_budget_bytes: DEFAULT_CACHE_BUDGET_BYTES,
            search: SearchConfig::default(),
            fdr: FdrConfig::default(),
            decoy_prefix: DEFAULT_DECOY_PREFIX.to_string(),
            explicit: BTreeSet::new(),
        }
    }
}

fn normalize_key(key: &str) -> String {
    key.trim()
        .trim_start_matches("--")
        .replace('_', "-")
        .to_ascii_lowercase()
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("invalid value {value:?} for {key}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "on" => Ok(true),
        "0" | "false" | "no" | "off" => Ok(false),
        _ => Err(Error::Config(format!(
            "invalid boolean {value:?} for {key}"
        ))),
    }
}

impl RunConfig {
    /// Sets one key. Later calls override earlier ones, which is how the
    /// defaults < file < flags precedence is realized.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = normalize_key(key);
        match key.as_str() {
            "bin-size" => self.preprocess.bin_size = parse(&key, value)?,
            "mz-min" => self.preprocess.mz_min = parse(&key, value)?,
            "mz-max" => self.preprocess.mz_max = parse(&key, value)?,
            "levels" => self.preprocess.num_levels = parse(&key, value)?,
            "rel-intensity-floor" => self.preprocess.rel_intensity_floor = parse(&key, value)?,
            "intensity-transform" => self.preprocess.intensity_transform = value.parse()?,
            "drop-level-zero" => self.preprocess.drop_level_zero = parse_bool(&key, value)?,
            "dim" => self.dim = parse(&key, value)?,
            "seed" => self.seed = parse(&key, value)?,
            "factor" => self.factor = parse(&key, value)?,
            "max-r" => self.max_r = parse(&key, value)?,
            "cache-budget-bytes" => self.cache_budget_bytes = parse(&key, value)?,
            "q-block" => self.search.q_block = parse(&key, value)?,
            "max-q" => self.search.max_q = parse(&key, value)?,
            "tol-ppm" => self.search.tol_ppm = parse(&key, value)?,
            "open-tol-da" => self.search.open_tol_da = parse(&key, value)?,
            "count-comparisons" => self.search.count_comparisons = parse_bool(&key, value)?,
            "workers" => self.search.workers = parse(&key, value)?,
            "fdr" => self.fdr.threshold = parse(&key, value)?,
            "conservative-plus-one" => self.fdr.conservative_plus_one = parse_bool(&key, value)?,
            "decoy-prefix" => self.decoy_prefix = value.trim().to_string(),
            _ => return Err(Error::Config(format!("unknown configuration key {key:?}"))),
        }
        self.explicit.insert(key);
        Ok(())
    }

    /// Applies `key=value` lines; blank lines and `#` comments are skipped.
    pub fn apply_kv_text(&mut self, text: &str) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!(
                    "config line {}: expected key=value, got {line:?}",
                    i + 1
                ))
            })?;
            self.set(k, v)
                .map_err(|e| Error::Config(format!("config line {}: {e}", i + 1)))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)?;
        self.apply_kv_text(&text)
    }

    pub fn is_explicit(&self, key: &str) -> bool {
        self.explicit.contains(&normalize_key(key))
    }

    pub fn validate(&self) -> Result<()> {
        self.preprocess.validate()?;
        if self.dim == 0 || !self.dim.is_multiple_of(64) {
            return Err(Error::Config(format!(
                "dim {} must be a positive multiple of 64",
                self.dim
            )));
        }
        if self.max_r == 0 {
            return Err(Error::Config("max-r must be at least 1".into()));
        }
        if self.factor == 0 {
            return Err(Error::Config("factor must be at least 1".into()));
        }
        self.search.validate()?;
        self.fdr.validate()
    }

    pub fn generate_item_memory(&self) -> Result<ItemMemory> {
        ItemMemory::generate(
            self.preprocess.num_bins() as usize,
            self.preprocess.num_levels as usize,
            self.dim,
            self.seed,
        )
    }

    /// Rejects explicitly configured encoding values that disagree with the
    /// index, then adopts the index's encoding parameters.
    pub fn adopt_index_encoding(
        &mut self,
        manifest: &IndexManifest,
        im: &ItemMemory,
    ) -> Result<()> {
        let from_index = {
            let mut c = self.clone();
            c.preprocess = manifest.preprocess.clone();
            c.dim = manifest.dim;
            c.seed = im.seed();
            c
        };
        for key in ENCODING_KEYS.iter().filter(|k| self.is_explicit(k)) {
            let (mine, theirs) = (self.encoding_value(key), from_index.encoding_value(key));
            if mine != theirs {
                return Err(Error::Incompatible(format!(
                    "{key}={mine} was requested but the index was built with {key}={theirs}; \
                     encoding parameters are taken from the index"
                )));
            }
        }
        self.preprocess = from_index.preprocess;
        self.dim = from_index.dim;
        self.seed = from_index.seed;
        Ok(())
    }

    fn encoding_value(&self, key: &str) -> String {
        let p = &self.preprocess;
        match key {
            "bin-size" => p.bin_size.to_string(),
            "mz-min" => p.mz_min.to_string(),
            "mz-max" => p.mz_max.to_string(),
            "levels" => p.num_levels.to_string(),
            "rel-intensity-floor" => p.rel_intensity_floor.to_string(),
            "intensity-transform" => p.intensity_transform.to_string(),
            "drop-level-zero" => p.drop_level_zero.to_string(),
            "dim" => self.dim.to_string(),
            "seed" => self.seed.to_string(),
            _ => unreachable!("not an encoding key: {key}"),
        }
    }

    /// Every key with its effective value, one `key=value` per line.
    pub fn to_kv_text(&self) -> String {
        let p = &self.preprocess;
        let s = &self.search;
        let pairs: [(&str, String); 21] = [
            ("bin-size", p.bin_size.to_string()),
            ("mz-min", p.mz_min.to_string()),
            ("mz-max", p.mz_max.to_string()),
            ("levels", p.num_levels.to_string()),
            ("dim", self.dim.to_string()),
            ("seed", self.seed.to_string()),
            ("rel-intensity-floor", p.rel_intensity_floor.to_string()),
            ("intensity-transform", p.intensity_transform.to_string()),
            ("drop-level-zero", p.drop_level_zero.to_string()),
            ("factor", self.factor.to_string()),
            ("max-r", self.max_r.to_string()),
            ("cache-budget-bytes", self.cache_budget_bytes.to_string()),
            ("q-block", s.q_block.to_string()),
            ("max-q", s.max_q.to_string()),
            ("tol-ppm", s.tol_ppm.to_string()),
            ("open-tol-da", s.open_tol_da.to_string()),
            ("count-comparisons", s.count_comparisons.to_string()),
            ("workers", s.workers.to_string()),
            ("fdr", self.fdr.threshold.to_string()),
            (
                "conservative-plus-one",
                self.fdr.conservative_plus_one.to_string(),
            ),
            ("decoy-prefix", self.decoy_prefix.clone()),
        ];
        pairs.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }
}
