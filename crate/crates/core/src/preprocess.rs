//! Peak filtering, m/z binning and intensity quantization.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::spectra_io::Spectrum;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IntensityTransform {
    Linear,
    Sqrt,
}

impl IntensityTransform {
    fn apply(self, v: f64) -> f64 {
        match self {
            IntensityTransform::Linear => v,
            IntensityTransform::Sqrt => v.sqrt(),
        }
    }
}

impl fmt::Display for IntensityTransform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            IntensityTransform::Linear => "linear",
            IntensityTransform::Sqrt => "sqrt",
        })
    }
}

impl FromStr for IntensityTransform {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "linear" => Ok(IntensityTransform::Linear),
            "sqrt" => Ok(IntensityTransform::Sqrt),
            other => Err(Error::Config(format!(
                "unknown intensity transform {other:?}"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PreprocessConfig {
    /// Peaks below this fraction of the base peak are noise.
    pub rel_intensity_floor: f64,
    pub bin_size: f64,
    pub mz_min: f64,
    pub mz_max: f64,
    pub num_levels: u32,
    pub intensity_transform: IntensityTransform,
    pub drop_level_zero: bool,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            rel_intensity_floor: 0.01,
            bin_size: 0.05,
            mz_min: 50.0,
            mz_max: 2500.0,
            num_levels: 64,
            intensity_transform: IntensityTransform::Sqrt,
            drop_level_zero: false,
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<()> {
        let err = |m: &str| Err(Error::Config(m.to_string()));
        if !(0.0..1.0).contains(&self.rel_intensity_floor) {
            return err("rel_intensity_floor must be in [0, 1)");
        }
        if !(self.bin_size > 0.0 && self.bin_size.is_finite()) {
            return err("bin_size must be positive");
        }
        if !(self.mz_min.is_finite() && self.mz_max.is_finite() && self.mz_min < self.mz_max) {
            return err("mz_min must be below mz_max");
        }
        if self.num_levels < 2 {
            return err("num_levels must be at least 2");
        }
        if self.num_bins() > u32::MAX as u64 {
            return err("m/z range / bin_size yields too many bins");
        }
        Ok(())
    }

    /// Number of m/z bins `f`.
    pub fn num_bins(&self) -> u64 {
        ((self.mz_max - self.mz_min) / self.bin_size).ceil() as u64
    }

    pub fn bin_of(&self, mz: f64) -> u32 {
        let bin = ((mz - self.mz_min) / self.bin_size).floor() as u64;
        // floor() of a value just under mz_max can round up to f.
        bin.min(self.num_bins() - 1) as u32
    }

    /// Stable `key=value` rendering stored in index files.
    pub fn to_kv_text(&self) -> String {
        format!(
            "rel_intensity_floor={}\nbin_size={}\nmz_min={}\nmz_max={}\nlevels={}\nintensity_transform={}\ndrop_level_zero={}\n",
            self.rel_intensity_floor,
            self.bin_size,
            self.mz_min,
            self.mz_max,
            self.num_levels,
            self.intensity_transform,
            self.drop_level_zero,
        )
    }

    pub fn from_kv_text(text: &str) -> Result<Self> {
        let mut cfg = PreprocessConfig::default();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Format(format!("bad config line {line:?}")))?;
            let bad = || Error::Format(format!("bad value for {k}: {v:?}"));
            match k {
                "rel_intensity_floor" => cfg.rel_intensity_floor = v.parse().map_err(|_| bad())?,
                "bin_size" => cfg.bin_size = v.parse().map_err(|_| bad())?,
                "mz_min" => cfg.mz_min = v.parse().map_err(|_| bad())?,
                "mz_max" => cfg.mz_max = v.parse().map_err(|_| bad())?,
                "levels" => cfg.num_levels = v.parse().map_err(|_| bad())?,
                "intensity_transform" => cfg.intensity_transform = v.parse()?,
                "drop_level_zero" => cfg.drop_level_zero = v.parse().map_err(|_| bad())?,
                _ => return Err(Error::Format(format!("unknown config key {k:?}"))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct QuantizedSpectrum {
    pub source_id: u32,
    pub precursor_mz: f64,
    pub charge: u8,
    /// `(bin, level)` pairs, bins strictly ascending.
    pub entries: Vec<(u32, u32)>,
}

pub fn filter_peaks(spectrum: &Spectrum, cfg: &PreprocessConfig) -> Spectrum {
    let floor = cfg.rel_intensity_floor * spectrum.max_intensity();
    let peaks = spectrum
        .peaks
        .iter()
        .filter(|p| p.intensity >= floor && p.mz >= cfg.mz_min && p.mz < cfg.mz_max)
        .copied()
        .collect();
    Spectrum {
        peaks,
        ..spectrum.clone()
    }
}

/// Maps peaks to bins, summing intensities that share a bin.
pub fn bin_peaks(spectrum: &Spectrum, cfg: &PreprocessConfig) -> Vec<(u32, f64)> {
    let mut out: Vec<(u32, f64)> = Vec::with_capacity(spectrum.peaks.len());
    for p in &spectrum.peaks {
        let bin = cfg.bin_of(p.mz);
        match out.last_mut() {
            Some((last, sum)) if *last == bin => *sum += p.intensity,
            _ => out.push((bin, p.intensity)),
        }
    }
    // Peaks are m/z-sorted so bins arrive sorted; unsorted input falls back to a merge.
    if out.windows(2).any(|w| w[0].0 >= w[1].0) {
        let mut merged = BTreeMap::new();
        for (bin, v) in out {
            *merged.entry(bin).or_insert(0.0) += v;
        }
        return merged.into_iter().collect();
    }
    out
}

pub fn quantize(
    binned: &[(u32, f64)],
    source: &Spectrum,
    cfg: &PreprocessConfig,
) -> QuantizedSpectrum {
    let transformed: Vec<f64> = binned
        .iter()
        .map(|&(_, v)| cfg.intensity_transform.apply(v))
        .collect();
    let max = transformed.iter().copied().fold(0.0, f64::max);
    let top = f64::from(cfg.num_levels - 1);
    // Without a positive base peak there is no full scale; nothing to encode.
    let entries = if max > 0.0 {
        binned
            .iter()
            .zip(&transformed)
            .map(|(&(bin, _), &t)| (bin, ((t / max) * top).round_ties_even() as u32))
            .filter(|&(_, level)| !(cfg.drop_level_zero && level == 0))
            .collect()
    } else {
        Vec::new()
    };
    QuantizedSpectrum {
        source_id: source.id,
        precursor_mz: source.precursor_mz,
        charge: source.charge,
        entries,
    }
}

/// Full pipeline: filter, bin, quantize.
pub fn preprocess(spectrum: &Spectrum, cfg: &PreprocessConfig) -> QuantizedSpectrum {
    let filtered = filter_peaks(spectrum, cfg);
    let binned = bin_peaks(&filtered, cfg);
    quantize(&binned, spectrum, cfg)
}
