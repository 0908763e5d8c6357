//! Deterministic synthetic libraries and queries with known ground truth.
//!
//! Peaks sit at bin centres and intensities are drawn on the quantization
//! grid (`I = 10000 * (level / (q-1))^2`, matching the default square-root
//! transform), so a perturbation of one level in the raw data is exactly a
//! one-level change after preprocessing.

use std::io::{self, Write};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::spectra_io::{Peak, Spectrum, DEFAULT_DECOY_PREFIX};

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    /// Library size including decoys.
    pub n_refs: usize,
    pub n_queries: usize,
    pub peaks_per_spectrum: usize,
    /// Probability that a non-base peak of a query moves one intensity level.
    pub perturb_rate: f64,
    /// Probability that a non-base peak of a query is dropped.
    pub dropout_rate: f64,
    pub decoy_fraction: f64,
    /// Probability that a query precursor is shifted by up to `max_shift_da`.
    pub shift_fraction: f64,
    pub max_shift_da: f64,
    pub pmz_min: f64,
    pub pmz_max: f64,
    pub fragment_mz_min: f64,
    pub fragment_mz_max: f64,
    pub charges: Vec<u8>,
    pub bin_size: f64,
    pub mz_min: f64,
    pub levels: u32,
    pub decoy_prefix: String,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_refs: 1000,
            n_queries: 100,
            peaks_per_spectrum: 40,
            perturb_rate: 0.0,
            dropout_rate: 0.0,
            decoy_fraction: 0.0,
            shift_fraction: 0.0,
            max_shift_da: 50.0,
            pmz_min: 400.0,
            pmz_max: 1600.0,
            fragment_mz_min: 100.0,
            fragment_mz_max: 2000.0,
            charges: vec![2, 3],
            bin_size: 0.05,
            mz_min: 50.0,
            levels: 64,
            decoy_prefix: DEFAULT_DECOY_PREFIX.to_string(),
            seed: 1,
        }
    }
}

/// Lowest level whose intensity survives a 1% relative floor.
const MIN_LEVEL_FRACTION: f64 = 0.1;

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let prob = |p: f64| (0.0..=1.0).contains(&p);
        if !(prob(self.perturb_rate)
            && prob(self.dropout_rate)
            && prob(self.decoy_fraction)
            && prob(self.shift_fraction))
        {
            return Err(Error::Config(
                "rates and fractions must lie in [0, 1]".into(),
            ));
        }
        if self.peaks_per_spectrum == 0 {
            return Err(Error::Config(
                "peaks per spectrum must be at least 1".into(),
            ));
        }
        if !(self.pmz_min > 0.0 && self.pmz_min <= self.pmz_max) {
            return Err(Error::Config(
                "precursor range must be positive and ordered".into(),
            ));
        }
        if self.charges.is_empty() || self.charges.iter().any(|&z| z == 0 || z > 8) {
            return Err(Error::Config("charges must be in 1..=8".into()));
        }
        if self.levels < 16 {
            return Err(Error::Config(
                "synthetic data needs at least 16 levels".into(),
            ));
        }
        if self.fragment_bins() < self.peaks_per_spectrum as u64 {
            return Err(Error::Config(
                "fragment range holds fewer bins than peaks".into(),
            ));
        }
        if self.max_shift_da < 0.0 || self.max_shift_da >= self.pmz_min {
            return Err(Error::Config(
                "max shift must be non-negative and below pmz_min".into(),
            ));
        }
        Ok(())
    }

    fn first_bin(&self) -> u64 {
        ((self.fragment_mz_min - self.mz_min) / self.bin_size).ceil() as u64
    }

    fn fragment_bins(&self) -> u64 {
        let last = ((self.fragment_mz_max - self.mz_min) / self.bin_size).floor() as u64;
        last.saturating_sub(self.first_bin())
    }

    fn min_level(&self) -> u32 {
        (MIN_LEVEL_FRACTION * f64::from(self.levels - 1)).ceil() as u32 + 1
    }

    fn top_level(&self) -> u32 {
        self.levels - 1
    }

    fn bin_center(&self, bin: u64) -> f64 {
        let mz = self.mz_min + (bin as f64 + 0.5) * self.bin_size;
        (mz * 1e4).round() / 1e4
    }

    fn intensity(&self, level: u32) -> f64 {
        let x = f64::from(level) / f64::from(self.top_level());
        10_000.0 * x * x
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SynthData {
    pub library: Vec<Spectrum>,
    pub queries: Vec<Spectrum>,
    /// `(query title, source reference title)`.
    pub truth: Vec<(String, String)>,
}

/// A spectrum kept as `(bin, level)` pairs; the first entry is the base peak.
struct Template {
    entries: Vec<(u64, u32)>,
    precursor_mz: f64,
    charge: u8,
}

fn random_bins(cfg: &SynthConfig, rng: &mut ChaCha8Rng, n: usize) -> Vec<u64> {
    let span = cfg.fragment_bins();
    let mut bins: Vec<u64> = Vec::with_capacity(n);
    while bins.len() < n {
        let b = cfg.first_bin() + rng.gen_range(0..span);
        if !bins.contains(&b) {
            bins.push(b);
        }
    }
    bins
}

fn random_template(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Template {
    let bins = random_bins(cfg, rng, cfg.peaks_per_spectrum);
    let entries = bins
        .into_iter()
        .enumerate()
        .map(|(i, b)| {
            let level = if i == 0 {
                cfg.top_level()
            } else {
                rng.gen_range(cfg.min_level()..cfg.top_level())
            };
            (b, level)
        })
        .collect();
    let precursor_mz = (rng.gen_range(cfg.pmz_min..=cfg.pmz_max) * 1e5).round() / 1e5;
    Template {
        entries,
        precursor_mz,
        charge: cfg.charges[rng.gen_range(0..cfg.charges.len())],
    }
}

fn render(cfg: &SynthConfig, t: &Template, id: u32, title: String, is_decoy: bool) -> Spectrum {
    let mut peaks: Vec<Peak> = t
        .entries
        .iter()
        .map(|&(b, l)| Peak::new(cfg.bin_center(b), cfg.intensity(l)))
        .collect();
    peaks.sort_by(|a, b| a.mz.total_cmp(&b.mz));
    Spectrum {
        id,
        title,
        precursor_mz: t.precursor_mz,
        charge: t.charge,
        peaks,
        is_decoy,
    }
}

fn perturb(cfg: &SynthConfig, src: &Template, rng: &mut ChaCha8Rng) -> Template {
    let (lo, hi) = (cfg.min_level(), cfg.top_level() - 1);
    let mut entries = vec![src.entries[0]];
    for &(bin, level) in &src.entries[1..] {
        // Draw both decisions for every peak so the stream does not depend on outcomes.
        let drop = rng.gen_bool(cfg.dropout_rate);
        let nudge = rng.gen_bool(cfg.perturb_rate);
        let up = rng.gen_bool(0.5);
        if drop {
            continue;
        }
        let level = if nudge {
            match (up && level < hi) || level == lo {
                true => level + 1,
                false => level - 1,
            }
        } else {
            level
        };
        entries.push((bin, level));
    }
    let shift = rng.gen_bool(cfg.shift_fraction);
    let delta = rng.gen_range(-1.0..=1.0) * cfg.max_shift_da;
    let precursor_mz = if shift {
        ((src.precursor_mz + delta) * 1e5).round() / 1e5
    } else {
        src.precursor_mz
    };
    Template {
        entries,
        precursor_mz,
        charge: src.charge,
    }
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthData> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n_decoys = (cfg.n_refs as f64 * cfg.decoy_fraction).round() as usize;
    let n_targets = cfg.n_refs - n_decoys;

    let targets: Vec<Template> = (0..n_targets)
        .map(|_| random_template(cfg, &mut rng))
        .collect();
    let mut library: Vec<Spectrum> = targets
        .iter()
        .enumerate()
        .map(|(i, t)| render(cfg, t, i as u32, format!("ref_{i}"), false))
        .collect();
    for d in 0..n_decoys {
        // Decoys keep a target's precursor and intensities but move every peak.
        let template = match targets.get(d % n_targets.max(1)) {
            Some(src) => {
                let bins = random_bins(cfg, &mut rng, src.entries.len());
                Template {
                    entries: bins
                        .into_iter()
                        .zip(src.entries.iter().map(|e| e.1))
                        .collect(),
                    precursor_mz: src.precursor_mz,
                    charge: src.charge,
                }
            }
            None => random_template(cfg, &mut rng),
        };
        let id = library.len() as u32;
        library.push(render(
            cfg,
            &template,
            id,
            format!("{}ref_{d}", cfg.decoy_prefix),
            true,
        ));
    }

    let mut sources: Vec<usize> = (0..n_targets).collect();
    if cfg.n_queries <= n_targets {
        sources.partial_shuffle(&mut rng, cfg.n_queries);
        sources.truncate(cfg.n_queries);
    } else if n_targets > 0 {
        sources = (0..cfg.n_queries)
            .map(|_| rng.gen_range(0..n_targets))
            .collect();
    } else {
        sources.clear();
    }

    let mut queries = Vec::with_capacity(sources.len());
    let mut truth = Vec::with_capacity(sources.len());
    for (qi, &src) in sources.iter().enumerate() {
        let t = perturb(cfg, &targets[src], &mut rng);
        let title = format!("query_{qi}");
        truth.push((title.clone(), library[src].title.clone()));
        queries.push(render(cfg, &t, qi as u32, title, false));
    }

    Ok(SynthData {
        library,
        queries,
        truth,
    })
}

pub fn write_truth<W: Write>(truth: &[(String, String)], mut w: W) -> io::Result<()> {
    writeln!(w, "query_title\tref_title")?;
    for (q, r) in truth {
        writeln!(w, "{q}\t{r}")?;
    }
    w.flush()
}

pub fn read_truth(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.is_empty() {
            continue;
        }
        let (q, r) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(i + 1, "expected query_title<TAB>ref_title"))?;
        out.push((q.to_string(), r.to_string()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preprocess::{preprocess, PreprocessConfig};
    use crate::spectra_io::{parse_mgf, write_mgf};

    #[test]
    fn empty_library() {
        let data = generate(&SynthConfig {
            n_refs: 0,
            n_queries: 5,
            ..Default::default()
        })
        .unwrap();
        assert!(data.library.is_empty() && data.queries.is_empty());
        let mut buf = Vec::new();
        write_mgf(&data.library, &mut buf).unwrap();
        assert!(parse_mgf(&buf[..], "DECOY_").unwrap().spectra.is_empty());
    }

    #[test]
    fn zero_perturbation_copies_references() {
        let data = generate(&SynthConfig {
            n_refs: 50,
            n_queries: 20,
            ..Default::default()
        })
        .unwrap();
        for ((q, (_, rt)), qs) in data.queries.iter().zip(&data.truth).zip(&data.queries) {
            let r = data.library.iter().find(|r| &r.title == rt).unwrap();
            let mut a = Vec::new();
            let mut b = Vec::new();
            write_mgf(std::slice::from_ref(q), &mut a).unwrap();
            write_mgf(std::slice::from_ref(r), &mut b).unwrap();
            let strip = |v: Vec<u8>| {
                String::from_utf8(v)
                    .unwrap()
                    .lines()
                    .filter(|l| !l.starts_with("TITLE="))
                    .collect::<Vec<_>>()
                    .join("\n")
            };
            assert_eq!(strip(a), strip(b));
            assert_eq!(qs.title, q.title);
        }
    }

    #[test]
    fn deterministic() {
        let cfg = SynthConfig {
            n_refs: 200,
            n_queries: 50,
            perturb_rate: 0.1,
            dropout_rate: 0.05,
            decoy_fraction: 0.2,
            shift_fraction: 0.3,
            ..Default::default()
        };
        assert_eq!(generate(&cfg).unwrap(), generate(&cfg).unwrap());
        let other = generate(&SynthConfig {
            seed: 2,
            ..cfg.clone()
        })
        .unwrap();
        assert_ne!(generate(&cfg).unwrap(), other);
    }

    #[test]
    fn decoys_are_flagged_and_counted() {
        let data = generate(&SynthConfig {
            n_refs: 100,
            decoy_fraction: 0.25,
            ..Default::default()
        })
        .unwrap();
        assert_eq!(data.library.iter().filter(|s| s.is_decoy).count(), 25);
        assert!(data
            .library
            .iter()
            .filter(|s| s.is_decoy)
            .all(|s| s.title.starts_with("DECOY_")));
        assert!(data.truth.iter().all(|(_, r)| !r.starts_with("DECOY_")));
    }

    #[test]
    fn levels_survive_preprocessing() {
        let cfg = SynthConfig {
            n_refs: 30,
            ..Default::default()
        };
        let data = generate(&cfg).unwrap();
        let pcfg = PreprocessConfig::default();
        for s in &data.library {
            let q = preprocess(s, &pcfg);
            assert_eq!(
                q.entries.len(),
                cfg.peaks_per_spectrum,
                "no peak lost to the floor"
            );
            for (p, (bin, level)) in s.peaks.iter().zip(&q.entries) {
                assert_eq!(pcfg.bin_of(p.mz), *bin);
                let expected = (p.intensity / 10_000.0).sqrt() * 63.0;
                assert!((expected - f64::from(*level)).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn perturbation_moves_one_level() {
        let cfg = SynthConfig {
            n_refs: 100,
            n_queries: 100,
            perturb_rate: 0.5,
            ..Default::default()
        };
        let data = generate(&cfg).unwrap();
        let pcfg = PreprocessConfig::default();
        for (q, (_, rt)) in data.queries.iter().zip(&data.truth) {
            let r = data.library.iter().find(|r| &r.title == rt).unwrap();
            let (qa, ra) = (preprocess(q, &pcfg), preprocess(r, &pcfg));
            assert_eq!(qa.entries.len(), ra.entries.len());
            for (a, b) in qa.entries.iter().zip(&ra.entries) {
                assert_eq!(a.0, b.0);
                assert!(a.1.abs_diff(b.1) <= 1);
            }
        }
    }

    #[test]
    fn truth_round_trip() {
        let truth = vec![("q0".to_string(), "r1".to_string())];
        let mut buf = Vec::new();
        write_truth(&truth, &mut buf).unwrap();
        assert_eq!(
            read_truth(std::str::from_utf8(&buf).unwrap()).unwrap(),
            truth
        );
    }
}
