//! Target-decoy FDR filtering of best-per-query PSMs.

use std::collections::BTreeSet;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::oms_search::Psm;

#[derive(Clone, Debug, PartialEq)]
pub struct FdrConfig {
    pub threshold: f64,
    /// Estimate FDR as `(decoys + 1) / targets` instead of `decoys / targets`.
    pub conservative_plus_one: bool,
}

impl Default for FdrConfig {
    fn default() -> Self {
        Self {
            threshold: 0.01,
            conservative_plus_one: false,
        }
    }
}

impl FdrConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::Config(format!(
                "FDR threshold {} must lie strictly between 0 and 1",
                self.threshold
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FdrResult {
    /// Target PSMs of the accepted prefix, in rank order.
    pub accepted: Vec<Psm>,
    /// Score of the last PSM in the accepted prefix.
    pub cutoff: Option<u32>,
    pub fdr: f64,
    /// Length of the accepted prefix including decoys.
    pub prefix_len: usize,
    pub decoys_in_prefix: usize,
}

/// Rank order: score descending, decoys ahead of targets at equal score,
/// then query id and ref id for a total order.
pub fn rank_psms(psms: &[Psm]) -> Vec<Psm> {
    let mut ranked = psms.to_vec();
    ranked.sort_by(|a, b| {
        b.score
            .cmp(&a.score)
            .then(b.is_decoy.cmp(&a.is_decoy))
            .then(a.query_id.cmp(&b.query_id))
            .then(a.ref_id.cmp(&b.ref_id))
    });
    ranked
}

/// Accepts the longest ranked prefix whose decoy/target ratio stays within
/// the threshold and returns its targets.
pub fn filter_fdr(psms: &[Psm], cfg: &FdrConfig) -> FdrResult {
    let ranked = rank_psms(psms);
    let extra = if cfg.conservative_plus_one { 1.0 } else { 0.0 };
    let (mut decoys, mut targets) = (0usize, 0usize);
    let mut best = (0usize, 0usize, 0.0f64);
    for (i, p) in ranked.iter().enumerate() {
        if p.is_decoy {
            decoys += 1;
        } else {
            targets += 1;
        }
        let fdr = (decoys as f64 + extra) / targets.max(1) as f64;
        if fdr <= cfg.threshold {
            best = (i + 1, decoys, fdr);
        }
    }
    let (prefix_len, decoys_in_prefix, fdr) = best;
    let cutoff = prefix_len.checked_sub(1).map(|i| ranked[i].score);
    let accepted = ranked
        .into_iter()
        .take(prefix_len)
        .filter(|p| !p.is_decoy)
        .collect();
    FdrResult {
        accepted,
        cutoff,
        fdr,
        prefix_len,
        decoys_in_prefix,
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct FdrSummary {
    pub standard_ids: usize,
    pub open_ids: usize,
    /// Queries accepted in both modes.
    pub overlap: usize,
    /// Queries accepted in either mode.
    pub union: usize,
    pub standard_cutoff: Option<u32>,
    pub open_cutoff: Option<u32>,
}

impl FdrSummary {
    pub fn to_kv_text(&self) -> String {
        let cut = |c: Option<u32>| c.map_or_else(|| "none".to_string(), |v| v.to_string());
        format!(
            "standard_ids={}\nopen_ids={}\noverlap={}\nunion={}\nstandard_cutoff={}\nopen_cutoff={}\n",
            self.standard_ids,
            self.open_ids,
            self.overlap,
            self.union,
            cut(self.standard_cutoff),
            cut(self.open_cutoff)
        )
    }
}

pub fn fdr_summary(standard: &FdrResult, open: &FdrResult) -> FdrSummary {
    let s: BTreeSet<u32> = standard.accepted.iter().map(|p| p.query_id).collect();
    let o: BTreeSet<u32> = open.accepted.iter().map(|p| p.query_id).collect();
    FdrSummary {
        standard_ids: s.len(),
        open_ids: o.len(),
        overlap: s.intersection(&o).count(),
        union: s.union(&o).count(),
        standard_cutoff: standard.cutoff,
        open_cutoff: open.cutoff,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oms_search::SearchMode;
    use proptest::prelude::*;

    fn psm(query_id: u32, score: u32, is_decoy: bool) -> Psm {
        Psm {
            query_id,
            query_title: String::new(),
            ref_id: query_id,
            ref_title: String::new(),
            mode: SearchMode::Open,
            score,
            mass_diff: 0.0,
            is_decoy,
        }
    }

    #[test]
    fn one_decoy_in_two_hundred_passes() {
        let mut psms: Vec<Psm> = (0..199).map(|i| psm(i, 4000 - i, false)).collect();
        psms.push(psm(199, 3000, true));
        let r = filter_fdr(&psms, &FdrConfig::default());
        assert_eq!(r.prefix_len, 200);
        assert_eq!(r.accepted.len(), 199);
        assert!((r.fdr - 1.0 / 199.0).abs() < 1e-12);
        assert_eq!(r.cutoff, Some(3000));
    }

    #[test]
    fn second_decoy_ends_prefix() {
        // 150 targets with decoys ranked 60th and 120th.
        let psms: Vec<Psm> = (0..152)
            .map(|i| psm(i, 5000 - i, i == 59 || i == 119))
            .collect();
        let r = filter_fdr(&psms, &FdrConfig::default());
        // Prefix through 119 holds 2 decoys / 118 targets = 0.0169 > 0.01.
        assert_eq!(r.prefix_len, 119);
        assert_eq!(r.decoys_in_prefix, 1);
        assert_eq!(r.accepted.len(), 118);
        assert!(r.accepted.iter().all(|p| !p.is_decoy));
    }

    #[test]
    fn empty_input() {
        let r = filter_fdr(&[], &FdrConfig::default());
        assert!(r.accepted.is_empty());
        assert_eq!(r.cutoff, None);
    }

    #[test]
    fn ties_rank_decoys_first() {
        let psms = vec![psm(0, 100, false), psm(1, 100, true)];
        let ranked = rank_psms(&psms);
        assert!(ranked[0].is_decoy);
        let r = filter_fdr(
            &psms,
            &FdrConfig {
                threshold: 0.5,
                ..Default::default()
            },
        );
        assert!(r.accepted.is_empty());
    }

    #[test]
    fn plus_one_is_stricter() {
        let psms: Vec<Psm> = (0..50).map(|i| psm(i, 1000 - i, false)).collect();
        let plain = filter_fdr(&psms, &FdrConfig::default());
        assert_eq!(plain.accepted.len(), 50);
        let strict = filter_fdr(
            &psms,
            &FdrConfig {
                threshold: 0.01,
                conservative_plus_one: true,
            },
        );
        // 1/50 > 0.01 for every prefix.
        assert!(strict.accepted.is_empty());
    }

    #[test]
    fn invalid_threshold() {
        for t in [0.0, 1.0, -0.1, f64::NAN] {
            assert!(FdrConfig {
                threshold: t,
                ..Default::default()
            }
            .validate()
            .is_err());
        }
    }

    #[test]
    fn summary_counts() {
        let empty = filter_fdr(&[], &FdrConfig::default());
        assert_eq!(fdr_summary(&empty, &empty), FdrSummary::default());

        let std_psms: Vec<Psm> = (0..10).map(|i| psm(i, 500, false)).collect();
        let open_psms: Vec<Psm> = (0..25).map(|i| psm(i, 400, false)).collect();
        let s = filter_fdr(&std_psms, &FdrConfig::default());
        let o = filter_fdr(&open_psms, &FdrConfig::default());
        let sum = fdr_summary(&s, &o);
        assert_eq!(sum.overlap, 10);
        assert_eq!(sum.union, 25);
        assert_eq!(sum.standard_cutoff, Some(500));
    }

    fn arb_psms() -> impl Strategy<Value = Vec<Psm>> {
        prop::collection::vec((0u32..60, prop::bool::weighted(0.1)), 0..300).prop_map(|v| {
            v.into_iter()
                .enumerate()
                .map(|(i, (s, d))| psm(i as u32, s, d))
                .collect()
        })
    }

    proptest! {
        #[test]
        fn maximal_and_decoy_free(psms in arb_psms(), t in 0.005f64..0.5) {
            let cfg = FdrConfig { threshold: t, ..Default::default() };
            let r = filter_fdr(&psms, &cfg);
            prop_assert!(r.accepted.iter().all(|p| !p.is_decoy));
            prop_assert!(r.fdr <= t);
            let ranked = rank_psms(&psms);
            // Every longer prefix violates the threshold.
            let mut d = 0usize;
            let mut tg = 0usize;
            for (i, p) in ranked.iter().enumerate() {
                if p.is_decoy { d += 1 } else { tg += 1 }
                if i + 1 > r.prefix_len {
                    prop_assert!(d as f64 / tg.max(1) as f64 > t);
                }
            }
        }

        #[test]
        fn threshold_monotone(psms in arb_psms(), a in 0.005f64..0.5, b in 0.005f64..0.5) {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            let n_lo = filter_fdr(&psms, &FdrConfig { threshold: lo, ..Default::default() }).accepted.len();
            let n_hi = filter_fdr(&psms, &FdrConfig { threshold: hi, ..Default::default() }).accepted.len();
            prop_assert!(n_lo <= n_hi);
        }

        #[test]
        fn order_of_input_is_irrelevant(psms in arb_psms(), seed in any::<u64>()) {
            use rand::{seq::SliceRandom, SeedableRng};
            let mut shuffled = psms.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let cfg = FdrConfig::default();
            let key = |r: FdrResult| {
                let mut v: Vec<(u32, u32)> = r.accepted.iter().map(|p| (p.query_id, p.score)).collect();
                v.sort();
                v
            };
            prop_assert_eq!(key(filter_fdr(&psms, &cfg)), key(filter_fdr(&shuffled, &cfg)));
        }
    }
}
