//! Deterministic synthetic methylation data.
//!
//! Sites cluster like CpG dinucleotides: a `+` call at `p` is usually
//! followed by a `-` call at `p + 1`, gaps between sites are mostly short
//! with occasional long jumps, coverage is right-skewed and bounded, and
//! methylation levels are bimodal near 0% and 100%.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Binomial, Distribution, Gamma};

use super::record::{MethRecord, Strand};

const MAX_COVERAGE: u32 = 250;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecordOrder {
    Sorted,
    Shuffled,
}

/// Generates `n` records spread over `chroms` chromosomes (`chr1`..).
/// The same `(n, seed, chroms, order)` always yields the same records.
pub fn generate_synthetic(n: usize, seed: u64, chroms: usize, order: RecordOrder) -> Vec<MethRecord> {
    let chroms = chroms.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coverage_dist = Gamma::new(2.0, 8.0).expect("valid gamma");
    let high = Beta::new(12.0, 1.2).expect("valid beta");
    let low = Beta::new(1.2, 12.0).expect("valid beta");

    let mut out = Vec::with_capacity(n);
    for c in 0..chroms {
        let quota = n / chroms + usize::from(c < n % chroms);
        let name = format!("chr{}", c + 1);
        let mut pos: u64 = 10_000 + rng.gen_range(0..5_000);
        let mut produced = 0;
        while produced < quota {
            let level: f64 = match rng.gen_range(0..100) {
                0..=64 => high.sample(&mut rng),
                65..=94 => low.sample(&mut rng),
                _ => rng.gen(),
            };
            let paired = rng.gen_bool(0.8);
            for (offset, strand) in [(0u64, Strand::Plus), (1, Strand::Minus)] {
                if produced == quota || (offset == 1 && !paired) {
                    break;
                }
                let coverage = (1.0 + Distribution::<f64>::sample(&coverage_dist, &mut rng)).min(MAX_COVERAGE as f64) as u32;
                let methylated = Binomial::new(coverage as u64, level.clamp(0.0, 1.0))
                    .expect("valid binomial")
                    .sample(&mut rng);
                let meth_pct = ((methylated as f64 * 100.0 / coverage as f64) + 0.5).floor() as u8;
                out.push(MethRecord {
                    chrom: name.clone(),
                    start: pos + offset,
                    end: pos + offset + 1,
                    strand,
                    coverage,
                    meth_pct,
                });
                produced += 1;
            }
            let gap = if rng.gen_bool(0.9) {
                rng.gen_range(2..40)
            } else {
                rng.gen_range(100..5_000)
            };
            pos += gap;
        }
    }
    match order {
        RecordOrder::Sorted => out.sort(),
        RecordOrder::Shuffled => {
            let mut shuffler = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_5eed_5eed_5eed);
            out.shuffle(&mut shuffler);
        }
    }
    out
}

fn text_bytes(n: usize, seed: u64, chroms: usize) -> u64 {
    generate_synthetic(n, seed, chroms, RecordOrder::Shuffled)
        .iter()
        .map(|r| r.tsv_len() as u64)
        .sum()
}

/// Record count whose TSV form is within about 0.2% of `target_bytes`.
/// Lines lengthen as coordinates grow, so a small pilot is only the
/// starting point and the count is refined against generated sizes.
pub fn records_for_bytes(target_bytes: u64, seed: u64, chroms: usize) -> usize {
    if target_bytes == 0 {
        return 0;
    }
    let target = target_bytes as f64;
    let pilot = 10_000;
    let mut n = (target * pilot as f64 / text_bytes(pilot, seed, chroms) as f64).round().max(1.0) as usize;
    for _ in 0..6 {
        let got = text_bytes(n, seed, chroms) as f64;
        if (got - target).abs() <= 0.002 * target {
            break;
        }
        let next = (n as f64 * target / got).round().max(1.0) as usize;
        if next == n {
            break;
        }
        n = next;
    }
    n
}

/// TSV size of `records` synthetic records: exact up to four million
/// records, extrapolated from the last million beyond that.
pub fn estimate_text_bytes(records: u64, seed: u64, chroms: usize) -> u64 {
    const EXACT: u64 = 4_000_000;
    if records <= EXACT {
        return text_bytes(records as usize, seed, chroms);
    }
    let full = text_bytes(EXACT as usize, seed, chroms) as f64;
    let head = text_bytes((EXACT - 1_000_000) as usize, seed, chroms) as f64;
    let per_record = (full - head) / 1_000_000.0;
    (full + per_record * (records - EXACT) as f64).round() as u64
}

/// Serializes records as TSV and cuts the text into `k` objects at the line
/// boundaries nearest to the ideal equal-size split points.
pub fn split_into_objects(records: &[MethRecord], k: usize) -> Vec<Vec<u8>> {
    let k = k.max(1);
    let lens: Vec<usize> = records.iter().map(MethRecord::tsv_len).collect();
    let total: usize = lens.iter().sum();

    // Cumulative offsets of every line boundary.
    let mut bounds = Vec::with_capacity(records.len() + 1);
    bounds.push(0usize);
    for len in &lens {
        bounds.push(bounds.last().unwrap() + len);
    }

    let mut cuts = Vec::with_capacity(k + 1);
    cuts.push(0usize);
    for i in 1..k {
        let ideal = (total as u128 * i as u128 / k as u128) as usize;
        let idx = bounds.partition_point(|&b| b < ideal);
        let mut best = idx.min(bounds.len() - 1);
        if best > 0 && ideal - bounds[best - 1] <= bounds[best] - ideal {
            best -= 1;
        }
        // Keep cuts monotone when records are scarce.
        let best = best.max(*cuts.last().unwrap());
        cuts.push(best);
    }
    cuts.push(records.len());

    cuts.windows(2)
        .map(|w| super::record::records_to_tsv(&records[w[0]..w[1]]))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizing_hits_target() {
        for target in [300_000u64, 5_000_000] {
            let n = records_for_bytes(target, 3, 4);
            let got = text_bytes(n, 3, 4) as f64;
            assert!((got / target as f64 - 1.0).abs() < 0.005, "{target}: {got}");
        }
        assert_eq!(records_for_bytes(0, 3, 4), 0);
        assert_eq!(estimate_text_bytes(1234, 5, 2), text_bytes(1234, 5, 2));
    }

    #[test]
    fn empty_request_yields_nothing() {
        assert!(generate_synthetic(0, 1, 3, RecordOrder::Shuffled).is_empty());
        let objs = split_into_objects(&[], 1);
        assert_eq!(objs, vec![Vec::<u8>::new()]);
    }

    #[test]
    fn same_seed_same_bytes() {
        let a = generate_synthetic(5_000, 9, 4, RecordOrder::Shuffled);
        let b = generate_synthetic(5_000, 9, 4, RecordOrder::Shuffled);
        assert_eq!(split_into_objects(&a, 3), split_into_objects(&b, 3));
        let c = generate_synthetic(5_000, 10, 4, RecordOrder::Shuffled);
        assert_ne!(a, c);
    }

    #[test]
    fn sorted_output_is_sorted_and_valid() {
        let recs = generate_synthetic(20_000, 3, 5, RecordOrder::Sorted);
        assert_eq!(recs.len(), 20_000);
        assert!(recs.windows(2).all(|w| w[0].cmp_key(&w[1]).is_lt()));
        assert!(recs.iter().all(|r| r.end > r.start && r.meth_pct <= 100 && r.coverage >= 1));
        let near_extremes = recs.iter().filter(|r| r.meth_pct <= 20 || r.meth_pct >= 80).count();
        assert!(near_extremes as f64 > 0.8 * recs.len() as f64);
    }

    #[test]
    fn shuffle_is_a_permutation() {
        let mut sorted = generate_synthetic(3_000, 5, 2, RecordOrder::Sorted);
        let mut shuffled = generate_synthetic(3_000, 5, 2, RecordOrder::Shuffled);
        assert_ne!(sorted, shuffled);
        shuffled.sort();
        sorted.sort();
        assert_eq!(sorted, shuffled);
    }

    #[test]
    fn objects_are_balanced() {
        let recs = generate_synthetic(10_001, 1, 3, RecordOrder::Shuffled);
        let objs = split_into_objects(&recs, 8);
        assert_eq!(objs.len(), 8);
        let total: usize = objs.iter().map(Vec::len).sum();
        let max_line = recs.iter().map(MethRecord::tsv_len).max().unwrap();
        for o in &objs {
            assert!((o.len() as i64 - (total / 8) as i64).unsigned_abs() as usize <= max_line);
        }
    }

    #[test]
    fn more_objects_than_records() {
        let recs = generate_synthetic(2, 1, 1, RecordOrder::Sorted);
        let objs = split_into_objects(&recs, 5);
        assert_eq!(objs.len(), 5);
        assert_eq!(objs.concat(), super::super::record::records_to_tsv(&recs));
    }
}
