//! Calibration and failure-prediction metrics.
//!
//! ECE uses `M` equal-width bins on `[0, 1]`: bin `m` covers
//! `[m/M, (m+1)/M)` and the last bin is closed at 1.0. AUROC is the
//! Mann-Whitney statistic with midranks for ties.

use crate::error::{Error, Result};

/// Bin count used throughout the evaluation protocol.
pub const DEFAULT_BINS: usize = 10;

/// A normalized confidence paired with a correctness label.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalRecord {
    confidence: f64,
    correct: bool,
}

impl EvalRecord {
    pub fn new(confidence: f64, correct: bool) -> Result<Self> {
        if !confidence.is_finite() {
            return Err(Error::NonFinite("confidence"));
        }
        if !(0.0..=1.0).contains(&confidence) {
            return Err(Error::ConfidenceOutOfRange(confidence));
        }
        Ok(Self {
            confidence,
            correct,
        })
    }

    pub fn confidence(&self) -> f64 {
        self.confidence
    }

    pub fn correct(&self) -> bool {
        self.correct
    }

    pub fn flipped(&self) -> Self {
        Self {
            confidence: self.confidence,
            correct: !self.correct,
        }
    }
}

/// Per-bin statistics of a reliability diagram. Means are `None` for empty bins.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinStats {
    pub index: usize,
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    pub mean_confidence: Option<f64>,
    pub mean_accuracy: Option<f64>,
}

/// Bin index of `confidence` for `num_bins` equal-width bins.
///
/// Edges are `m as f64 / num_bins as f64`; the float product is only a first
/// guess and is corrected against those edges.
pub fn bin_index(confidence: f64, num_bins: usize) -> usize {
    let m = num_bins as f64;
    let mut idx = ((confidence * m).floor() as usize).min(num_bins - 1);
    if idx > 0 && confidence < idx as f64 / m {
        idx -= 1;
    } else if idx + 1 < num_bins && confidence >= (idx + 1) as f64 / m {
        idx += 1;
    }
    idx
}

#[derive(Clone, Copy, Default)]
struct Accum {
    count: usize,
    conf_sum: f64,
    correct: usize,
}

fn accumulate(records: &[EvalRecord], num_bins: usize) -> Result<Vec<Accum>> {
    if num_bins == 0 {
        return Err(Error::ZeroBins);
    }
    if records.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut bins = vec![Accum::default(); num_bins];
    for r in records {
        let b = &mut bins[bin_index(r.confidence, num_bins)];
        b.count += 1;
        b.conf_sum += r.confidence;
        b.correct += usize::from(r.correct);
    }
    Ok(bins)
}

/// Expected calibration error, in `[0, 1]`.
pub fn ece(records: &[EvalRecord], num_bins: usize) -> Result<f64> {
    let bins = accumulate(records, num_bins)?;
    let mut total = 0.0;
    for b in bins.iter().filter(|b| b.count > 0) {
        let n = b.count as f64;
        let acc = b.correct as f64 / n;
        let conf = b.conf_sum / n;
        total += n * (acc - conf).abs();
    }
    Ok(total / records.len() as f64)
}

/// All `num_bins` bins, including empty ones.
pub fn reliability_bins(records: &[EvalRecord], num_bins: usize) -> Result<Vec<BinStats>> {
    let bins = accumulate(records, num_bins)?;
    let m = num_bins as f64;
    Ok(bins
        .iter()
        .enumerate()
        .map(|(index, b)| {
            let (mean_confidence, mean_accuracy) = if b.count > 0 {
                let n = b.count as f64;
                (Some(b.conf_sum / n), Some(b.correct as f64 / n))
            } else {
                (None, None)
            };
            BinStats {
                index,
                lower: index as f64 / m,
                upper: (index + 1) as f64 / m,
                count: b.count,
                mean_confidence,
                mean_accuracy,
            }
        })
        .collect())
}

/// Twice the Mann-Whitney U of the correct class, and `#correct * #incorrect`.
///
/// Midranks are half-integers, so doubling keeps the whole computation in
/// exact integer arithmetic.
pub fn mann_whitney_u2(records: &[EvalRecord]) -> Result<(u64, u64)> {
    let correct = records.iter().filter(|r| r.correct).count();
    let incorrect = records.len() - correct;
    if correct == 0 || incorrect == 0 {
        return Err(Error::DegenerateLabels { correct, incorrect });
    }
    let mut sorted: Vec<&EvalRecord> = records.iter().collect();
    sorted.sort_by(|a, b| a.confidence.total_cmp(&b.confidence));

    // Sum of doubled midranks over the correct class.
    let mut rank2_sum: u64 = 0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i + 1;
        while j < sorted.len() && sorted[j].confidence == sorted[i].confidence {
            j += 1;
        }
        // Positions i..j hold ranks i+1..=j; doubled midrank is i+1+j.
        let in_group = sorted[i..j].iter().filter(|r| r.correct).count() as u64;
        rank2_sum += in_group * (i as u64 + 1 + j as u64);
        i = j;
    }
    let n1 = correct as u64;
    let u2 = rank2_sum - n1 * (n1 + 1);
    Ok((u2, n1 * incorrect as u64))
}

/// Probability that a correct record outranks an incorrect one, ties counted half.
pub fn auroc(records: &[EvalRecord]) -> Result<f64> {
    let (u2, pairs) = mann_whitney_u2(records)?;
    let denom = 2 * pairs;
    // Evaluate from the smaller side so that `auroc + auroc_flipped` is
    // exactly 1.0 in floating point.
    Ok(if u2 <= pairs {
        u2 as f64 / denom as f64
    } else {
        1.0 - (denom - u2) as f64 / denom as f64
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn recs(pairs: &[(f64, bool)]) -> Vec<EvalRecord> {
        pairs
            .iter()
            .map(|&(c, y)| EvalRecord::new(c, y).unwrap())
            .collect()
    }

    #[test]
    fn ece_examples() {
        let calibrated: Vec<_> = (0..20).map(|i| (0.95, i != 0)).collect();
        assert!(ece(&recs(&calibrated), 10).unwrap().abs() < 1e-12);

        let wrong: Vec<_> = (0..7).map(|_| (1.0, false)).collect();
        assert_eq!(ece(&recs(&wrong), 10).unwrap(), 1.0);

        let four = recs(&[(0.95, true), (0.95, false), (0.15, false), (0.15, false)]);
        assert!((ece(&four, 10).unwrap() - 0.30).abs() < 1e-12);
    }

    #[test]
    fn ece_errors() {
        assert!(matches!(ece(&[], 10), Err(Error::EmptyDataset)));
        let one = recs(&[(0.5, true)]);
        assert!(matches!(ece(&one, 0), Err(Error::ZeroBins)));
        assert!(EvalRecord::new(1.2, true).is_err());
        assert!(EvalRecord::new(f64::NAN, true).is_err());
    }

    #[test]
    fn bins_for_hand_case() {
        let four = recs(&[(0.95, true), (0.95, false), (0.15, false), (0.15, false)]);
        let bins = reliability_bins(&four, 10).unwrap();
        assert_eq!(bins.len(), 10);
        let nonzero: Vec<usize> = bins.iter().filter(|b| b.count > 0).map(|b| b.index).collect();
        assert_eq!(nonzero, vec![1, 9]);
        assert_eq!(bins[4].count, 0);
        assert_eq!(bins[4].mean_confidence, None);
        assert_eq!(bins[4].mean_accuracy, None);
        assert_eq!(bins[9].mean_accuracy, Some(0.5));
    }

    #[test]
    fn one_record_per_bin() {
        let pairs: Vec<_> = (0..10).map(|i| (0.05 + 0.1 * i as f64, true)).collect();
        let bins = reliability_bins(&recs(&pairs), 10).unwrap();
        assert!(bins.iter().all(|b| b.count == 1));
    }

    #[test]
    fn bin_edges() {
        assert_eq!(bin_index(0.0, 10), 0);
        assert_eq!(bin_index(1.0, 10), 9);
        assert_eq!(bin_index(0.1, 10), 1);
        assert_eq!(bin_index(0.7, 10), 7);
        assert_eq!(bin_index(0.3, 10), 3);
        assert_eq!(bin_index(f64::from_bits(0.3f64.to_bits() - 1), 10), 2);
        assert_eq!(bin_index(0.5, 1), 0);
    }

    #[test]
    fn auroc_examples() {
        let separated = recs(&[(0.9, true), (0.8, true), (0.2, false), (0.1, false)]);
        assert_eq!(auroc(&separated).unwrap(), 1.0);
        let ties = recs(&[(0.5, true), (0.5, false), (0.5, true), (0.5, false)]);
        assert_eq!(auroc(&ties).unwrap(), 0.5);
        let mixed = recs(&[(0.9, true), (0.4, true), (0.6, false)]);
        assert_eq!(auroc(&mixed).unwrap(), 0.5);
    }

    #[test]
    fn auroc_degenerate() {
        let all_right = recs(&[(0.2, true), (0.9, true)]);
        assert!(matches!(
            auroc(&all_right),
            Err(Error::DegenerateLabels { correct: 2, incorrect: 0 })
        ));
        assert!(auroc(&[]).is_err());
    }

    fn records_strategy() -> impl Strategy<Value = Vec<EvalRecord>> {
        prop::collection::vec((0u8..=20, any::<bool>()), 1..60).prop_map(|v| {
            v.into_iter()
                .map(|(c, y)| EvalRecord::new(f64::from(c) / 20.0, y).unwrap())
                .collect()
        })
    }

    proptest! {
        #[test]
        fn ece_bounded_and_permutation_invariant(mut records in records_strategy()) {
            let e = ece(&records, 10).unwrap();
            prop_assert!((0.0..=1.0).contains(&e));
            records.reverse();
            prop_assert!((ece(&records, 10).unwrap() - e).abs() < 1e-12);
        }

        #[test]
        fn ece_consistent_with_bins(records in records_strategy(), bins in 1usize..20) {
            let stats = reliability_bins(&records, bins).unwrap();
            let n = records.len() as f64;
            let share: f64 = stats.iter().map(|b| b.count as f64 / n).sum();
            prop_assert!((share - 1.0).abs() < 1e-12);
            let from_bins: f64 = stats
                .iter()
                .filter(|b| b.count > 0)
                .map(|b| b.count as f64 * (b.mean_accuracy.unwrap() - b.mean_confidence.unwrap()).abs())
                .sum::<f64>() / n;
            prop_assert!((from_bins - ece(&records, bins).unwrap()).abs() < 1e-12);
        }

        #[test]
        fn auroc_monotone_invariant_and_flip(records in records_strategy()) {
            if let Ok(a) = auroc(&records) {
                let squashed: Vec<EvalRecord> = records
                    .iter()
                    .map(|r| EvalRecord::new(r.confidence().powi(3), r.correct()).unwrap())
                    .collect();
                prop_assert_eq!(auroc(&squashed).unwrap(), a);
                let flipped: Vec<EvalRecord> = records.iter().map(EvalRecord::flipped).collect();
                prop_assert_eq!(auroc(&flipped).unwrap() + a, 1.0);
            }
        }
    }
}
