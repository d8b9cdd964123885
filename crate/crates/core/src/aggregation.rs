//! Layer-aggregated confidence scoring.
//!
//! Each self-evaluation event provides, for every transformer layer, the
//! unembedded logits of the candidate score tokens at the position that
//! predicts the score. The pipeline is:
//!
//! 1. pick a contiguous block of layers ([`select_layers`]),
//! 2. combine them, either as a weighted sum of logits followed by a
//!    softmax over the score tokens ([`aggregate_logits`] +
//!    [`score_distribution`]) or as a weighted average of per-layer
//!    softmaxes ([`aggregate_probs`]),
//! 3. reduce the resulting distribution to one score, by expectation
//!    ([`expectation`]) or by its mode ([`max_score`]).
//!
//! With the last `k` layers, uniform weights, logit aggregation and the
//! expectation this is the full method; the other combinations are the
//! ablation variants. Everything here is a pure function over borrowed data.

use std::ops::RangeInclusive;

use crate::error::{Error, Result};
use crate::scores::CandidateScoreSet;

/// Tolerance on probability and weight sums.
pub const SUM_TOLERANCE: f64 = 1e-9;

/// Per-layer logits restricted to the candidate score tokens.
///
/// Row 0 is the output of the first transformer layer and the last row is
/// the output of the final layer; the embedding output is not included.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerLogits {
    num_layers: usize,
    width: usize,
    values: Vec<f64>,
}

impl LayerLogits {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let num_layers = rows.len();
        if num_layers == 0 {
            return Err(Error::InvalidLogits("need at least one layer".into()));
        }
        let width = rows[0].len();
        let mut values = Vec::with_capacity(num_layers * width);
        for (l, row) in rows.into_iter().enumerate() {
            if row.len() != width {
                return Err(Error::InvalidLogits(format!(
                    "layer {l} has {} entries, expected {width}",
                    row.len()
                )));
            }
            values.extend(row);
        }
        Self::from_flat(num_layers, width, values)
    }

    /// Builds from a row-major buffer of `num_layers * width` values.
    pub fn from_flat(num_layers: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        if num_layers == 0 {
            return Err(Error::InvalidLogits("need at least one layer".into()));
        }
        if width == 0 {
            return Err(Error::InvalidLogits("rows must be non-empty".into()));
        }
        if values.len() != num_layers * width {
            return Err(Error::InvalidLogits(format!(
                "expected {} values for {num_layers}x{width}, got {}",
                num_layers * width,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("layer logits"));
        }
        Ok(Self {
            num_layers,
            width,
            values,
        })
    }

    pub fn num_layers(&self) -> usize {
        self.num_layers
    }

    /// Number of candidate tokens per layer.
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn row(&self, layer: usize) -> &[f64] {
        &self.values[layer * self.width..(layer + 1) * self.width]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.values.chunks_exact(self.width)
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.rows().map(<[f64]>::to_vec).collect()
    }
}

/// Which layers take part in aggregation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerSelection {
    /// Inclusive layer index range `start..=end`.
    Range { start: usize, end: usize },
    /// The final `k` layers.
    LastK(usize),
}

impl LayerSelection {
    /// Resolves to an inclusive index range for a model with `num_layers` layers.
    pub fn resolve(&self, num_layers: usize) -> Result<RangeInclusive<usize>> {
        match *self {
            LayerSelection::LastK(0) => {
                Err(Error::InvalidSelection("last_k must be positive".into()))
            }
            LayerSelection::LastK(k) if k > num_layers => Err(Error::InvalidSelection(format!(
                "last_k={k} exceeds the {num_layers} available layers"
            ))),
            LayerSelection::LastK(k) => Ok(num_layers - k..=num_layers - 1),
            LayerSelection::Range { start, end } => {
                if start > end {
                    return Err(Error::InvalidSelection(format!(
                        "range start {start} is after end {end}"
                    )));
                }
                if end >= num_layers {
                    return Err(Error::LayerOutOfRange {
                        index: end,
                        num_layers,
                    });
                }
                Ok(start..=end)
            }
        }
    }
}

/// Per-layer weights over the selected rows.
#[derive(Debug, Clone, PartialEq)]
pub enum Weights {
    /// `1/k` for each of the `k` selected layers.
    Uniform,
    /// One non-negative weight per selected layer, summing to one.
    Explicit(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Combine {
    /// Weighted sum of logits, then one softmax.
    Logits,
    /// Softmax per layer, then a weighted average of the distributions.
    Probs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Expectation,
    MaxScore,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregationConfig {
    pub layers: LayerSelection,
    pub weights: Weights,
    pub combine: Combine,
    pub decision: Decision,
}

impl AggregationConfig {
    /// Last `k` layers, uniform weights, logit aggregation, expectation.
    pub fn eagle(k: usize) -> Self {
        Self {
            layers: LayerSelection::LastK(k),
            weights: Weights::Uniform,
            combine: Combine::Logits,
            decision: Decision::Expectation,
        }
    }

    /// Final layer only with the given decision rule.
    pub fn last_layer(decision: Decision) -> Self {
        Self {
            layers: LayerSelection::LastK(1),
            weights: Weights::Uniform,
            combine: Combine::Logits,
            decision,
        }
    }

    pub fn with_layers(mut self, layers: LayerSelection) -> Self {
        self.layers = layers;
        self
    }

    pub fn with_combine(mut self, combine: Combine) -> Self {
        self.combine = combine;
        self
    }

    pub fn with_decision(mut self, decision: Decision) -> Self {
        self.decision = decision;
        self
    }

    /// Short human-readable description, e.g. `last-4/logits/exp`.
    pub fn describe(&self) -> String {
        let layers = match self.layers {
            LayerSelection::LastK(k) => format!("last-{k}"),
            LayerSelection::Range { start, end } => format!("layers {start}:{end}"),
        };
        let combine = match self.combine {
            Combine::Logits => "logits",
            Combine::Probs => "prob",
        };
        let decision = match self.decision {
            Decision::Expectation => "exp",
            Decision::MaxScore => "max",
        };
        let weights = match self.weights {
            Weights::Uniform => "",
            Weights::Explicit(_) => "/weighted",
        };
        format!("{layers}/{combine}/{decision}{weights}")
    }
}

/// Default number of final layers when no tuned value is available:
/// a quarter of the depth, rounded up.
pub fn default_k(num_layers: usize) -> usize {
    num_layers.div_ceil(4).max(1)
}

/// Probability vector over a candidate score set.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceDistribution<'a> {
    probs: Vec<f64>,
    score_set: &'a CandidateScoreSet,
}

impl<'a> ConfidenceDistribution<'a> {
    pub fn new(probs: Vec<f64>, score_set: &'a CandidateScoreSet) -> Result<Self> {
        if probs.len() != score_set.len() {
            return Err(Error::WidthMismatch {
                expected: score_set.len(),
                got: probs.len(),
            });
        }
        if probs.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("probabilities"));
        }
        if probs.iter().any(|&p| p < 0.0) {
            return Err(Error::InvalidLogits("negative probability".into()));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::InvalidLogits(format!(
                "probabilities sum to {total}, expected 1"
            )));
        }
        Ok(Self { probs, score_set })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn score_set(&self) -> &'a CandidateScoreSet {
        self.score_set
    }

    pub fn into_probs(self) -> Vec<f64> {
        self.probs
    }
}

/// A confidence score on the raw score scale and normalized to `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfidenceScore {
    pub raw: f64,
    pub normalized: f64,
}

impl ConfidenceScore {
    /// `normalized = raw / max(S)`; `raw` is clamped into `[min(S), max(S)]`
    /// first to absorb rounding in the expectation sum.
    pub fn from_raw(raw: f64, score_set: &CandidateScoreSet) -> Self {
        let lo = f64::from(score_set.min_score());
        let hi = f64::from(score_set.max_score());
        let raw = raw.clamp(lo, hi);
        Self {
            raw,
            normalized: raw / hi,
        }
    }
}

/// Rows of the selected layers, in ascending layer order.
pub fn select_layers<'l>(
    logits: &'l LayerLogits,
    selection: &LayerSelection,
) -> Result<Vec<&'l [f64]>> {
    let range = selection.resolve(logits.num_layers())?;
    Ok(range.map(|l| logits.row(l)).collect())
}

fn resolve_weights(weights: &Weights, layers: usize) -> Result<Option<&[f64]>> {
    match weights {
        Weights::Uniform => Ok(None),
        Weights::Explicit(w) => {
            if w.len() != layers {
                return Err(Error::WeightCountMismatch {
                    weights: w.len(),
                    layers,
                });
            }
            if w.iter().any(|x| !x.is_finite() || *x < 0.0) {
                return Err(Error::InvalidWeights(
                    "weights must be finite and non-negative".into(),
                ));
            }
            let total: f64 = w.iter().sum();
            if (total - 1.0).abs() > SUM_TOLERANCE {
                return Err(Error::InvalidWeights(format!(
                    "weights sum to {total}, expected 1"
                )));
            }
            Ok(Some(w))
        }
    }
}

fn check_rows(selected: &[&[f64]]) -> Result<usize> {
    let first = selected
        .first()
        .ok_or_else(|| Error::InvalidSelection("no layers selected".into()))?;
    let width = first.len();
    for row in selected {
        if row.len() != width {
            return Err(Error::WidthMismatch {
                expected: width,
                got: row.len(),
            });
        }
    }
    Ok(width)
}

/// Weighted elementwise sum of the selected logit rows.
///
/// Uniform weights produce the arithmetic mean (sum, then divide by `k`).
pub fn aggregate_logits(selected: &[&[f64]], weights: &Weights) -> Result<Vec<f64>> {
    let width = check_rows(selected)?;
    let mut out = vec![0.0; width];
    match resolve_weights(weights, selected.len())? {
        None => {
            for row in selected {
                for (acc, v) in out.iter_mut().zip(row.iter()) {
                    *acc += v;
                }
            }
            let k = selected.len() as f64;
            out.iter_mut().for_each(|v| *v /= k);
        }
        Some(w) => {
            for (row, &wl) in selected.iter().zip(w) {
                for (acc, v) in out.iter_mut().zip(row.iter()) {
                    *acc += wl * v;
                }
            }
        }
    }
    Ok(out)
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = out.iter().sum();
    out.iter_mut().for_each(|p| *p /= total);
    out
}

/// Softmax over the candidate score tokens, stabilized by subtracting the max.
pub fn score_distribution<'s>(
    logits: &[f64],
    score_set: &'s CandidateScoreSet,
) -> Result<ConfidenceDistribution<'s>> {
    if logits.len() != score_set.len() {
        return Err(Error::WidthMismatch {
            expected: score_set.len(),
            got: logits.len(),
        });
    }
    if logits.iter().any(|z| !z.is_finite()) {
        return Err(Error::NonFinite("aggregated logits"));
    }
    ConfidenceDistribution::new(softmax(logits), score_set)
}

/// Weighted average of per-layer softmax distributions.
pub fn aggregate_probs<'s>(
    selected: &[&[f64]],
    weights: &Weights,
    score_set: &'s CandidateScoreSet,
) -> Result<ConfidenceDistribution<'s>> {
    let width = check_rows(selected)?;
    if width != score_set.len() {
        return Err(Error::WidthMismatch {
            expected: score_set.len(),
            got: width,
        });
    }
    if selected.iter().any(|r| r.iter().any(|z| !z.is_finite())) {
        return Err(Error::NonFinite("layer logits"));
    }
    let resolved = resolve_weights(weights, selected.len())?;
    let mut out = vec![0.0; width];
    for (l, row) in selected.iter().enumerate() {
        let wl = resolved.map_or(1.0, |w| w[l]);
        for (acc, p) in out.iter_mut().zip(softmax(row)) {
            *acc += wl * p;
        }
    }
    if resolved.is_none() {
        let k = selected.len() as f64;
        out.iter_mut().for_each(|p| *p /= k);
    }
    ConfidenceDistribution::new(out, score_set)
}

/// Expected score under the distribution.
pub fn expectation(dist: &ConfidenceDistribution<'_>) -> ConfidenceScore {
    let raw: f64 = dist
        .probs
        .iter()
        .zip(dist.score_set.scores())
        .map(|(p, &s)| p * f64::from(s))
        .sum();
    ConfidenceScore::from_raw(raw, dist.score_set)
}

/// Most probable score; exact ties go to the smaller score.
pub fn max_score(dist: &ConfidenceDistribution<'_>) -> ConfidenceScore {
    let mut best = 0;
    for (i, &p) in dist.probs.iter().enumerate().skip(1) {
        if p > dist.probs[best] {
            best = i;
        }
    }
    ConfidenceScore::from_raw(f64::from(dist.score_set.scores()[best]), dist.score_set)
}

/// The aggregated distribution for `config`, before the decision rule.
pub fn aggregated_distribution<'s>(
    logits: &LayerLogits,
    config: &AggregationConfig,
    score_set: &'s CandidateScoreSet,
) -> Result<ConfidenceDistribution<'s>> {
    if logits.width() != score_set.len() {
        return Err(Error::WidthMismatch {
            expected: score_set.len(),
            got: logits.width(),
        });
    }
    let selected = select_layers(logits, &config.layers)?;
    match config.combine {
        Combine::Logits => {
            let agg = aggregate_logits(&selected, &config.weights)?;
            score_distribution(&agg, score_set)
        }
        Combine::Probs => aggregate_probs(&selected, &config.weights, score_set),
    }
}

/// Full scoring pipeline for one record's layer logits.
pub fn compute_confidence(
    logits: &LayerLogits,
    config: &AggregationConfig,
    score_set: &CandidateScoreSet,
) -> Result<ConfidenceScore> {
    let dist = aggregated_distribution(logits, config, score_set)?;
    Ok(match config.decision {
        Decision::Expectation => expectation(&dist),
        Decision::MaxScore => max_score(&dist),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn digits() -> CandidateScoreSet {
        CandidateScoreSet::digits(9).unwrap()
    }

    fn six_layers() -> LayerLogits {
        LayerLogits::new((0..6).map(|l| vec![l as f64, -(l as f64)]).collect()).unwrap()
    }

    #[test]
    fn select_last_and_ranges() {
        let logits = six_layers();
        let last = select_layers(&logits, &LayerSelection::LastK(1)).unwrap();
        assert_eq!(last, vec![logits.row(5)]);
        let all = select_layers(&logits, &LayerSelection::LastK(6)).unwrap();
        assert_eq!(all.len(), 6);
        assert_eq!(all[0], logits.row(0));
        let mid = select_layers(&logits, &LayerSelection::Range { start: 2, end: 4 }).unwrap();
        let expected: Vec<&[f64]> = [2, 3, 4].iter().map(|&l| logits.row(l)).collect();
        assert_eq!(mid, expected);
    }

    #[test]
    fn select_errors_name_the_index() {
        let logits = six_layers();
        let err = select_layers(&logits, &LayerSelection::Range { start: 2, end: 6 }).unwrap_err();
        assert!(matches!(err, Error::LayerOutOfRange { index: 6, num_layers: 6 }));
        assert!(err.to_string().contains('6'));
        assert!(select_layers(&logits, &LayerSelection::LastK(7)).is_err());
        assert!(select_layers(&logits, &LayerSelection::LastK(0)).is_err());
        assert!(select_layers(&logits, &LayerSelection::Range { start: 3, end: 2 }).is_err());
    }

    #[test]
    fn aggregate_logits_examples() {
        let rows: [&[f64]; 2] = [&[1.0, 2.0], &[3.0, 4.0]];
        assert_eq!(aggregate_logits(&rows, &Weights::Uniform).unwrap(), vec![2.0, 3.0]);
        let single: [&[f64]; 1] = [&[5.0, -1.0, 0.0]];
        assert_eq!(
            aggregate_logits(&single, &Weights::Uniform).unwrap(),
            vec![5.0, -1.0, 0.0]
        );
        let rows: [&[f64]; 2] = [&[0.0, 4.0], &[4.0, 0.0]];
        let w = Weights::Explicit(vec![0.25, 0.75]);
        assert_eq!(aggregate_logits(&rows, &w).unwrap(), vec![3.0, 1.0]);
    }

    #[test]
    fn aggregate_logits_weight_errors() {
        let rows: [&[f64]; 2] = [&[0.0, 4.0], &[4.0, 0.0]];
        assert!(matches!(
            aggregate_logits(&rows, &Weights::Explicit(vec![1.0])),
            Err(Error::WeightCountMismatch { weights: 1, layers: 2 })
        ));
        assert!(aggregate_logits(&rows, &Weights::Explicit(vec![0.5, 0.6])).is_err());
        assert!(aggregate_logits(&rows, &Weights::Explicit(vec![1.5, -0.5])).is_err());
        assert!(aggregate_logits(&[], &Weights::Uniform).is_err());
    }

    #[test]
    fn softmax_examples() {
        let s = digits();
        let uniform = score_distribution(&[0.7; 10], &s).unwrap();
        for p in uniform.probs() {
            assert!((p - 0.1).abs() < 1e-15);
        }
        let mut z = vec![0.0; 10];
        z[9] = 3f64.ln();
        let d = score_distribution(&z, &s).unwrap();
        for p in &d.probs()[..9] {
            assert!((p - 1.0 / 12.0).abs() < 1e-15);
        }
        assert!((d.probs()[9] - 0.25).abs() < 1e-15);

        let shifted: Vec<f64> = z.iter().map(|v| v + 100.0).collect();
        let d2 = score_distribution(&shifted, &s).unwrap();
        for (a, b) in d.probs().iter().zip(d2.probs()) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(score_distribution(&[f64::NAN; 10], &s).is_err());
        assert!(score_distribution(&[0.0; 3], &s).is_err());
    }

    #[test]
    fn expectation_examples() {
        let s = digits();
        let uniform = ConfidenceDistribution::new(vec![0.1; 10], &s).unwrap();
        let c = expectation(&uniform);
        assert!((c.raw - 4.5).abs() < 1e-12);
        assert!((c.normalized - 0.5).abs() < 1e-12);

        let mut one_hot = vec![0.0; 10];
        one_hot[9] = 1.0;
        let c = expectation(&ConfidenceDistribution::new(one_hot, &s).unwrap());
        assert_eq!(c.raw, 9.0);
        assert_eq!(c.normalized, 1.0);

        let mut z = vec![0.0; 10];
        z[9] = 3f64.ln();
        let c = expectation(&score_distribution(&z, &s).unwrap());
        assert!((c.raw - 5.25).abs() < 1e-12);
    }

    #[test]
    fn max_score_examples() {
        let s = digits();
        let mut p = vec![0.0; 10];
        p[7] = 1.0;
        assert_eq!(max_score(&ConfidenceDistribution::new(p, &s).unwrap()).raw, 7.0);

        let mut p = vec![0.05; 10];
        p[0] = 0.55;
        assert_eq!(max_score(&ConfidenceDistribution::new(p, &s).unwrap()).raw, 0.0);

        let mut p = vec![0.0; 10];
        p[3] = 0.5;
        p[8] = 0.5;
        assert_eq!(max_score(&ConfidenceDistribution::new(p, &s).unwrap()).raw, 3.0);
    }

    #[test]
    fn aggregate_probs_examples() {
        let s = digits();
        let row: Vec<f64> = (0..10).map(|i| (i as f64 * 0.37).sin()).collect();
        let dup: [&[f64]; 2] = [&row, &row];
        let a = aggregate_probs(&dup, &Weights::Uniform, &s).unwrap();
        let b = score_distribution(&row, &s).unwrap();
        for (x, y) in a.probs().iter().zip(b.probs()) {
            assert!((x - y).abs() < 1e-15);
        }

        let flat: [&[f64]; 2] = [&[1.0; 10], &[-2.0; 10]];
        let u = aggregate_probs(&flat, &Weights::Uniform, &s).unwrap();
        assert!(u.probs().iter().all(|p| (p - 0.1).abs() < 1e-15));

        let binary = CandidateScoreSet::digits(1).unwrap();
        let ln3 = 3f64.ln();
        let rows: [&[f64]; 2] = [&[0.0, ln3], &[ln3, 0.0]];
        let d = aggregate_probs(&rows, &Weights::Uniform, &binary).unwrap();
        assert!((d.probs()[0] - 0.5).abs() < 1e-15);
        assert!((d.probs()[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn compute_confidence_reductions() {
        let s = digits();
        let rows: Vec<Vec<f64>> = (0..3)
            .map(|l| (0..10).map(|i| ((l * 10 + i) as f64 * 0.61).cos() * 2.0).collect())
            .collect();
        let logits = LayerLogits::new(rows.clone()).unwrap();

        let greedy = compute_confidence(&logits, &AggregationConfig::last_layer(Decision::MaxScore), &s)
            .unwrap();
        let last = &rows[2];
        let argmax = (0..10).fold(0, |b, i| if last[i] > last[b] { i } else { b });
        assert_eq!(greedy.raw, argmax as f64);

        let exp = compute_confidence(&logits, &AggregationConfig::eagle(1), &s).unwrap();
        let direct = expectation(&score_distribution(last, &s).unwrap());
        assert_eq!(exp, direct);

        // Hand-expanded mean over three layers, softmax, expectation.
        let mean: Vec<f64> = (0..10)
            .map(|i| (rows[0][i] + rows[1][i] + rows[2][i]) / 3.0)
            .collect();
        let m = mean.iter().cloned().fold(f64::MIN, f64::max);
        let e: Vec<f64> = mean.iter().map(|z| (z - m).exp()).collect();
        let total: f64 = e.iter().sum();
        let oracle: f64 = e.iter().enumerate().map(|(s, w)| s as f64 * w / total).sum();
        let c = compute_confidence(&logits, &AggregationConfig::eagle(3), &s).unwrap();
        assert!((c.raw - oracle).abs() < 1e-12);
    }

    #[test]
    fn compute_confidence_width_mismatch() {
        let logits = LayerLogits::new(vec![vec![0.0; 5]]).unwrap();
        assert!(matches!(
            compute_confidence(&logits, &AggregationConfig::eagle(1), &digits()),
            Err(Error::WidthMismatch { expected: 10, got: 5 })
        ));
    }

    #[test]
    fn layer_logits_validation() {
        assert!(LayerLogits::new(vec![]).is_err());
        assert!(LayerLogits::new(vec![vec![0.0, 1.0], vec![0.0]]).is_err());
        assert!(LayerLogits::new(vec![vec![0.0, f64::INFINITY]]).is_err());
    }

    #[test]
    fn default_k_rounds_up() {
        assert_eq!(default_k(1), 1);
        assert_eq!(default_k(6), 2);
        assert_eq!(default_k(8), 2);
        assert_eq!(default_k(32), 8);
        assert_eq!(default_k(33), 9);
    }

    fn logits_strategy() -> impl Strategy<Value = (usize, Vec<f64>)> {
        (1usize..=8).prop_flat_map(|l| (Just(l), prop::collection::vec(-20.0f64..20.0, l * 10)))
    }

    proptest! {
        #[test]
        fn softmax_sums_to_one_and_is_shift_invariant(
            z in prop::collection::vec(-50.0f64..50.0, 10),
            c in -1e3f64..1e3,
        ) {
            let s = digits();
            let d = score_distribution(&z, &s).unwrap();
            let total: f64 = d.probs().iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-9);
            let shifted: Vec<f64> = z.iter().map(|v| v + c).collect();
            let d2 = score_distribution(&shifted, &s).unwrap();
            for (a, b) in d.probs().iter().zip(d2.probs()) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }

        #[test]
        fn expectation_within_score_bounds(z in prop::collection::vec(-50.0f64..50.0, 10)) {
            let s = digits();
            let c = expectation(&score_distribution(&z, &s).unwrap());
            prop_assert!((0.0..=9.0).contains(&c.raw));
            prop_assert!((0.0..=1.0).contains(&c.normalized));
        }

        #[test]
        fn uniform_is_mean_and_permutation_invariant(
            rows in prop::collection::vec(prop::collection::vec(-10.0f64..10.0, 4), 1..6),
            raw_w in prop::collection::vec(0.01f64..1.0, 6),
        ) {
            let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
            let k = refs.len();
            let mean = aggregate_logits(&refs, &Weights::Uniform).unwrap();
            for (i, m) in mean.iter().enumerate() {
                let direct: f64 = rows.iter().map(|r| r[i]).sum::<f64>() / k as f64;
                prop_assert!((m - direct).abs() < 1e-12);
            }
            let total: f64 = raw_w[..k].iter().sum();
            let w: Vec<f64> = raw_w[..k].iter().map(|x| x / total).collect();
            let fwd = aggregate_logits(&refs, &Weights::Explicit(w.clone())).unwrap();
            let rev_rows: Vec<&[f64]> = refs.iter().rev().copied().collect();
            let rev_w: Vec<f64> = w.iter().rev().copied().collect();
            let rev = aggregate_logits(&rev_rows, &Weights::Explicit(rev_w)).unwrap();
            for (a, b) in fwd.iter().zip(&rev) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn last_k_all_equals_full_range((l, values) in logits_strategy()) {
            let s = digits();
            let logits = LayerLogits::from_flat(l, 10, values).unwrap();
            for combine in [Combine::Logits, Combine::Probs] {
                for decision in [Decision::Expectation, Decision::MaxScore] {
                    let base = AggregationConfig::eagle(l).with_combine(combine).with_decision(decision);
                    let ranged = base.clone().with_layers(LayerSelection::Range { start: 0, end: l - 1 });
                    prop_assert_eq!(
                        compute_confidence(&logits, &base, &s).unwrap(),
                        compute_confidence(&logits, &ranged, &s).unwrap()
                    );
                }
            }
        }

        #[test]
        fn raising_top_logit_never_lowers_expectation(
            z in prop::collection::vec(-10.0f64..10.0, 10),
            bump in 0.0f64..10.0,
        ) {
            let s = digits();
            let before = expectation(&score_distribution(&z, &s).unwrap()).raw;
            let mut raised = z.clone();
            raised[9] += bump;
            let after = expectation(&score_distribution(&raised, &s).unwrap()).raw;
            prop_assert!(after >= before - 1e-12);
        }

        #[test]
        fn one_hot_expectation_matches_max(idx in 0usize..10) {
            let s = digits();
            let mut p = vec![0.0; 10];
            p[idx] = 1.0;
            let d = ConfidenceDistribution::new(p, &s).unwrap();
            prop_assert_eq!(expectation(&d), max_score(&d));
        }
    }
}
