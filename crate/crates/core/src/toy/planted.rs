//! Synthetic records with a known true correctness probability.
//!
//! For a planted confidence `p`, the target distribution over the score set
//! puts mass `1 - p` on the smallest score and `p` on the largest, so its
//! mean is `p * max(S)` when the smallest score is 0. Its log (floored at
//! [`LOG_FLOOR`]) is the base logit vector.
//!
//! The final `signal_layers` layers carry the base logits plus Gaussian noise
//! of scale `noise_scale` that is centered across those layers, so their
//! uniform mean is exactly the base. Earlier layers get independent noise of
//! scale `early_noise_scale`, either alone ([`EarlyLayers::PureNoise`]) or on
//! top of the base ([`EarlyLayers::NoisySignal`]). The label is drawn as
//! Bernoulli(`p`).

use rand::Rng;
use rand_distr::StandardNormal;
use serde_json::Value;

use super::record_rng;
use crate::aggregation::LayerLogits;
use crate::dump::ScoreDumpRecord;
use crate::error::{Error, Result};
use crate::scores::CandidateScoreSet;

/// Logit assigned to zero-probability scores.
pub const LOG_FLOOR: f64 = -60.0;

/// Content of the layers before the signal layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EarlyLayers {
    PureNoise,
    NoisySignal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantedRecordSpec {
    pub planted_confidence: f64,
    pub noise_scale: f64,
    pub num_layers: usize,
    pub score_set: CandidateScoreSet,
    /// How many final layers carry the planted signal.
    pub signal_layers: usize,
    pub early_layers: EarlyLayers,
    pub early_noise_scale: f64,
}

impl PlantedRecordSpec {
    /// Signal in every layer.
    pub fn new(
        planted_confidence: f64,
        noise_scale: f64,
        num_layers: usize,
        score_set: CandidateScoreSet,
    ) -> Self {
        Self {
            planted_confidence,
            noise_scale,
            num_layers,
            score_set,
            signal_layers: num_layers,
            early_layers: EarlyLayers::PureNoise,
            early_noise_scale: noise_scale,
        }
    }

    pub fn with_signal_layers(mut self, signal_layers: usize) -> Self {
        self.signal_layers = signal_layers;
        self
    }

    pub fn with_early_layers(mut self, mode: EarlyLayers, noise_scale: f64) -> Self {
        self.early_layers = mode;
        self.early_noise_scale = noise_scale;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.planted_confidence;
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidSpec(format!(
                "planted confidence {p} outside [0, 1]"
            )));
        }
        for sigma in [self.noise_scale, self.early_noise_scale] {
            if !sigma.is_finite() || sigma < 0.0 {
                return Err(Error::InvalidSpec(format!(
                    "noise scale {sigma} must be finite and non-negative"
                )));
            }
        }
        if self.num_layers == 0 {
            return Err(Error::InvalidSpec("num_layers must be positive".into()));
        }
        if self.signal_layers == 0 || self.signal_layers > self.num_layers {
            return Err(Error::InvalidSpec(format!(
                "signal_layers {} must be in 1..={}",
                self.signal_layers, self.num_layers
            )));
        }
        if self.score_set.min_score() != 0 {
            return Err(Error::InvalidSpec(
                "planted construction needs 0 as the smallest score".into(),
            ));
        }
        Ok(())
    }

    fn base_logits(&self) -> Vec<f64> {
        let p = self.planted_confidence;
        let w = self.score_set.len();
        let floor = |q: f64| if q > 0.0 { q.ln().max(LOG_FLOOR) } else { LOG_FLOOR };
        let mut base = vec![LOG_FLOOR; w];
        base[0] = floor(1.0 - p);
        base[w - 1] = floor(p);
        base
    }

    fn build(&self, rng: &mut impl Rng) -> Result<(LayerLogits, bool)> {
        self.validate()?;
        let w = self.score_set.len();
        let base = self.base_logits();
        let gauss = |rng: &mut _, sigma: f64| sigma * Rng::sample::<f64, _>(rng, StandardNormal);

        let early = self.num_layers - self.signal_layers;
        let mut rows: Vec<Vec<f64>> = (0..early)
            .map(|_| {
                (0..w)
                    .map(|i| {
                        let e = gauss(rng, self.early_noise_scale);
                        match self.early_layers {
                            EarlyLayers::PureNoise => e,
                            EarlyLayers::NoisySignal => base[i] + e,
                        }
                    })
                    .collect()
            })
            .collect();

        let mut noise: Vec<Vec<f64>> = (0..self.signal_layers)
            .map(|_| (0..w).map(|_| gauss(rng, self.noise_scale)).collect())
            .collect();
        let n = self.signal_layers as f64;
        for i in 0..w {
            let mean = noise.iter().map(|r| r[i]).sum::<f64>() / n;
            noise.iter_mut().for_each(|r| r[i] -= mean);
        }
        rows.extend(
            noise
                .into_iter()
                .map(|eps| base.iter().zip(eps).map(|(b, e)| b + e).collect()),
        );

        let correct = rng.random_bool(self.planted_confidence);
        Ok((LayerLogits::new(rows)?, correct))
    }
}

/// One record per spec; record `i` draws from stream `i` of `seed`.
pub fn generate_planted_dataset(
    specs: &[PlantedRecordSpec],
    seed: u64,
) -> Result<Vec<ScoreDumpRecord>> {
    specs
        .iter()
        .enumerate()
        .map(|(i, spec)| {
            let mut rng = record_rng(seed, i as u64);
            let (logits, correct) = spec.build(&mut rng)?;
            let mut record =
                ScoreDumpRecord::new(format!("planted-{i:06}"), Some(correct), logits);
            record.meta.insert(
                "planted_confidence".into(),
                Value::from(spec.planted_confidence),
            );
            Ok(record)
        })
        .collect()
}

/// `n` copies of `template` with planted confidences drawn uniformly from `[0, 1)`.
pub fn sample_planted_specs(
    n: usize,
    template: &PlantedRecordSpec,
    seed: u64,
) -> Vec<PlantedRecordSpec> {
    let mut rng = record_rng(seed, u64::MAX - 1);
    (0..n)
        .map(|_| PlantedRecordSpec {
            planted_confidence: rng.random::<f64>(),
            ..template.clone()
        })
        .collect()
}
