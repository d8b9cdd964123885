//! A tiny randomly initialized decoder-only transformer.
//!
//! Architecture: token embedding plus sinusoidal positions, then `L` blocks of
//! pre-RMS-normalized single-head causal attention and a two-layer `tanh`
//! feed-forward network, each with a residual connection. The unembedding is
//! a final RMS normalization followed by a linear projection to the
//! vocabulary; it is applied unchanged to every layer's hidden state.

use rand::Rng;
use rand_distr::StandardNormal;
use serde_json::Value;

use super::record_rng;
use crate::aggregation::{compute_confidence, AggregationConfig, LayerLogits};
use crate::dump::ScoreDumpRecord;
use crate::error::{Error, Result};
use crate::scores::CandidateScoreSet;

const NORM_EPS: f64 = 1e-6;
/// Stream reserved for parameter initialization.
const PARAM_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ToyConfig {
    pub vocab_size: usize,
    pub model_dim: usize,
    pub num_layers: usize,
    pub ffn_dim: usize,
    pub seed: u64,
}

impl Default for ToyConfig {
    fn default() -> Self {
        Self {
            vocab_size: 32,
            model_dim: 16,
            num_layers: 6,
            ffn_dim: 32,
            seed: 0,
        }
    }
}

impl ToyConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }
}

/// Row-major `rows x cols` matrix.
#[derive(Debug, Clone)]
struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    fn random(rows: usize, cols: usize, std: f64, rng: &mut impl Rng) -> Self {
        let data = (0..rows * cols)
            .map(|_| std * rng.sample::<f64, _>(StandardNormal))
            .collect();
        Self { rows, cols, data }
    }

    fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// `x * self` for a row vector `x` of length `rows`.
    fn apply(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for (xi, row) in x.iter().zip(self.data.chunks_exact(self.cols)) {
            for (o, w) in out.iter_mut().zip(row) {
                *o += xi * w;
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
struct Block {
    query: Matrix,
    key: Matrix,
    value: Matrix,
    output: Matrix,
    ffn_in: Matrix,
    ffn_out: Matrix,
}

#[derive(Debug, Clone)]
pub struct ToyTransformer {
    config: ToyConfig,
    embedding: Matrix,
    blocks: Vec<Block>,
    unembedding: Matrix,
}

fn rms_norm(x: &[f64]) -> Vec<f64> {
    let ms = x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64;
    let scale = 1.0 / (ms + NORM_EPS).sqrt();
    x.iter().map(|v| v * scale).collect()
}

fn add_assign(acc: &mut [f64], delta: &[f64]) {
    for (a, d) in acc.iter_mut().zip(delta) {
        *a += d;
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sinusoid(position: usize, dim: usize) -> Vec<f64> {
    (0..dim)
        .map(|i| {
            let freq = 10_000f64.powf(-((i / 2 * 2) as f64) / dim as f64);
            let angle = position as f64 * freq;
            if i % 2 == 0 {
                angle.sin()
            } else {
                angle.cos()
            }
        })
        .collect()
}

impl ToyTransformer {
    pub fn new(config: ToyConfig) -> Result<Self> {
        if config.num_layers == 0 || config.model_dim == 0 || config.ffn_dim == 0 {
            return Err(Error::InvalidSpec(
                "layers, model_dim and ffn_dim must be positive".into(),
            ));
        }
        if config.vocab_size <= 10 {
            return Err(Error::InvalidSpec(
                "vocabulary must exceed the ten reserved score tokens".into(),
            ));
        }
        let mut rng = record_rng(config.seed, PARAM_STREAM);
        let d = config.model_dim;
        let f = config.ffn_dim;
        let proj = 1.0 / (d as f64).sqrt();
        let embedding = Matrix::random(config.vocab_size, d, 1.0, &mut rng);
        let blocks = (0..config.num_layers)
            .map(|_| Block {
                query: Matrix::random(d, d, proj, &mut rng),
                key: Matrix::random(d, d, proj, &mut rng),
                value: Matrix::random(d, d, proj, &mut rng),
                output: Matrix::random(d, d, proj, &mut rng),
                ffn_in: Matrix::random(d, f, proj, &mut rng),
                ffn_out: Matrix::random(f, d, 1.0 / (f as f64).sqrt(), &mut rng),
            })
            .collect();
        let unembedding = Matrix::random(d, config.vocab_size, 2.0 * proj, &mut rng);
        Ok(Self {
            config,
            embedding,
            blocks,
            unembedding,
        })
    }

    pub fn config(&self) -> &ToyConfig {
        &self.config
    }

    pub fn num_layers(&self) -> usize {
        self.config.num_layers
    }

    fn embed(&self, tokens: &[usize]) -> Result<Vec<Vec<f64>>> {
        if tokens.is_empty() {
            return Err(Error::InvalidSpec("token sequence is empty".into()));
        }
        tokens
            .iter()
            .enumerate()
            .map(|(pos, &t)| {
                if t >= self.config.vocab_size {
                    return Err(Error::TokenOutOfRange {
                        token: t,
                        vocab_size: self.config.vocab_size,
                    });
                }
                let mut h = self.embedding.row(t).to_vec();
                add_assign(&mut h, &sinusoid(pos, self.config.model_dim));
                Ok(h)
            })
            .collect()
    }

    fn block_forward(&self, block: &Block, hidden: &mut [Vec<f64>]) {
        let d = self.config.model_dim as f64;
        let normed: Vec<Vec<f64>> = hidden.iter().map(|h| rms_norm(h)).collect();
        let q: Vec<Vec<f64>> = normed.iter().map(|x| block.query.apply(x)).collect();
        let k: Vec<Vec<f64>> = normed.iter().map(|x| block.key.apply(x)).collect();
        let v: Vec<Vec<f64>> = normed.iter().map(|x| block.value.apply(x)).collect();
        for (i, h) in hidden.iter_mut().enumerate() {
            // causal: position i attends to 0..=i
            let scores: Vec<f64> = (0..=i).map(|j| dot(&q[i], &k[j]) / d.sqrt()).collect();
            let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let weights: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
            let total: f64 = weights.iter().sum();
            let mut mixed = vec![0.0; self.config.model_dim];
            for (w, vj) in weights.iter().zip(&v) {
                for (m, x) in mixed.iter_mut().zip(vj) {
                    *m += w / total * x;
                }
            }
            add_assign(h, &block.output.apply(&mixed));
        }
        for h in hidden.iter_mut() {
            let inner: Vec<f64> = block
                .ffn_in
                .apply(&rms_norm(h))
                .into_iter()
                .map(f64::tanh)
                .collect();
            add_assign(h, &block.ffn_out.apply(&inner));
        }
    }

    /// Hidden state at the last position after each transformer layer.
    pub fn last_position_states(&self, tokens: &[usize]) -> Result<Vec<Vec<f64>>> {
        let mut hidden = self.embed(tokens)?;
        let mut states = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            self.block_forward(block, &mut hidden);
            states.push(hidden.last().unwrap().clone());
        }
        Ok(states)
    }

    /// Final normalization and projection to vocabulary logits.
    pub fn unembed(&self, hidden: &[f64]) -> Vec<f64> {
        self.unembedding.apply(&rms_norm(hidden))
    }

    /// Standard next-token logits at the last position.
    pub fn final_logits(&self, tokens: &[usize]) -> Result<Vec<f64>> {
        let mut hidden = self.embed(tokens)?;
        for block in &self.blocks {
            self.block_forward(block, &mut hidden);
        }
        Ok(self.unembed(hidden.last().unwrap()))
    }

    /// Full-vocabulary logits of every layer at the last position.
    pub fn layer_vocab_logits(&self, tokens: &[usize]) -> Result<Vec<Vec<f64>>> {
        Ok(self
            .last_position_states(tokens)?
            .iter()
            .map(|h| self.unembed(h))
            .collect())
    }

    /// Per-layer logits at the last position restricted to the score tokens.
    pub fn forward_with_layers(
        &self,
        tokens: &[usize],
        score_set: &CandidateScoreSet,
    ) -> Result<LayerLogits> {
        let ids: Vec<usize> = score_set.token_ids().iter().map(|&t| t as usize).collect();
        if let Some(&bad) = ids.iter().find(|&&t| t >= self.config.vocab_size) {
            return Err(Error::TokenOutOfRange {
                token: bad,
                vocab_size: self.config.vocab_size,
            });
        }
        let rows = self
            .layer_vocab_logits(tokens)?
            .into_iter()
            .map(|full| ids.iter().map(|&t| full[t]).collect())
            .collect();
        LayerLogits::new(rows)
    }
}

/// Self-evaluation records produced by running random prompts through `model`.
///
/// Prompts avoid the score tokens. The toy model has no ground truth, so each
/// label is drawn as Bernoulli of the all-layer expectation confidence. The
/// prompt tokens are kept in `meta.tokens`.
pub fn transformer_dataset(
    model: &ToyTransformer,
    n: usize,
    score_set: &CandidateScoreSet,
    seed: u64,
) -> Result<Vec<ScoreDumpRecord>> {
    let first_free = score_set
        .token_ids()
        .iter()
        .map(|&t| t as usize + 1)
        .max()
        .unwrap_or(0)
        .max(10);
    if first_free >= model.config.vocab_size {
        return Err(Error::InvalidSpec(
            "vocabulary has no room for non-score prompt tokens".into(),
        ));
    }
    let all_layers = AggregationConfig::eagle(model.num_layers());
    (0..n)
        .map(|i| {
            let mut rng = record_rng(seed, i as u64);
            let len = rng.random_range(3..=12);
            let tokens: Vec<usize> = (0..len)
                .map(|_| rng.random_range(first_free..model.config.vocab_size))
                .collect();
            let logits = model.forward_with_layers(&tokens, score_set)?;
            let p = compute_confidence(&logits, &all_layers, score_set)?.normalized;
            let correct = rng.random_bool(p);
            let mut record = ScoreDumpRecord::new(format!("toy-{i:06}"), Some(correct), logits);
            record
                .meta
                .insert("tokens".into(), Value::from(tokens));
            record
                .meta
                .insert("model_seed".into(), Value::from(model.config.seed));
            Ok(record)
        })
        .collect()
}
