//! Confidence estimation for LLM self-evaluation from layer-aggregated
//! score-token logits, with calibration metrics, a line-delimited dump
//! format, deterministic toy data sources and an evaluation harness.

pub mod aggregation;
pub mod dump;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod scores;
pub mod toy;

pub use aggregation::{
    compute_confidence, AggregationConfig, Combine, ConfidenceDistribution, ConfidenceScore,
    Decision, LayerLogits, LayerSelection, Weights,
};
pub use dump::{DumpHeader, ScoreDumpRecord};
pub use error::{Error, Result};
pub use metrics::EvalRecord;
pub use scores::CandidateScoreSet;
