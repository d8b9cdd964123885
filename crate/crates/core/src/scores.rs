//! The candidate score set: which integer scores the model may emit and the
//! vocabulary token that emits each one.

use std::fmt;

use crate::error::{Error, Result};

/// Ordered set of admissible confidence scores with their token ids.
///
/// Scores are strictly increasing, token ids pairwise distinct, and the set
/// holds at least two entries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidateScoreSet {
    scores: Vec<u32>,
    token_ids: Vec<u32>,
}

impl CandidateScoreSet {
    pub fn new(scores: Vec<u32>, token_ids: Vec<u32>) -> Result<Self> {
        if scores.len() != token_ids.len() {
            return Err(Error::InvalidScoreSet(format!(
                "{} scores but {} token ids",
                scores.len(),
                token_ids.len()
            )));
        }
        if scores.len() < 2 {
            return Err(Error::InvalidScoreSet(
                "need at least two candidate scores".into(),
            ));
        }
        if scores.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidScoreSet(
                "scores must be strictly increasing".into(),
            ));
        }
        let mut sorted = token_ids.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidScoreSet(
                "token ids must be pairwise distinct".into(),
            ));
        }
        Ok(Self { scores, token_ids })
    }

    /// Scores `0..=max`, with score `s` emitted by token `s`.
    pub fn digits(max: u32) -> Result<Self> {
        let scores: Vec<u32> = (0..=max).collect();
        Self::new(scores.clone(), scores)
    }

    /// Parses a range such as `0-9`, `0-4` or `0-1` into a digit set.
    pub fn parse_range(spec: &str) -> Result<Self> {
        let (lo, hi) = spec
            .split_once('-')
            .ok_or_else(|| Error::InvalidScoreSet(format!("expected `lo-hi`, got `{spec}`")))?;
        let parse = |s: &str| {
            s.trim()
                .parse::<u32>()
                .map_err(|e| Error::InvalidScoreSet(format!("`{s}`: {e}")))
        };
        let (lo, hi) = (parse(lo)?, parse(hi)?);
        if lo > hi {
            return Err(Error::InvalidScoreSet(format!("empty range `{spec}`")));
        }
        let scores: Vec<u32> = (lo..=hi).collect();
        Self::new(scores.clone(), scores)
    }

    pub fn scores(&self) -> &[u32] {
        &self.scores
    }

    pub fn token_ids(&self) -> &[u32] {
        &self.token_ids
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn min_score(&self) -> u32 {
        self.scores[0]
    }

    pub fn max_score(&self) -> u32 {
        *self.scores.last().unwrap()
    }
}

impl fmt::Display for CandidateScoreSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.scores.windows(2).all(|w| w[1] == w[0] + 1) {
            write!(f, "{}-{}", self.min_score(), self.max_score())
        } else {
            let parts: Vec<String> = self.scores.iter().map(u32::to_string).collect();
            write!(f, "{{{}}}", parts.join(","))
        }
    }
}
