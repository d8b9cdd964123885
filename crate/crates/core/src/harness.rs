//! Batch evaluation over dump records: single-method evaluation, the
//! six-way ablation, layer-range sweeps, `k` tuning, answer selection and
//! the score-range study.
//!
//! Metrics in [`MethodResult`] are reported on the ×100 scale.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::aggregation::{
    compute_confidence, AggregationConfig, Combine, ConfidenceScore, Decision, LayerSelection,
};
use crate::dump::ScoreDumpRecord;
use crate::error::{Error, Result};
use crate::metrics::{auroc, ece, EvalRecord};
use crate::scores::CandidateScoreSet;

#[derive(Debug, Clone, PartialEq)]
pub struct MethodResult {
    pub label: String,
    /// ECE ×100.
    pub ece: f64,
    /// AUROC ×100.
    pub auroc: f64,
    pub count: usize,
    pub config: AggregationConfig,
}

impl MethodResult {
    /// `(ECE, AUROC)` cells with one decimal, as in a results table.
    pub fn cells(&self) -> (String, String) {
        (format!("{:.1}", self.ece), format!("{:.1}", self.auroc))
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "method": self.label,
            "config": self.config.describe(),
            "ece": self.ece,
            "auroc": self.auroc,
            "count": self.count,
        })
    }
}

pub fn format_results_table(results: &[MethodResult]) -> String {
    let width = results
        .iter()
        .map(|r| r.label.len())
        .chain(std::iter::once("Method".len()))
        .max()
        .unwrap_or(6);
    let mut out = String::new();
    let _ = writeln!(out, "{:<width$}  {:>6}  {:>6}  {:>7}", "Method", "ECE", "AUROC", "N");
    for r in results {
        let (e, a) = r.cells();
        let _ = writeln!(out, "{:<width$}  {:>6}  {:>6}  {:>7}", r.label, e, a, r.count);
    }
    out
}

pub fn results_csv(results: &[MethodResult]) -> String {
    let mut out = String::from("method,config,ece,auroc,count\n");
    for r in results {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.label,
            r.config.describe(),
            r.ece,
            r.auroc,
            r.count
        );
    }
    out
}

fn num_layers(records: &[ScoreDumpRecord]) -> Result<usize> {
    records
        .first()
        .map(|r| r.layer_logits.num_layers())
        .ok_or(Error::EmptyDataset)
}

/// Confidence of every record, in record order.
pub fn score_records(
    records: &[ScoreDumpRecord],
    config: &AggregationConfig,
    score_set: &CandidateScoreSet,
) -> Result<Vec<ConfidenceScore>> {
    records
        .iter()
        .map(|r| {
            compute_confidence(&r.layer_logits, config, score_set)
                .map_err(|e| e.context(format!("record `{}`", r.id)))
        })
        .collect()
}

/// Normalized confidences paired with labels; unlabeled records are an error.
pub fn eval_records(
    records: &[ScoreDumpRecord],
    config: &AggregationConfig,
    score_set: &CandidateScoreSet,
) -> Result<Vec<EvalRecord>> {
    let scores = score_records(records, config, score_set)?;
    records
        .iter()
        .zip(scores)
        .map(|(r, c)| {
            let correct = r.correct.ok_or_else(|| Error::Unlabeled { id: r.id.clone() })?;
            EvalRecord::new(c.normalized, correct)
        })
        .collect()
}

fn evaluate_labeled(
    label: String,
    records: &[ScoreDumpRecord],
    config: &AggregationConfig,
    score_set: &CandidateScoreSet,
    bins: usize,
) -> Result<MethodResult> {
    if records.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let evals = eval_records(records, config, score_set)?;
    let e = ece(&evals, bins)?;
    let a = auroc(&evals).map_err(|err| err.context(format!("AUROC for {label}")))?;
    Ok(MethodResult {
        label,
        ece: 100.0 * e,
        auroc: 100.0 * a,
        count: records.len(),
        config: config.clone(),
    })
}

/// ECE and AUROC of one configuration over a labeled dump.
pub fn evaluate(
    records: &[ScoreDumpRecord],
    config: &AggregationConfig,
    score_set: &CandidateScoreSet,
    bins: usize,
) -> Result<MethodResult> {
    evaluate_labeled(config.describe(), records, config, score_set, bins)
}

/// The six ablation configurations, in reporting order. `k` is the last-n depth.
pub fn ablation_configs(k: usize) -> Vec<(&'static str, AggregationConfig)> {
    let last_n = AggregationConfig::eagle(k);
    vec![
        (
            "last layer / max",
            AggregationConfig::last_layer(Decision::MaxScore),
        ),
        (
            "last layer / exp",
            AggregationConfig::last_layer(Decision::Expectation),
        ),
        (
            "last-n / prob agg / max",
            last_n
                .clone()
                .with_combine(Combine::Probs)
                .with_decision(Decision::MaxScore),
        ),
        (
            "last-n / prob agg / exp",
            last_n.clone().with_combine(Combine::Probs),
        ),
        (
            "last-n / logits agg / max",
            last_n.clone().with_decision(Decision::MaxScore),
        ),
        ("last-n / logits agg / exp", last_n),
    ]
}

pub fn ablate(
    records: &[ScoreDumpRecord],
    score_set: &CandidateScoreSet,
    k: usize,
    bins: usize,
) -> Result<Vec<MethodResult>> {
    ablation_configs(k)
        .into_iter()
        .map(|(label, config)| evaluate_labeled(label.to_string(), records, &config, score_set, bins))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepCell {
    pub start: usize,
    pub end: usize,
    /// ×100
    pub ece: f64,
    /// ×100
    pub auroc: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepGrid {
    pub num_layers: usize,
    /// Ordered by `(start, end)`.
    pub cells: Vec<SweepCell>,
}

impl SweepGrid {
    pub fn cell(&self, start: usize, end: usize) -> Option<&SweepCell> {
        self.cells.iter().find(|c| c.start == start && c.end == end)
    }

    /// Cell with the lowest ECE; ties go to the earliest cell.
    pub fn best_ece(&self) -> Option<&SweepCell> {
        self.cells
            .iter()
            .fold(None, |best: Option<&SweepCell>, c| match best {
                Some(b) if b.ece <= c.ece => Some(b),
                _ => Some(c),
            })
    }

    /// Long-form `start,end,ece,auroc` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("start,end,ece,auroc\n");
        for c in &self.cells {
            let _ = writeln!(out, "{},{},{},{}", c.start, c.end, c.ece, c.auroc);
        }
        out
    }
}

/// Evaluates every contiguous layer range `start..=end`.
pub fn sweep(
    records: &[ScoreDumpRecord],
    score_set: &CandidateScoreSet,
    decision: Decision,
    combine: Combine,
    bins: usize,
) -> Result<SweepGrid> {
    let layers = num_layers(records)?;
    let mut cells = Vec::with_capacity(layers * (layers + 1) / 2);
    for start in 0..layers {
        for end in start..layers {
            let config = AggregationConfig::eagle(1)
                .with_layers(LayerSelection::Range { start, end })
                .with_combine(combine)
                .with_decision(decision);
            let r = evaluate(records, &config, score_set, bins)?;
            cells.push(SweepCell {
                start,
                end,
                ece: r.ece,
                auroc: r.auroc,
            });
        }
    }
    Ok(SweepGrid {
        num_layers: layers,
        cells,
    })
}

/// Result of tuning the last-n depth; persisted as a small JSON file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TunedConfig {
    pub k: usize,
    pub num_layers: usize,
    /// ECE ×100 at the chosen `k` on the tuning dump.
    pub ece: f64,
}

impl TunedConfig {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("tuned config serializes");
        std::fs::write(path, text + "\n")?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            line: e.line(),
            message: e.to_string(),
        })
    }
}

/// Chooses `k in 1..=L` minimizing ECE of the full method; ties go to the smaller `k`.
pub fn tune_k(
    records: &[ScoreDumpRecord],
    score_set: &CandidateScoreSet,
    bins: usize,
) -> Result<TunedConfig> {
    let layers = num_layers(records)?;
    let mut best: Option<(usize, f64)> = None;
    for k in 1..=layers {
        let evals = eval_records(records, &AggregationConfig::eagle(k), score_set)?;
        let e = ece(&evals, bins)?;
        if best.is_none_or(|(_, b)| e < b) {
            best = Some((k, e));
        }
    }
    let (k, e) = best.expect("at least one layer");
    Ok(TunedConfig {
        k,
        num_layers: layers,
        ece: 100.0 * e,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupChoice {
    pub group: String,
    pub chosen_id: String,
    pub confidence: ConfidenceScore,
    pub candidates: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionReport {
    pub choices: Vec<GroupChoice>,
    /// Fraction of groups whose chosen record is correct, when all records are labeled.
    pub selected_accuracy: Option<f64>,
    /// Same, always picking the first record of each group.
    pub baseline_accuracy: Option<f64>,
}

/// Picks the most confident record of each answer group.
///
/// Groups appear in order of first occurrence; a record without a group is
/// its own singleton group keyed by its id. Ties go to the earliest record.
pub fn select_answers(
    records: &[ScoreDumpRecord],
    config: &AggregationConfig,
    score_set: &CandidateScoreSet,
) -> Result<SelectionReport> {
    let groups = group_records(records);
    select_from_groups(&groups, config, score_set)
}

fn group_records(records: &[ScoreDumpRecord]) -> Vec<(String, Vec<&ScoreDumpRecord>)> {
    let mut order: Vec<(String, Vec<&ScoreDumpRecord>)> = Vec::new();
    let mut index: HashMap<&str, usize> = HashMap::new();
    for r in records {
        let key = r.answer_group.as_deref().unwrap_or(&r.id);
        let slot = *index.entry(key).or_insert_with(|| {
            order.push((key.to_string(), Vec::new()));
            order.len() - 1
        });
        order[slot].1.push(r);
    }
    order
}

/// As [`select_answers`] with explicit groups.
pub fn select_from_groups(
    groups: &[(String, Vec<&ScoreDumpRecord>)],
    config: &AggregationConfig,
    score_set: &CandidateScoreSet,
) -> Result<SelectionReport> {
    if groups.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut choices = Vec::with_capacity(groups.len());
    let mut labeled = true;
    let (mut selected_hits, mut baseline_hits) = (0usize, 0usize);
    for (group, members) in groups {
        let first = members.first().ok_or_else(|| Error::EmptyGroup(group.clone()))?;
        let mut best: Option<(&ScoreDumpRecord, ConfidenceScore)> = None;
        for r in members {
            let c = compute_confidence(&r.layer_logits, config, score_set)
                .map_err(|e| e.context(format!("record `{}`", r.id)))?;
            if best.is_none_or(|(_, b)| c.raw > b.raw) {
                best = Some((r, c));
            }
            labeled &= r.correct.is_some();
        }
        let (chosen, confidence) = best.expect("non-empty group");
        if labeled {
            selected_hits += usize::from(chosen.correct == Some(true));
            baseline_hits += usize::from(first.correct == Some(true));
        }
        choices.push(GroupChoice {
            group: group.clone(),
            chosen_id: chosen.id.clone(),
            confidence,
            candidates: members.len(),
        });
    }
    let n = groups.len() as f64;
    let (selected_accuracy, baseline_accuracy) = if labeled {
        (
            Some(selected_hits as f64 / n),
            Some(baseline_hits as f64 / n),
        )
    } else {
        (None, None)
    };
    Ok(SelectionReport {
        choices,
        selected_accuracy,
        baseline_accuracy,
    })
}

/// Evaluates one dump per score range; rows in descending range size.
pub fn score_range_study(
    dumps: &[(CandidateScoreSet, Vec<ScoreDumpRecord>)],
    config: &AggregationConfig,
    bins: usize,
) -> Result<Vec<MethodResult>> {
    let mut order: Vec<&(CandidateScoreSet, Vec<ScoreDumpRecord>)> = dumps.iter().collect();
    order.sort_by_key(|(set, _)| std::cmp::Reverse(set.len()));
    order
        .into_iter()
        .map(|(set, records)| {
            evaluate_labeled(format!("scores {set}"), records, config, set, bins)
        })
        .collect()
}
