//! Ranking and threshold metrics plus build-time accounting.

use std::collections::BTreeMap;
use std::fmt;
use std::time::Instant;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("AUC needs at least one positive and one negative (got {pos} pos, {neg} neg)")]
    SingleClass { pos: usize, neg: usize },
    #[error("scores and labels differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("non-finite score at index {0}")]
    NonFinite(usize),
}

/// Area under the ROC curve in Mann–Whitney form: the fraction of
/// (positive, negative) pairs ranked correctly, ties counting one half.
/// Computed from rank sums with mid-ranks for ties in O(n log n).
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64, MetricsError> {
    if scores.len() != labels.len() {
        return Err(MetricsError::LengthMismatch(scores.len(), labels.len()));
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(MetricsError::NonFinite(i));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(MetricsError::SingleClass {
            pos: n_pos,
            neg: n_neg,
        });
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    let mut pos_rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1 ..= j share their mean
        let mid_rank = (i + 1 + j) as f64 / 2.0;
        let pos_in_block = order[i..j].iter().filter(|&&k| labels[k]).count();
        pos_rank_sum += mid_rank * pos_in_block as f64;
        i = j;
    }
    let u = pos_rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// AUC per group key (e.g. prefix length); `None` where a group is single-class.
pub fn auc_by_group(
    scores: &[f64],
    labels: &[bool],
    groups: &[usize],
) -> BTreeMap<usize, Option<f64>> {
    let mut split: BTreeMap<usize, (Vec<f64>, Vec<bool>)> = BTreeMap::new();
    for ((&s, &l), &g) in scores.iter().zip(labels).zip(groups) {
        let e = split.entry(g).or_default();
        e.0.push(s);
        e.1.push(l);
    }
    split
        .into_iter()
        .map(|(g, (s, l))| (g, auc(&s, &l).ok()))
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl Confusion {
    /// Counts with "predicted positive" meaning `score >= threshold`.
    pub fn at(scores: &[f64], labels: &[bool], threshold: f64) -> Self {
        let mut c = Confusion::default();
        for (&s, &l) in scores.iter().zip(labels) {
            match (s >= threshold, l) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fn_ += 1,
            }
        }
        c
    }

    pub fn total(&self) -> usize {
        self.tp + self.tn + self.fp + self.fn_
    }

    /// (TP + TN) / (TP + TN + FP + FN); 0 on empty input.
    pub fn accuracy(&self) -> f64 {
        match self.total() {
            0 => 0.0,
            n => (self.tp + self.tn) as f64 / n as f64,
        }
    }

    pub fn f1_positive(&self) -> f64 {
        f1(self.tp, self.fp, self.fn_)
    }

    pub fn f1_negative(&self) -> f64 {
        f1(self.tn, self.fn_, self.fp)
    }

    /// Unweighted mean of the per-class F1 scores.
    pub fn macro_f1(&self) -> f64 {
        (self.f1_positive() + self.f1_negative()) / 2.0
    }
}

// A class that is neither present nor predicted agrees perfectly.
fn f1(hit: usize, false_alarm: usize, miss: usize) -> f64 {
    let denom = 2 * hit + false_alarm + miss;
    if denom == 0 {
        1.0
    } else {
        2.0 * hit as f64 / denom as f64
    }
}

pub const DEFAULT_THRESHOLD: f64 = 0.5;

pub fn confusion_at(scores: &[f64], labels: &[bool], threshold: f64) -> Confusion {
    Confusion::at(scores, labels, threshold)
}

pub fn accuracy(scores: &[f64], labels: &[bool]) -> f64 {
    Confusion::at(scores, labels, DEFAULT_THRESHOLD).accuracy()
}

pub fn f_measure(scores: &[f64], labels: &[bool]) -> f64 {
    Confusion::at(scores, labels, DEFAULT_THRESHOLD).macro_f1()
}

/// Runs `f` and returns its result with the elapsed wall-clock seconds.
pub fn stopwatch<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed().as_secs_f64())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Strategy {
    S0,
    S1,
    S2,
    S3,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [Strategy::S0, Strategy::S1, Strategy::S2, Strategy::S3];

    pub fn model_name(self) -> &'static str {
        match self {
            Strategy::S0 => "M0",
            Strategy::S1 => "M1",
            Strategy::S2 => "M2",
            Strategy::S3 => "M3",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            Strategy::S0 => "do nothing",
            Strategy::S1 => "re-train, no hyperopt",
            Strategy::S2 => "full re-train",
            Strategy::S3 => "incremental update",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

/// Seconds spent building a strategy's model. Only the components that the
/// strategy uses are non-zero; [`TimeBreakdown::total`] sums them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeBreakdown {
    pub strategy: Strategy,
    pub m0_build: f64,
    pub retrain: f64,
    pub hyperopt: f64,
    pub incremental_update: f64,
}

impl TimeBreakdown {
    fn new(strategy: Strategy, m0_build: f64) -> Self {
        TimeBreakdown {
            strategy,
            m0_build,
            retrain: 0.0,
            hyperopt: 0.0,
            incremental_update: 0.0,
        }
    }

    pub fn do_nothing(m0_build: f64) -> Self {
        Self::new(Strategy::S0, m0_build)
    }

    pub fn retrain(m0_build: f64, retrain: f64) -> Self {
        TimeBreakdown {
            retrain,
            ..Self::new(Strategy::S1, m0_build)
        }
    }

    pub fn full_retrain(m0_build: f64, hyperopt: f64, retrain: f64) -> Self {
        TimeBreakdown {
            hyperopt,
            retrain,
            ..Self::new(Strategy::S2, m0_build)
        }
    }

    pub fn incremental(m0_build: f64, incremental_update: f64) -> Self {
        TimeBreakdown {
            incremental_update,
            ..Self::new(Strategy::S3, m0_build)
        }
    }

    pub fn total(&self) -> f64 {
        match self.strategy {
            Strategy::S0 => self.m0_build,
            Strategy::S1 => self.m0_build + self.retrain,
            Strategy::S2 => self.m0_build + self.hyperopt + self.retrain,
            Strategy::S3 => self.m0_build + self.incremental_update,
        }
    }
}

/// `hh:mm:ss`, hours unbounded.
pub fn format_hms(seconds: f64) -> String {
    let s = seconds.max(0.0).round() as u64;
    format!("{:02}:{:02}:{:02}", s / 3600, (s / 60) % 60, s % 60)
}

/// Relative change of `model` against `baseline`: (Mi − M0) / M0.
pub fn relative_gain(model: f64, baseline: f64) -> f64 {
    (model - baseline) / baseline
}
