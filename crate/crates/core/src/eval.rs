//! Confusion matrices, the standard binary metrics, and ROC/AUC.

use serde::Serialize;
use thiserror::Error;

use crate::pipeline::{DetectionRecord, Truth};

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("record for frame {0} has unknown ground truth")]
    UnknownTruth(usize),
    #[error("confusion matrix is empty")]
    EmptyMatrix,
    #[error("ROC needs both attacked and clean records")]
    SingleClass,
    #[error("non-finite score for frame {0}")]
    NonFiniteScore(usize),
}

/// Which ground-truth class counts as "positive".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PositiveClass {
    Attacked,
    Clean,
}

impl PositiveClass {
    pub fn as_str(self) -> &'static str {
        match self {
            PositiveClass::Attacked => "attacked",
            PositiveClass::Clean => "clean",
        }
    }

    pub fn other(self) -> Self {
        match self {
            PositiveClass::Attacked => PositiveClass::Clean,
            PositiveClass::Clean => PositiveClass::Attacked,
        }
    }
}

impl std::str::FromStr for PositiveClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "attacked" => Ok(PositiveClass::Attacked),
            "clean" => Ok(PositiveClass::Clean),
            other => Err(format!("unknown positive class `{other}` (attacked|clean)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
    pub positive_class: PositiveClass,
}

impl ConfusionMatrix {
    /// Counts with "attacked" as the positive class.
    pub fn from_attacked_counts(tp: usize, fp: usize, tn: usize, fn_: usize) -> Self {
        Self {
            tp,
            fp,
            tn,
            fn_,
            positive_class: PositiveClass::Attacked,
        }
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    /// The same predictions seen from the other positive class.
    pub fn swapped(&self) -> Self {
        Self {
            tp: self.tn,
            fp: self.fn_,
            tn: self.tp,
            fn_: self.fp,
            positive_class: self.positive_class.other(),
        }
    }

    /// Re-expresses the matrix with `class` as positive.
    pub fn with_positive(&self, class: PositiveClass) -> Self {
        if self.positive_class == class {
            *self
        } else {
            self.swapped()
        }
    }
}

pub fn confusion(
    records: &[DetectionRecord],
    positive: PositiveClass,
) -> Result<ConfusionMatrix, EvalError> {
    let mut m = ConfusionMatrix::from_attacked_counts(0, 0, 0, 0);
    for r in records {
        let attacked = match r.truth {
            Truth::Attacked => true,
            Truth::Clean => false,
            Truth::Unknown => return Err(EvalError::UnknownTruth(r.frame_index)),
        };
        match (attacked, r.flagged) {
            (true, true) => m.tp += 1,
            (false, true) => m.fp += 1,
            (false, false) => m.tn += 1,
            (true, false) => m.fn_ += 1,
        }
    }
    Ok(m.with_positive(positive))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub positive_class: PositiveClass,
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub err: f64,
    pub acc: f64,
    pub sn: f64,
    pub sp: f64,
    pub prec: f64,
    pub fpr: f64,
    pub f1: f64,
    pub auc: Option<f64>,
    /// Set when any ratio had a zero denominator and fell back to a convention.
    pub degenerate: bool,
}

pub fn metrics(m: &ConfusionMatrix) -> Result<MetricsReport, EvalError> {
    let total = m.total();
    if total == 0 {
        return Err(EvalError::EmptyMatrix);
    }
    let mut degenerate = false;
    // 0/0 falls back to `fallback` and marks the report.
    let mut ratio = |num: usize, den: usize, fallback: f64| {
        if den == 0 {
            degenerate = true;
            fallback
        } else {
            num as f64 / den as f64
        }
    };
    let sn = ratio(m.tp, m.tp + m.fn_, 1.0);
    let sp = ratio(m.tn, m.tn + m.fp, 1.0);
    let prec = ratio(m.tp, m.tp + m.fp, 1.0);
    let fpr = ratio(m.fp, m.tn + m.fp, 0.0);
    let f1 = if prec + sn > 0.0 {
        2.0 * prec * sn / (prec + sn)
    } else {
        degenerate = true;
        0.0
    };
    let total = total as f64;
    Ok(MetricsReport {
        positive_class: m.positive_class,
        tp: m.tp,
        fp: m.fp,
        tn: m.tn,
        fn_: m.fn_,
        err: (m.fp + m.fn_) as f64 / total,
        acc: (m.tp + m.tn) as f64 / total,
        sn,
        sp,
        prec,
        fpr,
        f1,
        auc: None,
        degenerate,
    })
}

impl MetricsReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("metrics serialize");
        s.push('\n');
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    /// `(fpr, tpr)` from `(0, 0)` to `(1, 1)`.
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
}

/// ROC of the anomaly score with "attacked" as the positive class.
pub fn roc(records: &[DetectionRecord]) -> Result<RocCurve, EvalError> {
    let mut scored = Vec::with_capacity(records.len());
    for r in records {
        let attacked = match r.truth {
            Truth::Attacked => true,
            Truth::Clean => false,
            Truth::Unknown => return Err(EvalError::UnknownTruth(r.frame_index)),
        };
        if !r.score.is_finite() {
            return Err(EvalError::NonFiniteScore(r.frame_index));
        }
        scored.push((r.score, attacked));
    }
    let pos = scored.iter().filter(|s| s.1).count();
    let neg = scored.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(EvalError::SingleClass);
    }
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < scored.len() {
        // Every record sharing this score crosses the threshold together.
        let s = scored[i].0;
        while i < scored.len() && scored[i].0 == s {
            if scored[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push((fp as f64 / neg as f64, tp as f64 / pos as f64));
    }
    let auc = points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0)
        .sum();
    Ok(RocCurve { points, auc })
}
