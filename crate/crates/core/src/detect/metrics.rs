//! Confusion-matrix metrics for the two-class troll/organic problem.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::ingest::Label;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Metrics {
    pub troll: ClassMetrics,
    pub organic: ClassMetrics,
    pub macro_f1: f64,
    /// Set when some precision, recall or F1 had a zero denominator and was
    /// defined as 0.
    pub zero_division: bool,
}

impl Metrics {
    pub fn class(&self, label: Label) -> &ClassMetrics {
        match label {
            Label::Troll => &self.troll,
            Label::Organic => &self.organic,
        }
    }
}

fn ratio(num: usize, den: usize, flag: &mut bool) -> f64 {
    if den == 0 {
        *flag = true;
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn class_metrics(y_true: &[Label], y_pred: &[Label], class: Label, flag: &mut bool) -> ClassMetrics {
    let mut tp = 0;
    let mut fp = 0;
    let mut fn_ = 0;
    for (t, p) in y_true.iter().zip(y_pred) {
        match (*t == class, *p == class) {
            (true, true) => tp += 1,
            (false, true) => fp += 1,
            (true, false) => fn_ += 1,
            (false, false) => {}
        }
    }
    let precision = ratio(tp, tp + fp, flag);
    let recall = ratio(tp, tp + fn_, flag);
    let f1 = if precision + recall == 0.0 {
        *flag = true;
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    ClassMetrics { precision, recall, f1, support: tp + fn_ }
}

/// Per-class precision, recall and F1 plus their unweighted mean F1.
pub fn metrics(y_true: &[Label], y_pred: &[Label]) -> Result<Metrics> {
    if y_true.len() != y_pred.len() {
        return Err(Error::LengthMismatch(y_true.len(), y_pred.len()));
    }
    if y_true.is_empty() {
        return Err(Error::EmptyList);
    }
    let mut zero_division = false;
    let troll = class_metrics(y_true, y_pred, Label::Troll, &mut zero_division);
    let organic = class_metrics(y_true, y_pred, Label::Organic, &mut zero_division);
    Ok(Metrics { troll, organic, macro_f1: (troll.f1 + organic.f1) / 2.0, zero_division })
}
