//! Interval overlap and the classification and localization scores built on it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A closed time interval in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub start_s: f64,
    pub end_s: f64,
}

impl Interval {
    pub fn new(start_s: f64, end_s: f64) -> Result<Self> {
        if !(start_s.is_finite() && end_s.is_finite()) || start_s > end_s {
            return Err(Error::contract(format!("invalid interval [{start_s}, {end_s}]")));
        }
        Ok(Interval { start_s, end_s })
    }

    pub fn len(&self) -> f64 {
        self.end_s - self.start_s
    }

    pub fn contains(&self, t: f64) -> bool {
        self.start_s <= t && t <= self.end_s
    }
}

/// Temporal intersection over union. Two zero-length intervals score 1 when they
/// are the same point and 0 otherwise.
pub fn iou(pred: Interval, gt: Interval) -> f64 {
    let inter = (pred.end_s.min(gt.end_s) - pred.start_s.max(gt.start_s)).max(0.0);
    let union = pred.len() + gt.len() - inter;
    if union <= 0.0 {
        return if pred == gt { 1.0 } else { 0.0 };
    }
    inter / union
}

/// Best IoU of `pred` against any ground-truth event.
pub fn multi_gt_iou(pred: Interval, gts: &[Interval]) -> Result<f64> {
    if gts.is_empty() {
        return Err(Error::contract("multi-GT IoU needs at least one ground-truth interval"));
    }
    Ok(gts.iter().map(|&g| iou(pred, g)).fold(0.0, f64::max))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassificationScores {
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    pub counts: Confusion,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Binary F1 of the positive class.
pub fn classification_f1(predictions: &[u8], labels: &[u8]) -> Result<ClassificationScores> {
    if predictions.len() != labels.len() {
        return Err(Error::contract(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    let mut c = Confusion::default();
    for (&p, &y) in predictions.iter().zip(labels) {
        match (p != 0, y != 0) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    let precision = ratio(c.tp, c.tp + c.fp);
    let recall = ratio(c.tp, c.tp + c.fn_);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(ClassificationScores {
        f1,
        precision,
        recall,
        counts: c,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalizationScores {
    pub precision_at: f64,
    pub mean_iou: f64,
    pub n: usize,
}

/// Fraction of samples whose multi-GT IoU reaches `threshold`, and the mean multi-GT IoU.
pub fn localization_metrics(results: &[(Interval, Vec<Interval>)], threshold: f64) -> Result<LocalizationScores> {
    if results.is_empty() {
        return Err(Error::contract("localization metrics over an empty set"));
    }
    let mut hits = 0usize;
    let mut total = 0.0;
    for (pred, gts) in results {
        let s = multi_gt_iou(*pred, gts)?;
        hits += usize::from(s >= threshold);
        total += s;
    }
    Ok(LocalizationScores {
        precision_at: hits as f64 / results.len() as f64,
        mean_iou: total / results.len() as f64,
        n: results.len(),
    })
}

/// Fraction of samples whose peak time lies inside some ground-truth interval
/// (endpoints inclusive).
pub fn peak_gt(results: &[(f64, Vec<Interval>)]) -> Result<f64> {
    if results.is_empty() {
        return Err(Error::contract("Peak-GT over an empty set"));
    }
    let mut hits = 0usize;
    for (peak, gts) in results {
        if gts.is_empty() {
            return Err(Error::contract("Peak-GT sample without ground truth"));
        }
        hits += usize::from(gts.iter().any(|g| g.contains(*peak)));
    }
    Ok(hits as f64 / results.len() as f64)
}
